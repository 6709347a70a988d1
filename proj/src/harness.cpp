#include "fairfed/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>

#include "fairfed/error.hpp"
#include "fairfed/objective.hpp"
#include "file_io.hpp"
#include "json_io.hpp"

namespace fairfed {
namespace {

using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

json field_aggregate_to_json(const FieldAggregate& f) {
  return json{{"mean", f.mean}, {"stdev", f.stdev}};
}

FieldAggregate field_aggregate_from_json(const json& j, const std::string& where) {
  FieldAggregate f;
  f.mean = detail::require_double(j, "mean", where);
  f.stdev = detail::require_double(j, "stdev", where);
  return f;
}

json stats_aggregate_to_json(const StatsAggregate& s) {
  json j;
  j["mean_data_weighted"] = field_aggregate_to_json(s.mean_data_weighted);
  j["mean_device"] = field_aggregate_to_json(s.mean_device);
  j["worst10"] = field_aggregate_to_json(s.worst10);
  j["best10"] = field_aggregate_to_json(s.best10);
  j["variance"] = field_aggregate_to_json(s.variance);
  j["num_runs"] = s.num_runs;
  return j;
}

StatsAggregate stats_aggregate_from_json(const json& j, const std::string& where) {
  StatsAggregate s;
  s.mean_data_weighted =
      field_aggregate_from_json(detail::require_field(j, "mean_data_weighted", where), where);
  s.mean_device = field_aggregate_from_json(detail::require_field(j, "mean_device", where), where);
  s.worst10 = field_aggregate_from_json(detail::require_field(j, "worst10", where), where);
  s.best10 = field_aggregate_from_json(detail::require_field(j, "best10", where), where);
  s.variance = field_aggregate_from_json(detail::require_field(j, "variance", where), where);
  s.num_runs = detail::require_int(j, "num_runs", where);
  return s;
}

std::map<int, double> device_q_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw Error(where + ": \"device_q\" must be an object");
  std::map<int, double> out;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_number()) throw Error(where + ": \"device_q\" has a non-number entry");
    try {
      std::size_t used = 0;
      const int id = std::stoi(k, &used);
      if (used != k.size() || id < 0) throw std::invalid_argument(k);
      out[id] = v.get<double>();
    } catch (const std::exception&) {
      throw Error(where + ": bad device id key \"" + k + "\" in device_q");
    }
  }
  return out;
}

DistributionStats stats_for_runs_split(const RunResult& run, Split split) {
  return distribution_stats(distribution_from_run(run, split));
}

}  // namespace

std::vector<double> default_eta_grid() {
  return {1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001};
}

double select_step_size(std::span<const double> eta_grid,
                        const std::function<ProbeOutcome(double)>& probe) {
  if (eta_grid.empty()) throw Error("select_step_size: empty eta grid");
  if (!probe) throw Error("select_step_size: no probe");
  double best_eta = 0.0;
  double best_final = std::numeric_limits<double>::infinity();
  bool any = false;
  for (double eta : eta_grid) {
    if (!(eta > 0.0) || !std::isfinite(eta)) {
      throw Error("select_step_size: eta must be > 0, got " + std::to_string(eta));
    }
    const ProbeOutcome outcome = probe(eta);
    if (!(outcome.maximum <= 10.0 * outcome.initial)) continue;  // diverged
    if (!std::isfinite(outcome.final_value)) continue;
    if (outcome.final_value < best_final) {
      best_final = outcome.final_value;
      best_eta = eta;
      any = true;
    }
  }
  if (!any) {
    throw Error("select_step_size: every step-size candidate diverged; widen the eta grid");
  }
  return best_eta;
}

double estimate_L(const FederatedDataset& dataset, std::span<const double> eta_grid,
                  int probe_rounds) {
  if (probe_rounds < 1) throw Error("estimate_L: probe_rounds must be >= 1");
  dataset.validate();
  const ModelSpec model = default_model(dataset);
  const std::vector<double> zeros(param_size(model), 0.0);
  const double initial = training_objective(0.0, model, dataset, zeros);

  const auto probe = [&](double eta) {
    SolverConfig cfg;
    cfg.algorithm = Algorithm::QFedSgd;
    cfg.q = 0.0;
    cfg.L = 1.0 / eta;
    cfg.eta = eta;
    cfg.devices_per_round = std::min(10, dataset.num_devices());
    cfg.max_rounds = probe_rounds;
    cfg.patience = probe_rounds + 1;
    cfg.seed = 0;  // probes share one pinned seed so candidates are comparable
    ProbeOutcome outcome;
    outcome.initial = initial;
    try {
      const RunResult r = run(cfg, dataset, model, {});
      outcome.maximum = initial;
      for (double v : r.objective_history) outcome.maximum = std::max(outcome.maximum, v);
      outcome.final_value =
          r.objective_history.empty() ? initial : r.objective_history.back();
    } catch (const Error&) {
      // The run itself rejects non-finite objectives; treat as divergence.
      outcome.maximum = std::numeric_limits<double>::infinity();
      outcome.final_value = std::numeric_limits<double>::infinity();
    }
    return outcome;
  };
  return 1.0 / select_step_size(eta_grid, probe);
}

void SweepSpec::validate() const {
  if (q_grid.empty()) throw Error("sweep: empty q grid");
  bool has_zero = false;
  for (double q : q_grid) {
    if (!(q >= 0.0) || !std::isfinite(q)) {
      throw Error("sweep: q must be >= 0, got " + std::to_string(q));
    }
    if (q == 0.0) has_zero = true;
  }
  if (!has_zero) throw Error("sweep: q grid must contain 0 (the comparison baseline)");
  if (seeds.empty()) throw Error("sweep: no seeds");
  if (!(accuracy_drop_tolerance >= 0.0)) {
    throw Error("sweep: accuracy_drop_tolerance must be >= 0");
  }
}

AccuracyDistribution distribution_from_run(const RunResult& result, Split split) {
  const std::map<int, double>* accs = nullptr;
  const std::map<int, int>* counts = nullptr;
  switch (split) {
    case Split::Train:
      accs = &result.train_acc;
      counts = &result.train_count;
      break;
    case Split::Val:
      accs = &result.val_acc;
      counts = &result.val_count;
      break;
    case Split::Test:
      accs = &result.test_acc;
      counts = &result.test_count;
      break;
  }
  AccuracyDistribution dist;
  for (const auto& [id, acc] : *accs) {
    const auto cit = counts->find(id);
    if (cit == counts->end()) {
      throw Error("run report: device " + std::to_string(id) + " has a " + to_string(split) +
                  " accuracy but no sample count");
    }
    dist.accs.push_back(acc);
    dist.weights.push_back(cit->second);
    dist.device_ids.push_back(id);
  }
  dist.num_excluded = result.num_devices - static_cast<int>(dist.accs.size());
  if (dist.accs.empty()) {
    throw Error("run report: no device has " + to_string(split) + " data");
  }
  dist.validate();
  return dist;
}

CompositeSelection device_specific_selection(std::span<const double> qs,
                                             std::span<const RunResult> runs_one_seed,
                                             double fallback_q) {
  if (qs.empty() || qs.size() != runs_one_seed.size()) {
    throw Error("device_specific_selection: need one run per q");
  }
  // Evaluate candidates in ascending q so ties keep the smallest q.
  std::vector<int> order(qs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return qs[a] < qs[b]; });

  CompositeSelection sel;
  std::map<int, int> chosen_idx;
  for (const auto& entry : runs_one_seed[0].val_acc) {
    const int id = entry.first;
    double best_acc = -1.0;
    int best = -1;
    for (int i : order) {
      const auto it = runs_one_seed[i].val_acc.find(id);
      if (it == runs_one_seed[i].val_acc.end()) {
        throw Error("device_specific_selection: runs cover different validation devices");
      }
      if (it->second > best_acc) {
        best_acc = it->second;
        best = i;
      }
    }
    chosen_idx[id] = best;
    sel.device_q[id] = qs[best];
    sel.val_acc[id] = best_acc;
  }

  int fallback_idx = -1;
  for (std::size_t i = 0; i < qs.size(); ++i) {
    if (qs[i] == fallback_q) fallback_idx = static_cast<int>(i);
  }
  if (fallback_idx < 0) {
    throw Error("device_specific_selection: fallback q " + std::to_string(fallback_q) +
                " is not in the q grid");
  }

  AccuracyDistribution dist;
  for (const auto& entry : runs_one_seed[0].test_acc) {
    const int id = entry.first;
    int idx = fallback_idx;
    const auto it = chosen_idx.find(id);
    if (it != chosen_idx.end()) {
      idx = it->second;
    } else {
      sel.device_q[id] = fallback_q;  // no validation data to select with
    }
    const auto ait = runs_one_seed[idx].test_acc.find(id);
    const auto cit = runs_one_seed[idx].test_count.find(id);
    if (ait == runs_one_seed[idx].test_acc.end() || cit == runs_one_seed[idx].test_count.end()) {
      throw Error("device_specific_selection: runs cover different test devices");
    }
    dist.accs.push_back(ait->second);
    dist.weights.push_back(cit->second);
    dist.device_ids.push_back(id);
  }
  dist.num_excluded = runs_one_seed[0].num_devices - static_cast<int>(dist.accs.size());
  sel.test_stats = distribution_stats(dist);
  return sel;
}

SweepReport sweep(const SweepSpec& spec, const FederatedDataset& dataset,
                  const ModelSpec& model) {
  spec.validate();
  dataset.validate();

  SweepReport report;
  report.spec = spec;

  const int nq = static_cast<int>(spec.q_grid.size());
  const int ns = static_cast<int>(spec.seeds.size());

  // One split per seed, shared by every q.
  std::vector<FederatedDataset> splits;
  splits.reserve(ns);
  for (std::uint64_t seed : spec.seeds) {
    FederatedDataset copy = dataset;
    split_dataset(copy, seed);
    splits.push_back(std::move(copy));
  }

  report.runs.reserve(static_cast<std::size_t>(nq) * ns);
  for (int qi = 0; qi < nq; ++qi) {
    for (int si = 0; si < ns; ++si) {
      SolverConfig cfg = spec.base;
      cfg.q = spec.q_grid[qi];
      cfg.seed = spec.seeds[si];
      report.runs.push_back(run(cfg, splits[si], model, {}));
    }
  }

  report.per_q.resize(nq);
  for (int qi = 0; qi < nq; ++qi) {
    std::vector<DistributionStats> val_stats;
    std::vector<DistributionStats> test_stats;
    for (int si = 0; si < ns; ++si) {
      const RunResult& r = report.runs[static_cast<std::size_t>(qi) * ns + si];
      val_stats.push_back(stats_for_runs_split(r, Split::Val));
      test_stats.push_back(stats_for_runs_split(r, Split::Test));
    }
    report.per_q[qi].q = spec.q_grid[qi];
    report.per_q[qi].val = aggregate_over_seeds(val_stats);
    report.per_q[qi].test = aggregate_over_seeds(test_stats);
  }

  int zero_idx = 0;
  for (int qi = 0; qi < nq; ++qi) {
    if (spec.q_grid[qi] == 0.0) zero_idx = qi;
  }
  const double baseline_acc = report.per_q[zero_idx].val.mean_data_weighted.mean;
  std::vector<int> by_q(nq);
  std::iota(by_q.begin(), by_q.end(), 0);
  std::sort(by_q.begin(), by_q.end(),
            [&](int a, int b) { return spec.q_grid[a] < spec.q_grid[b]; });
  double best_var = std::numeric_limits<double>::infinity();
  double selected = 0.0;
  for (int qi : by_q) {
    if (report.per_q[qi].val.mean_data_weighted.mean <
        baseline_acc - spec.accuracy_drop_tolerance) {
      continue;
    }
    if (report.per_q[qi].val.variance.mean < best_var) {
      best_var = report.per_q[qi].val.variance.mean;
      selected = spec.q_grid[qi];
    }
  }
  report.selected_q = selected;

  // Device-specific q: select on each seed's validation split, aggregate the
  // composite test stats over seeds, and keep the first seed's assignment.
  std::vector<DistributionStats> composite_stats;
  for (int si = 0; si < ns; ++si) {
    std::vector<RunResult> seed_runs;
    seed_runs.reserve(nq);
    for (int qi = 0; qi < nq; ++qi) {
      seed_runs.push_back(report.runs[static_cast<std::size_t>(qi) * ns + si]);
    }
    CompositeSelection sel =
        device_specific_selection(spec.q_grid, seed_runs, report.selected_q);
    if (si == 0) report.device_q = sel.device_q;
    composite_stats.push_back(sel.test_stats);
  }
  report.composite_test = aggregate_over_seeds(composite_stats);
  return report;
}

SweepReport sweep(const SweepSpec& spec, const FederatedDataset& dataset) {
  return sweep(spec, dataset, default_model(dataset));
}

void save_sweep(const SweepReport& report, const std::filesystem::path& path) {
  json j;
  json spec;
  spec["base"] = detail::solver_config_to_json(report.spec.base);
  spec["q_grid"] = report.spec.q_grid;
  spec["seeds"] = report.spec.seeds;
  spec["dataset_ref"] = report.spec.dataset_ref;
  spec["accuracy_drop_tolerance"] = report.spec.accuracy_drop_tolerance;
  j["spec"] = spec;
  j["runs"] = json::array();
  for (const RunResult& r : report.runs) j["runs"].push_back(detail::run_result_to_json(r));
  j["per_q"] = json::array();
  for (const QAggregate& a : report.per_q) {
    j["per_q"].push_back(json{{"q", a.q},
                              {"val", stats_aggregate_to_json(a.val)},
                              {"test", stats_aggregate_to_json(a.test)}});
  }
  j["selected_q"] = report.selected_q;
  json dq = json::object();
  for (const auto& [id, q] : report.device_q) dq[std::to_string(id)] = q;
  j["device_q"] = dq;
  j["composite_test"] = stats_aggregate_to_json(report.composite_test);
  detail::write_text_file(path, j.dump(2) + "\n", "sweep report");
}

SweepReport load_sweep(const std::filesystem::path& path) {
  const json j = detail::parse_json_file(path, "sweep report");
  const std::string where = "sweep report " + path.string();
  SweepReport report;
  const json& spec = detail::require_field(j, "spec", where);
  report.spec.base =
      detail::solver_config_from_json(detail::require_field(spec, "base", where), where + ".base");
  report.spec.q_grid = detail::require_double_array(spec, "q_grid", where);
  const json& seeds = detail::require_field(spec, "seeds", where);
  if (!seeds.is_array()) throw Error(where + ": \"seeds\" must be an array");
  report.spec.seeds.clear();
  for (const auto& s : seeds) {
    if (!s.is_number_integer() && !s.is_number_unsigned()) {
      throw Error(where + ": \"seeds\" has a non-integer entry");
    }
    report.spec.seeds.push_back(s.get<std::uint64_t>());
  }
  report.spec.dataset_ref = detail::require_string(spec, "dataset_ref", where);
  report.spec.accuracy_drop_tolerance =
      detail::require_double(spec, "accuracy_drop_tolerance", where);

  const json& runs = detail::require_field(j, "runs", where);
  if (!runs.is_array()) throw Error(where + ": \"runs\" must be an array");
  int idx = 0;
  for (const auto& r : runs) {
    report.runs.push_back(
        detail::run_result_from_json(r, where + ".runs[" + std::to_string(idx) + "]"));
    ++idx;
  }
  if (report.runs.size() != report.spec.q_grid.size() * report.spec.seeds.size()) {
    throw Error(where + ": expected " +
                std::to_string(report.spec.q_grid.size() * report.spec.seeds.size()) +
                " runs, found " + std::to_string(report.runs.size()));
  }

  const json& per_q = detail::require_field(j, "per_q", where);
  if (!per_q.is_array()) throw Error(where + ": \"per_q\" must be an array");
  for (const auto& a : per_q) {
    QAggregate agg;
    agg.q = detail::require_double(a, "q", where);
    agg.val = stats_aggregate_from_json(detail::require_field(a, "val", where), where);
    agg.test = stats_aggregate_from_json(detail::require_field(a, "test", where), where);
    report.per_q.push_back(agg);
  }
  report.selected_q = detail::require_double(j, "selected_q", where);
  bool in_grid = false;
  for (double q : report.spec.q_grid) {
    if (q == report.selected_q) in_grid = true;
  }
  if (!in_grid) throw Error(where + ": selected_q is not in the q grid");
  report.device_q = device_q_from_json(detail::require_field(j, "device_q", where), where);
  report.composite_test =
      stats_aggregate_from_json(detail::require_field(j, "composite_test", where), where);
  report.spec.validate();
  return report;
}

std::string sweep_summary_csv(const SweepReport& report) {
  std::string out = "q";
  static const char* kFields[] = {"acc_weighted", "acc_device", "worst10", "best10", "variance"};
  for (const char* side : {"val", "test"}) {
    for (const char* f : kFields) {
      out += std::string(",") + side + "_" + f + "_mean," + side + "_" + f + "_stdev";
    }
  }
  out += '\n';
  for (const QAggregate& a : report.per_q) {
    out += format_double(a.q);
    for (const StatsAggregate* s : {&a.val, &a.test}) {
      for (const FieldAggregate* f : {&s->mean_data_weighted, &s->mean_device, &s->worst10,
                                      &s->best10, &s->variance}) {
        out += ',' + format_double(f->mean) + ',' + format_double(f->stdev);
      }
    }
    out += '\n';
  }
  return out;
}

}  // namespace fairfed
