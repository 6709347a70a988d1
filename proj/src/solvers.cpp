#include "fairfed/solvers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "fairfed/error.hpp"
#include "fairfed/objective.hpp"
#include "fairfed/parallel.hpp"
#include "file_io.hpp"
#include "json_io.hpp"

namespace fairfed {
namespace {

// Runs fn(i) over device slots, possibly in parallel, and rethrows the
// first captured error in slot order.
template <typename F>
void for_devices(int n, F&& fn) {
  std::vector<std::string> errors(n);
  exec::parallel_for(n, [&](int i) {
    try {
      fn(i);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (int i = 0; i < n; ++i) {
    if (!errors[i].empty()) throw Error(errors[i]);
  }
}

// Shard indices in ascending device-id order; aggregations walk this order
// so sums never depend on sampling or scheduling order.
std::vector<int> id_order(const FederatedDataset& dataset, std::span<const int> sampled) {
  std::vector<int> order(sampled.begin(), sampled.end());
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return dataset.shards[a].device_id < dataset.shards[b].device_id;
  });
  return order;
}

RngStream sgd_stream(const SolverConfig& config, int round, int device_id) {
  return RngStream(config.seed, "sgd:round:" + std::to_string(round) + ":device:" +
                                    std::to_string(device_id));
}

double device_train_loss(const ModelSpec& model, std::span<const double> params,
                         const DeviceShard& shard) {
  return loss(model, params, shard.features, shard.labels, shard.train_idx);
}

void check_update(const DeviceUpdate& up, int device_id) {
  if (!std::isfinite(up.h)) {
    throw Error("device " + std::to_string(device_id) +
                ": non-finite step denominator (diverging run?)");
  }
  for (double d : up.delta) {
    if (!std::isfinite(d)) {
      throw Error("device " + std::to_string(device_id) +
                  ": non-finite update (diverging run?)");
    }
  }
}

// w <- w - sum_i delta_i / sum_i h_i, summed ascending. A zero denominator
// only happens when every loss was exactly 0, where every delta is 0 too.
void apply_server_update(std::vector<double>& params, const std::vector<DeviceUpdate>& ups) {
  double sum_h = 0.0;
  for (const DeviceUpdate& up : ups) sum_h += up.h;
  if (sum_h == 0.0) return;
  const int p = static_cast<int>(params.size());
  for (int j = 0; j < p; ++j) {
    double num = 0.0;
    for (const DeviceUpdate& up : ups) num += up.delta[j];
    params[j] -= num / sum_h;
  }
}

void check_sampled(const FederatedDataset& dataset, std::span<const int> sampled) {
  if (sampled.empty()) throw Error("round: no sampled devices");
  for (int i : sampled) {
    if (i < 0 || i >= dataset.num_devices()) {
      throw Error("round: sampled shard index " + std::to_string(i) + " out of range");
    }
  }
}

}  // namespace

std::string to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::FedAvg:
      return "fedavg";
    case Algorithm::QFedSgd:
      return "qfedsgd";
    case Algorithm::QFedAvg:
      return "qfedavg";
    case Algorithm::Afl:
      return "afl";
  }
  return "qfedavg";
}

Algorithm algorithm_from_string(const std::string& text) {
  if (text == "fedavg") return Algorithm::FedAvg;
  if (text == "qfedsgd") return Algorithm::QFedSgd;
  if (text == "qfedavg") return Algorithm::QFedAvg;
  if (text == "afl") return Algorithm::Afl;
  throw ConfigError("unknown algorithm \"" + text +
                    "\" (expected fedavg, qfedsgd, qfedavg, or afl)");
}

std::string to_string(SamplingMode mode) {
  return mode == SamplingMode::Weighted ? "weighted" : "uniform";
}

SamplingMode sampling_mode_from_string(const std::string& text) {
  if (text == "weighted") return SamplingMode::Weighted;
  if (text == "uniform") return SamplingMode::Uniform;
  throw ConfigError("unknown sampling mode \"" + text + "\" (expected weighted or uniform)");
}

void SolverConfig::validate(int num_devices) const {
  if (!(q >= 0.0) || !std::isfinite(q)) {
    throw ConfigError("solver: q must be >= 0, got " + std::to_string(q));
  }
  if (!(L > 0.0) || !std::isfinite(L)) {
    throw ConfigError("solver: L must be > 0, got " + std::to_string(L));
  }
  if (!(eta >= 0.0) || !std::isfinite(eta)) {
    throw ConfigError("solver: eta must be >= 0, got " + std::to_string(eta));
  }
  if (epochs < 1) throw ConfigError("solver: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("solver: batch_size must be >= 1");
  if (devices_per_round < 1) throw ConfigError("solver: devices_per_round must be >= 1");
  if (num_devices > 0 && devices_per_round > num_devices) {
    throw ConfigError("solver: devices_per_round " + std::to_string(devices_per_round) +
                      " exceeds the " + std::to_string(num_devices) + " devices");
  }
  if (max_rounds < 0) throw ConfigError("solver: max_rounds must be >= 0");
  if (patience < 1) throw ConfigError("solver: patience must be >= 1");
  if (!(afl_gamma_w >= 0.0) || !std::isfinite(afl_gamma_w)) {
    throw ConfigError("solver: afl_gamma_w must be >= 0");
  }
  if (!(afl_gamma_lambda >= 0.0) || !std::isfinite(afl_gamma_lambda)) {
    throw ConfigError("solver: afl_gamma_lambda must be >= 0");
  }
  if (!(eps_floor > 0.0)) throw ConfigError("solver: eps_floor must be > 0");
}

ModelSpec default_model(const FederatedDataset& dataset, double ridge) {
  ModelSpec spec;
  spec.task = dataset.task;
  spec.num_classes = dataset.num_classes;
  spec.feature_dim = dataset.feature_dim;
  spec.ridge = dataset.task == Task::Svm ? ridge : 0.0;
  return spec;
}

std::vector<int> sample_devices(std::span<const double> p, int k, RngStream& rng) {
  const int m = static_cast<int>(p.size());
  if (k < 1) throw Error("sample_devices: k must be >= 1");
  int positive = 0;
  for (double w : p) {
    if (!(w >= 0.0)) throw Error("sample_devices: negative weight " + std::to_string(w));
    if (w > 0.0) ++positive;
  }
  if (k > positive) {
    throw Error("sample_devices: need " + std::to_string(k) + " devices but only " +
                std::to_string(positive) + " have positive weight");
  }
  std::vector<double> w(p.begin(), p.end());
  std::vector<int> out;
  out.reserve(k);
  for (int draw = 0; draw < k; ++draw) {
    double total = 0.0;
    for (double wi : w) total += wi;
    const double r = rng.uniform01() * total;
    double cum = 0.0;
    int chosen = -1;
    for (int i = 0; i < m; ++i) {
      if (w[i] <= 0.0) continue;
      cum += w[i];
      if (r < cum) {
        chosen = i;
        break;
      }
      chosen = i;  // fp edge: r lands at or past the final cumulative sum
    }
    out.push_back(chosen);
    w[chosen] = 0.0;
  }
  return out;
}

std::vector<double> local_sgd(const ModelSpec& spec, std::span<const double> params,
                              const DeviceShard& shard, int epochs, double eta, int batch_size,
                              RngStream& rng) {
  if (epochs < 1) throw Error("local_sgd: epochs must be >= 1");
  if (batch_size < 1) throw Error("local_sgd: batch_size must be >= 1");
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw Error("local_sgd: eta must be >= 0");
  const int n = static_cast<int>(shard.train_idx.size());
  if (n == 0) {
    throw Error("local_sgd: device " + std::to_string(shard.device_id) +
                " has an empty training split");
  }
  std::vector<double> w(params.begin(), params.end());
  std::vector<int> batch;
  batch.reserve(std::min(batch_size, n));
  for (int e = 0; e < epochs; ++e) {
    const std::vector<int> perm = rng.permutation(n);
    for (int start = 0; start < n; start += batch_size) {
      const int stop = std::min(n, start + batch_size);
      batch.clear();
      for (int i = start; i < stop; ++i) batch.push_back(shard.train_idx[perm[i]]);
      // Ascending rows pin the gradient's reduction order; a full batch
      // then matches the canonical whole-split gradient bit for bit.
      std::sort(batch.begin(), batch.end());
      const std::vector<double> g =
          gradient(spec, w, shard.features, shard.labels, batch);
      for (std::size_t j = 0; j < w.size(); ++j) w[j] -= eta * g[j];
    }
  }
  return w;
}

void fedavg_round(SolverState& state, const SolverConfig& config, const ModelSpec& model,
                  const FederatedDataset& dataset, std::span<const int> sampled) {
  check_sampled(dataset, sampled);
  const std::vector<int> order = id_order(dataset, sampled);
  const int k = static_cast<int>(order.size());
  std::vector<std::vector<double>> locals(k);
  for_devices(k, [&](int i) {
    const DeviceShard& shard = dataset.shards[order[i]];
    RngStream rng = sgd_stream(config, state.round, shard.device_id);
    locals[i] = local_sgd(model, state.params, shard, config.epochs, config.eta,
                          config.batch_size, rng);
  });
  // Mean of the local models in delta form, so that q-FedAvg's q=0
  // L-scaled variant reproduces this aggregation exactly.
  const int p = static_cast<int>(state.params.size());
  for (int j = 0; j < p; ++j) {
    double acc = 0.0;
    for (int i = 0; i < k; ++i) acc += state.params[j] - locals[i][j];
    state.params[j] -= acc / k;
  }
}

void qfedsgd_round(SolverState& state, const SolverConfig& config, const ModelSpec& model,
                   const FederatedDataset& dataset, std::span<const int> sampled) {
  check_sampled(dataset, sampled);
  const std::vector<int> order = id_order(dataset, sampled);
  const int k = static_cast<int>(order.size());
  std::vector<DeviceUpdate> ups(k);
  for_devices(k, [&](int i) {
    const DeviceShard& shard = dataset.shards[order[i]];
    const double f = device_train_loss(model, state.params, shard);
    std::vector<double> g =
        gradient(model, state.params, shard.features, shard.labels, shard.train_idx);
    double norm_sq = 0.0;
    for (double gj : g) norm_sq += gj * gj;
    ups[i].h = lipschitz_estimate(config.L, config.q, f, norm_sq, config.eps_floor);
    const double fq = fpow(f, config.q);
    for (double& gj : g) gj *= fq;
    ups[i].delta = std::move(g);
    check_update(ups[i], shard.device_id);
  });
  apply_server_update(state.params, ups);
}

void qfedavg_round(SolverState& state, const SolverConfig& config, const ModelSpec& model,
                   const FederatedDataset& dataset, std::span<const int> sampled) {
  check_sampled(dataset, sampled);
  const std::vector<int> order = id_order(dataset, sampled);
  const int k = static_cast<int>(order.size());
  std::vector<DeviceUpdate> ups(k);
  for_devices(k, [&](int i) {
    const DeviceShard& shard = dataset.shards[order[i]];
    const double f = device_train_loss(model, state.params, shard);
    RngStream rng = sgd_stream(config, state.round, shard.device_id);
    const std::vector<double> wbar = local_sgd(model, state.params, shard, config.epochs,
                                               config.eta, config.batch_size, rng);
    std::vector<double> dw(wbar.size());
    for (std::size_t j = 0; j < dw.size(); ++j) dw[j] = state.params[j] - wbar[j];
    if (config.scale_delta_by_L) {
      for (double& dj : dw) dj *= config.L;
    }
    double norm_sq = 0.0;
    for (double dj : dw) norm_sq += dj * dj;
    ups[i].h = lipschitz_estimate(config.L, config.q, f, norm_sq, config.eps_floor);
    const double fq = fpow(f, config.q);
    for (double& dj : dw) dj *= fq;
    ups[i].delta = std::move(dw);
    check_update(ups[i], shard.device_id);
  });
  apply_server_update(state.params, ups);
}

void afl_round(SolverState& state, const SolverConfig& config, const ModelSpec& model,
               const FederatedDataset& dataset) {
  const int m = dataset.num_devices();
  if (static_cast<int>(state.afl_lambda.size()) != m) {
    throw Error("afl: lambda has " + std::to_string(state.afl_lambda.size()) +
                " entries for " + std::to_string(m) + " devices");
  }
  std::vector<int> all(m);
  std::iota(all.begin(), all.end(), 0);
  const std::vector<int> order = id_order(dataset, all);
  std::vector<double> losses(m, 0.0);
  std::vector<std::vector<double>> grads(m);
  for_devices(m, [&](int i) {
    const DeviceShard& shard = dataset.shards[order[i]];
    losses[i] = device_train_loss(model, state.params, shard);
    grads[i] = gradient(model, state.params, shard.features, shard.labels, shard.train_idx);
  });
  const int p = static_cast<int>(state.params.size());
  for (int j = 0; j < p; ++j) {
    double acc = 0.0;
    for (int i = 0; i < m; ++i) acc += state.afl_lambda[order[i]] * grads[i][j];
    state.params[j] -= config.afl_gamma_w * acc;
  }
  std::vector<double> raw(m);
  for (int i = 0; i < m; ++i) {
    raw[order[i]] = state.afl_lambda[order[i]] + config.afl_gamma_lambda * losses[i];
  }
  state.afl_lambda = project_to_simplex(raw);
}

std::vector<double> project_to_simplex(std::span<const double> v) {
  const int n = static_cast<int>(v.size());
  if (n == 0) throw Error("project_to_simplex: empty vector");
  for (double x : v) {
    if (!std::isfinite(x)) throw Error("project_to_simplex: non-finite entry");
  }
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0.0;
  double tau = 0.0;
  for (int j = 1; j <= n; ++j) {
    css += u[j - 1];
    const double t = (css - 1.0) / j;
    if (u[j - 1] - t > 0.0) tau = t;
  }
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = std::max(v[i] - tau, 0.0);
  return out;
}

double training_objective(double q, const ModelSpec& model, const FederatedDataset& dataset,
                          std::span<const double> params) {
  const int m = dataset.num_devices();
  const std::vector<double> p = sampling_weights(dataset);
  std::vector<double> losses(m, 0.0);
  for_devices(m, [&](int i) {
    const DeviceShard& shard = dataset.shards[i];
    if (shard.train_idx.empty()) return;  // weight is 0; the term contributes nothing
    losses[i] = device_train_loss(model, params, shard);
  });
  return qffl_value(q, p, losses);
}

RunResult run(const SolverConfig& config, const FederatedDataset& dataset,
              const ModelSpec& model, const RoundCallback& on_round) {
  dataset.validate();
  const int m = dataset.num_devices();
  config.validate(m);
  model.validate();
  if (model.task != dataset.task || model.feature_dim != dataset.feature_dim ||
      (model.task == Task::Softmax && model.num_classes != dataset.num_classes)) {
    throw Error("run: model shape does not match the dataset");
  }

  std::vector<double> p_sample;
  if (config.sampling == SamplingMode::Weighted) {
    p_sample = sampling_weights(dataset);
  } else {
    p_sample.assign(m, 1.0 / m);
  }

  SolverState state;
  state.params.assign(param_size(model), 0.0);
  if (config.algorithm == Algorithm::Afl) {
    state.afl_lambda.assign(m, 1.0 / m);
  }

  RunResult result;
  result.config = config;
  result.dataset_id = dataset.provenance;
  result.num_devices = m;

  double best = std::numeric_limits<double>::infinity();
  int rounds_since_min = 0;
  for (int t = 0; t < config.max_rounds; ++t) {
    state.round = t;
    if (config.algorithm == Algorithm::Afl) {
      afl_round(state, config, model, dataset);
    } else {
      RngStream sampler(config.seed, "sample:round:" + std::to_string(t));
      const std::vector<int> sampled =
          sample_devices(p_sample, config.devices_per_round, sampler);
      switch (config.algorithm) {
        case Algorithm::FedAvg:
          fedavg_round(state, config, model, dataset, sampled);
          break;
        case Algorithm::QFedSgd:
          qfedsgd_round(state, config, model, dataset, sampled);
          break;
        case Algorithm::QFedAvg:
          qfedavg_round(state, config, model, dataset, sampled);
          break;
        case Algorithm::Afl:
          break;
      }
    }
    const double obj = training_objective(config.q, model, dataset, state.params);
    if (!std::isfinite(obj)) {
      throw Error("run: training objective is non-finite at round " + std::to_string(t) +
                  " (diverging step-size?)");
    }
    result.objective_history.push_back(obj);
    result.rounds_executed = t + 1;
    if (on_round) on_round(t, obj);
    if (obj < best) {
      best = obj;
      rounds_since_min = 0;
    } else if (++rounds_since_min >= config.patience) {
      break;
    }
  }
  result.final_params = state.params;

  struct SplitAcc {
    double acc[3] = {-1.0, -1.0, -1.0};
  };
  std::vector<SplitAcc> accs(m);
  for_devices(m, [&](int i) {
    const DeviceShard& shard = dataset.shards[i];
    const std::array<std::span<const int>, 3> rows = {shard.train_idx, shard.val_idx,
                                                      shard.test_idx};
    for (int s = 0; s < 3; ++s) {
      if (rows[s].empty()) continue;
      accs[i].acc[s] =
          accuracy(model, result.final_params, shard.features, shard.labels, rows[s]);
    }
  });
  for (int i = 0; i < m; ++i) {
    const DeviceShard& shard = dataset.shards[i];
    if (accs[i].acc[0] >= 0.0) {
      result.train_acc[shard.device_id] = accs[i].acc[0];
      result.train_count[shard.device_id] = static_cast<int>(shard.train_idx.size());
    }
    if (accs[i].acc[1] >= 0.0) {
      result.val_acc[shard.device_id] = accs[i].acc[1];
      result.val_count[shard.device_id] = static_cast<int>(shard.val_idx.size());
    }
    if (accs[i].acc[2] >= 0.0) {
      result.test_acc[shard.device_id] = accs[i].acc[2];
      result.test_count[shard.device_id] = static_cast<int>(shard.test_idx.size());
    }
  }
  return result;
}

RunResult run(const SolverConfig& config, const FederatedDataset& dataset) {
  return run(config, dataset, default_model(dataset), {});
}

void save_run_result(const RunResult& result, const std::filesystem::path& path) {
  detail::write_text_file(path, detail::run_result_to_json(result).dump(2) + "\n", "run report");
}

RunResult load_run_result(const std::filesystem::path& path) {
  const nlohmann::json j = detail::parse_json_file(path, "run report");
  return detail::run_result_from_json(j, "run report " + path.string());
}

}  // namespace fairfed
