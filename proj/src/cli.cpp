#include "fairfed/cli.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fairfed/config.hpp"
#include "fairfed/data.hpp"
#include "fairfed/error.hpp"
#include "fairfed/harness.hpp"
#include "fairfed/metrics.hpp"
#include "fairfed/solvers.hpp"
#include "file_io.hpp"
#include "json_io.hpp"

namespace fairfed {
namespace {

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

LogLevel log_level_from_env() {
  const char* env = std::getenv("LOG_LEVEL");
  if (env == nullptr || *env == '\0') return LogLevel::Info;
  const std::string text(env);
  if (text == "quiet") return LogLevel::Quiet;
  if (text == "info") return LogLevel::Info;
  if (text == "debug") return LogLevel::Debug;
  throw ConfigError("unknown LOG_LEVEL \"" + text + "\" (expected quiet, info, or debug)");
}

struct Logger {
  LogLevel level = LogLevel::Info;
  void info(const std::string& msg) const {
    if (level >= LogLevel::Info) std::cerr << msg << "\n";
  }
  void debug(const std::string& msg) const {
    if (level >= LogLevel::Debug) std::cerr << msg << "\n";
  }
};

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string format_fixed(double value, int decimals) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(decimals);
  out << value;
  return out.str();
}

ExperimentConfig config_from_flag(const std::string& config_path) {
  if (config_path.empty()) return ExperimentConfig{};
  return load_experiment_config(config_path);
}

/// Reports use the test split when any device has test rows, else train.
Split report_split(const RunResult& result) {
  return result.test_count.empty() ? Split::Train : Split::Test;
}

std::string stats_line(const char* tag, const DistributionStats& stats) {
  std::ostringstream out;
  out << tag << ": acc_weighted=" << format_fixed(stats.mean_data_weighted, 3)
      << "% acc_device=" << format_fixed(stats.mean_device, 3)
      << "% worst10=" << format_fixed(stats.worst10, 3)
      << "% best10=" << format_fixed(stats.best10, 3)
      << "% variance=" << format_fixed(stats.variance, 3);
  return out.str();
}

int cmd_generate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                 const Logger& log) {
  cfg.data.validate();
  log.debug("generating " + std::to_string(cfg.data.num_devices) + " devices, mode=" +
            to_string(cfg.data.mode) + ", seed=" + std::to_string(cfg.data.seed));
  FederatedDataset dataset = generate_synthetic(cfg.data);
  split_dataset(dataset, cfg.data.seed);
  const std::filesystem::path manifest = out_dir / "manifest.json";
  save_csv_manifest(dataset, manifest);
  long long total = 0;
  for (const DeviceShard& shard : dataset.shards) total += shard.num_samples();
  std::cout << "generated " << dataset.num_devices() << " devices, " << total << " samples -> "
            << manifest.string() << "\n";
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& data_path,
              const std::filesystem::path& out_path, const Logger& log) {
  const FederatedDataset dataset = load_csv_manifest(data_path);
  const ModelSpec model = default_model(dataset, cfg.model_ridge);
  log.debug("training " + to_string(cfg.solver.algorithm) + " q=" + format_double(cfg.solver.q) +
            " on " + std::to_string(dataset.num_devices()) + " devices");
  const RoundCallback on_round = [&log](int round, double objective) {
    log.info("round " + std::to_string(round) + " objective " + format_double(objective));
  };
  RunResult result = run(cfg.solver, dataset, model, on_round);
  result.dataset_id = data_path.string();
  save_run_result(result, out_path);
  const Split split = report_split(result);
  const DistributionStats stats = distribution_stats(distribution_from_run(result, split));
  std::cout << stats_line(to_string(split).c_str(), stats) << "\n";
  log.info("wrote " + out_path.string() + " after " + std::to_string(result.rounds_executed) +
           " rounds");
  return 0;
}

int cmd_sweep(const ExperimentConfig& cfg, const std::filesystem::path& data_path,
              const std::filesystem::path& out_dir, const Logger& log) {
  const FederatedDataset dataset = load_csv_manifest(data_path);
  const ModelSpec model = default_model(dataset, cfg.model_ridge);

  SweepSpec spec;
  spec.base = cfg.solver;
  spec.q_grid = cfg.q_grid;
  spec.seeds = cfg.seeds;
  spec.dataset_ref = data_path.string();
  spec.accuracy_drop_tolerance = cfg.accuracy_drop_tolerance;

  if (cfg.estimate_l) {
    const std::vector<double> grid =
        cfg.eta_grid.empty() ? default_eta_grid() : cfg.eta_grid;
    spec.base.L = estimate_L(dataset, grid, cfg.probe_rounds);
    log.info("estimated L = " + format_double(spec.base.L));
  }

  const SweepReport report = sweep(spec, dataset, model);

  save_sweep(report, out_dir / "sweep.json");
  detail::write_text_file(out_dir / "summary.csv", sweep_summary_csv(report), "sweep summary");

  // Per-q accuracy histograms from the first seed's run, 10 bins.
  const int ns = static_cast<int>(spec.seeds.size());
  for (std::size_t qi = 0; qi < spec.q_grid.size(); ++qi) {
    const RunResult& first = report.runs[qi * static_cast<std::size_t>(ns)];
    const AccuracyDistribution dist = distribution_from_run(first, report_split(first));
    const std::vector<int> counts = histogram(dist, 10);
    const std::filesystem::path path =
        out_dir / ("hist_q" + format_double(spec.q_grid[qi]) + ".csv");
    detail::write_text_file(path, histogram_csv(counts), "histogram");
  }

  for (const QAggregate& agg : report.per_q) {
    log.info("q=" + format_double(agg.q) +
             " val_acc=" + format_fixed(agg.val.mean_data_weighted.mean, 3) +
             " val_variance=" + format_fixed(agg.val.variance.mean, 3) +
             " test_acc=" + format_fixed(agg.test.mean_data_weighted.mean, 3) +
             " test_variance=" + format_fixed(agg.test.variance.mean, 3));
  }
  log.info("wrote " + (out_dir / "sweep.json").string() + ", summary.csv, and " +
           std::to_string(spec.q_grid.size()) + " histogram files");
  std::cout << "selected_q=" << format_double(report.selected_q) << "\n";
  return 0;
}

struct ReportOptions {
  std::vector<std::string> files;
  std::string out_path;
  std::string histogram_path;
  int bins = 10;
};

int cmd_report(const ReportOptions& opt, const Logger& log) {
  if (opt.bins < 1) throw ConfigError("--bins must be >= 1");

  // A sweep report carries a "runs" array; a run report does not.
  bool is_sweep = false;
  {
    const nlohmann::json j = detail::parse_json_file(opt.files.front(), "report");
    is_sweep = j.is_object() && j.contains("runs");
  }

  if (is_sweep) {
    if (opt.files.size() != 1) {
      throw ConfigError("report: pass exactly one sweep file (got " +
                        std::to_string(opt.files.size()) + ")");
    }
    const SweepReport report = load_sweep(opt.files.front());
    const std::string csv = sweep_summary_csv(report);
    std::cout << csv;
    if (!opt.out_path.empty()) {
      detail::write_text_file(opt.out_path, csv, "report table");
      log.info("wrote " + opt.out_path);
    }
    std::cout << "selected_q=" << format_double(report.selected_q) << "\n";
    return 0;
  }

  std::vector<RunResult> results;
  results.reserve(opt.files.size());
  for (const std::string& file : opt.files) results.push_back(load_run_result(file));

  const Split split = report_split(results.front());
  const std::set<int> device_set = [&] {
    std::set<int> ids;
    const auto& accs = split == Split::Test ? results.front().test_acc : results.front().train_acc;
    for (const auto& [id, acc] : accs) ids.insert(id);
    return ids;
  }();

  std::vector<DistributionStats> stats;
  std::vector<int> pooled_counts(opt.bins, 0);
  for (const RunResult& result : results) {
    if (result.dataset_id != results.front().dataset_id) {
      throw ConfigError("report: mixed datasets across inputs (\"" + result.dataset_id +
                        "\" vs \"" + results.front().dataset_id + "\")");
    }
    const AccuracyDistribution dist = distribution_from_run(result, split);
    std::set<int> ids(dist.device_ids.begin(), dist.device_ids.end());
    if (ids != device_set) {
      throw ConfigError("report: run files cover different device sets");
    }
    stats.push_back(distribution_stats(dist));
    const std::vector<int> counts = histogram(dist, opt.bins);
    for (int b = 0; b < opt.bins; ++b) pooled_counts[b] += counts[b];
  }
  const StatsAggregate agg = aggregate_over_seeds(stats);

  std::cout << "files=" << results.size() << " split=" << to_string(split)
            << " dataset=" << results.front().dataset_id << "\n";
  std::cout << "acc_weighted%  acc_device%  worst10%  best10%  variance\n";
  std::cout << format_fixed(agg.mean_data_weighted.mean, 3) << "+-"
            << format_fixed(agg.mean_data_weighted.stdev, 3) << "  "
            << format_fixed(agg.mean_device.mean, 3) << "+-"
            << format_fixed(agg.mean_device.stdev, 3) << "  " << format_fixed(agg.worst10.mean, 3)
            << "+-" << format_fixed(agg.worst10.stdev, 3) << "  "
            << format_fixed(agg.best10.mean, 3) << "+-" << format_fixed(agg.best10.stdev, 3)
            << "  " << format_fixed(agg.variance.mean, 3) << "+-"
            << format_fixed(agg.variance.stdev, 3) << "\n";

  if (!opt.out_path.empty()) {
    std::string csv = "field,mean,stdev\n";
    const auto row = [&csv](const char* name, const FieldAggregate& f) {
      csv += std::string(name) + "," + format_double(f.mean) + "," + format_double(f.stdev) + "\n";
    };
    row("acc_weighted", agg.mean_data_weighted);
    row("acc_device", agg.mean_device);
    row("worst10", agg.worst10);
    row("best10", agg.best10);
    row("variance", agg.variance);
    detail::write_text_file(opt.out_path, csv, "report table");
    log.info("wrote " + opt.out_path);
  }
  if (!opt.histogram_path.empty()) {
    detail::write_text_file(opt.histogram_path, histogram_csv(pooled_counts), "histogram");
    log.info("wrote " + opt.histogram_path);
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"fairfed: fair federated optimization experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string data_path;
  std::string out_path;
  std::uint64_t seed = 0;

  CLI::App* generate = app.add_subcommand(
      "generate", "Generate a synthetic federated dataset and write its manifest");
  generate->add_option("--config", config_path, "TOML experiment config");
  generate->add_option("--out", out_path, "Output directory for the manifest and device CSVs")
      ->required();
  CLI::Option* generate_seed =
      generate->add_option("--seed", seed, "Override the generator seed");

  CLI::App* train =
      app.add_subcommand("train", "Train one configuration and write a run report");
  train->add_option("--config", config_path, "TOML experiment config");
  train->add_option("--data", data_path, "Dataset manifest JSON")->required();
  train->add_option("--out", out_path, "Run report output path")->required();
  CLI::Option* train_seed = train->add_option("--seed", seed, "Override the solver seed");

  CLI::App* sweep_cmd = app.add_subcommand(
      "sweep", "Run the q grid across seeds and write sweep.json, summary.csv, histograms");
  sweep_cmd->add_option("--config", config_path, "TOML experiment config");
  sweep_cmd->add_option("--data", data_path, "Dataset manifest JSON")->required();
  sweep_cmd->add_option("--out", out_path, "Output directory")->required();
  CLI::Option* sweep_seed =
      sweep_cmd->add_option("--seed", seed, "Replace the sweep seed list with this one seed");

  ReportOptions report_opt;
  CLI::App* report_cmd =
      app.add_subcommand("report", "Aggregate run reports or print a sweep summary");
  report_cmd->add_option("files", report_opt.files, "Run report JSONs, or one sweep JSON")
      ->required();
  report_cmd->add_option("--out", report_opt.out_path, "Write the table as CSV here");
  report_cmd->add_option("--histogram", report_opt.histogram_path,
                         "Write pooled accuracy-histogram CSV here");
  report_cmd->add_option("--bins", report_opt.bins, "Histogram bin count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const Logger log{log_level_from_env()};
    if (generate->parsed()) {
      ExperimentConfig cfg = config_from_flag(config_path);
      if (generate_seed->count() > 0) cfg.data.seed = seed;
      return cmd_generate(cfg, out_path, log);
    }
    if (train->parsed()) {
      ExperimentConfig cfg = config_from_flag(config_path);
      if (train_seed->count() > 0) cfg.solver.seed = seed;
      return cmd_train(cfg, data_path, out_path, log);
    }
    if (sweep_cmd->parsed()) {
      ExperimentConfig cfg = config_from_flag(config_path);
      if (sweep_seed->count() > 0) cfg.seeds = {seed};
      return cmd_sweep(cfg, data_path, out_path, log);
    }
    return cmd_report(report_opt, log);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace fairfed
