#pragma once

#include <functional>
#include <map>

#include "fairfed/metrics.hpp"
#include "fairfed/solvers.hpp"

namespace fairfed {

/// Objective trace of one step-size candidate: the value before any round,
/// the largest value ever seen, and the value after the last round.
struct ProbeOutcome {
  double initial = 0.0;
  double maximum = 0.0;
  double final_value = 0.0;
};

/// Candidate step sizes for estimate_L.
std::vector<double> default_eta_grid();

/// Picks the eta with the lowest final objective among candidates whose
/// objective never exceeded 10x its initial value; ties keep the earlier
/// grid entry. Throws when every candidate diverged.
double select_step_size(std::span<const double> eta_grid,
                        const std::function<ProbeOutcome(double)>& probe);

/// Grid-searches 1/L by probing q=0 runs of q-FedSGD for probe_rounds
/// rounds each (fixed probe seed 0) and returns 1/eta_best.
double estimate_L(const FederatedDataset& dataset, std::span<const double> eta_grid,
                  int probe_rounds);

struct SweepSpec {
  SolverConfig base;
  std::vector<double> q_grid = {0.0, 0.001, 0.01, 0.1, 1.0, 2.0, 5.0, 10.0, 15.0};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string dataset_ref;
  double accuracy_drop_tolerance = 1.0;  // percentage points on val accuracy

  void validate() const;
};

struct QAggregate {
  double q = 0.0;
  StatsAggregate val;
  StatsAggregate test;
};

/// Per-device choice of q plus the composite model's accuracies.
struct CompositeSelection {
  std::map<int, double> device_q;
  std::map<int, double> val_acc;  // composite validation accuracy per device
  DistributionStats test_stats;
};

struct SweepReport {
  SweepSpec spec;
  std::vector<RunResult> runs;    // q-major, seed-minor
  std::vector<QAggregate> per_q;  // aligned with spec.q_grid
  double selected_q = 0.0;
  std::map<int, double> device_q;  // device-specific selection on the first seed
  StatsAggregate composite_test;   // device-specific assignment, across seeds
};

/// Rebuilds the per-device accuracy distribution recorded in a run report.
AccuracyDistribution distribution_from_run(const RunResult& result, Split split);

/// Runs every (q, seed) pair, re-splitting the dataset with each seed.
/// selected_q is the variance-minimizing q among those whose mean validation
/// accuracy stays within accuracy_drop_tolerance of q=0's; ties pick the
/// smaller q.
SweepReport sweep(const SweepSpec& spec, const FederatedDataset& dataset,
                  const ModelSpec& model);
SweepReport sweep(const SweepSpec& spec, const FederatedDataset& dataset);

/// Per-device argmax of validation accuracy over one seed's runs (one run
/// per q, aligned with qs; ties pick the smaller q). Devices without
/// validation data inherit fallback_q.
CompositeSelection device_specific_selection(std::span<const double> qs,
                                             std::span<const RunResult> runs_one_seed,
                                             double fallback_q);

void save_sweep(const SweepReport& report, const std::filesystem::path& path);
SweepReport load_sweep(const std::filesystem::path& path);

/// One row per q: mean and stdev of every accuracy-stats field, validation
/// and test.
std::string sweep_summary_csv(const SweepReport& report);

}  // namespace fairfed
