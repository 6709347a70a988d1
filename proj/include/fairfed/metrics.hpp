#pragma once

#include <span>
#include <vector>

#include "fairfed/data.hpp"

namespace fairfed {

enum class Split { Train, Val, Test };

std::string to_string(Split split);

/// Per-device accuracies with their sample counts. Devices whose selected
/// split is empty are excluded; num_excluded reports how many.
struct AccuracyDistribution {
  std::vector<double> accs;
  std::vector<int> weights;
  std::vector<int> device_ids;
  int num_excluded = 0;

  void validate() const;
};

/// Accuracy summary in percent. Sums are taken in (accuracy, device id)
/// order, so the stats are bitwise permutation-invariant in device order.
struct DistributionStats {
  double mean_data_weighted = 0.0;
  double mean_device = 0.0;
  double worst10 = 0.0;
  double best10 = 0.0;
  double variance = 0.0;  // population variance of 100*a_k, percent^2
  std::vector<int> device_ids;  // ascending; the set the stats cover
};

/// Evaluates the model on every device's selected split.
AccuracyDistribution accuracy_distribution(const ModelSpec& spec, std::span<const double> params,
                                           const FederatedDataset& dataset, Split split);

/// worst10/best10 are unweighted means of the ceil(0.1*m) lowest/highest
/// accuracies (ties broken by device id).
DistributionStats distribution_stats(const AccuracyDistribution& dist);

/// True iff a's variance is strictly smaller; requires equal device sets.
bool is_fairer(const DistributionStats& a, const DistributionStats& b);

/// Counts over equal-width bins of [0,1]; a = 1.0 lands in the last bin.
std::vector<int> histogram(const AccuracyDistribution& dist, int num_bins);

/// CSV "bin_lo,bin_hi,count" for a histogram over [0,1].
std::string histogram_csv(std::span<const int> counts);

struct FieldAggregate {
  double mean = 0.0;
  double stdev = 0.0;  // sample stdev (n-1), 0 when n = 1
};

struct StatsAggregate {
  FieldAggregate mean_data_weighted;
  FieldAggregate mean_device;
  FieldAggregate worst10;
  FieldAggregate best10;
  FieldAggregate variance;
  int num_runs = 0;
};

/// Field-wise mean and sample stdev across runs (seeds).
StatsAggregate aggregate_over_seeds(std::span<const DistributionStats> stats);

}  // namespace fairfed
