#include "fairfed/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <string>

#include "fairfed/error.hpp"
#include "fairfed/parallel.hpp"

namespace fairfed {
namespace {

std::span<const int> split_rows(const DeviceShard& shard, Split split) {
  switch (split) {
    case Split::Train:
      return shard.train_idx;
    case Split::Val:
      return shard.val_idx;
    case Split::Test:
      return shard.test_idx;
  }
  return shard.train_idx;
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

FieldAggregate field_aggregate(std::span<const double> v) {
  FieldAggregate out;
  out.mean = mean_of(v);
  if (v.size() > 1) {
    double sq = 0.0;
    for (double x : v) sq += (x - out.mean) * (x - out.mean);
    out.stdev = std::sqrt(sq / static_cast<double>(v.size() - 1));
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string to_string(Split split) {
  switch (split) {
    case Split::Train:
      return "train";
    case Split::Val:
      return "val";
    case Split::Test:
      return "test";
  }
  return "train";
}

void AccuracyDistribution::validate() const {
  if (accs.empty()) throw Error("accuracy distribution: no devices");
  if (accs.size() != weights.size() || accs.size() != device_ids.size()) {
    throw Error("accuracy distribution: misaligned fields");
  }
  for (std::size_t i = 0; i < accs.size(); ++i) {
    if (!(accs[i] >= 0.0 && accs[i] <= 1.0)) {
      throw Error("accuracy distribution: accuracy " + std::to_string(accs[i]) + " of device " +
                  std::to_string(device_ids[i]) + " outside [0,1]");
    }
    if (weights[i] < 1) {
      throw Error("accuracy distribution: device " + std::to_string(device_ids[i]) +
                  " has weight " + std::to_string(weights[i]) + " < 1");
    }
  }
  std::vector<int> ids = device_ids;
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw Error("accuracy distribution: duplicate device id");
  }
}

AccuracyDistribution accuracy_distribution(const ModelSpec& spec, std::span<const double> params,
                                           const FederatedDataset& dataset, Split split) {
  const int m = dataset.num_devices();
  if (m == 0) throw Error("accuracy distribution: dataset has no devices");
  std::vector<double> accs(m, -1.0);
  std::vector<std::string> errors(m);
  exec::parallel_for(m, [&](int k) {
    const DeviceShard& shard = dataset.shards[k];
    const std::span<const int> rows = split_rows(shard, split);
    if (rows.empty()) return;  // excluded below
    try {
      accs[k] = accuracy(spec, params, shard.features, shard.labels, rows);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  });
  for (int k = 0; k < m; ++k) {
    if (!errors[k].empty()) throw Error(errors[k]);
  }
  AccuracyDistribution dist;
  for (int k = 0; k < m; ++k) {
    if (accs[k] < 0.0) {
      ++dist.num_excluded;
      continue;
    }
    dist.accs.push_back(accs[k]);
    dist.weights.push_back(static_cast<int>(split_rows(dataset.shards[k], split).size()));
    dist.device_ids.push_back(dataset.shards[k].device_id);
  }
  if (dist.accs.empty()) {
    throw Error("accuracy distribution: every device has an empty " + to_string(split) +
                " split");
  }
  dist.validate();
  return dist;
}

DistributionStats distribution_stats(const AccuracyDistribution& dist) {
  dist.validate();
  const int m = static_cast<int>(dist.accs.size());
  // One canonical evaluation order makes the stats independent of how the
  // caller ordered the devices.
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (dist.accs[a] != dist.accs[b]) return dist.accs[a] < dist.accs[b];
    return dist.device_ids[a] < dist.device_ids[b];
  });

  double wsum = 0.0;
  double wacc = 0.0;
  double asum = 0.0;
  for (int i : order) {
    wsum += dist.weights[i];
    wacc += dist.weights[i] * dist.accs[i];
    asum += dist.accs[i];
  }
  DistributionStats stats;
  stats.mean_data_weighted = 100.0 * wacc / wsum;
  stats.mean_device = 100.0 * asum / m;

  const int cohort = (m + 9) / 10;  // ceil(0.1 m), always >= 1
  double lo = 0.0;
  double hi = 0.0;
  for (int i = 0; i < cohort; ++i) {
    lo += dist.accs[order[i]];
    hi += dist.accs[order[m - cohort + i]];
  }
  stats.worst10 = 100.0 * lo / cohort;
  stats.best10 = 100.0 * hi / cohort;

  double var = 0.0;
  for (int i : order) {
    const double dev = 100.0 * dist.accs[i] - stats.mean_device;
    var += dev * dev;
  }
  stats.variance = var / m;

  stats.device_ids = dist.device_ids;
  std::sort(stats.device_ids.begin(), stats.device_ids.end());
  return stats;
}

bool is_fairer(const DistributionStats& a, const DistributionStats& b) {
  if (a.device_ids != b.device_ids) {
    throw Error("is_fairer: stats cover different device sets (" +
                std::to_string(a.device_ids.size()) + " vs " +
                std::to_string(b.device_ids.size()) + " devices)");
  }
  return a.variance < b.variance;
}

std::vector<int> histogram(const AccuracyDistribution& dist, int num_bins) {
  dist.validate();
  if (num_bins < 1) throw Error("histogram: num_bins must be >= 1");
  std::vector<int> counts(num_bins, 0);
  for (double a : dist.accs) {
    int bin = static_cast<int>(std::floor(a * num_bins));
    if (bin >= num_bins) bin = num_bins - 1;  // a = 1.0 is right-closed
    ++counts[bin];
  }
  return counts;
}

std::string histogram_csv(std::span<const int> counts) {
  const int n = static_cast<int>(counts.size());
  std::string out = "bin_lo,bin_hi,count\n";
  for (int i = 0; i < n; ++i) {
    out += format_double(static_cast<double>(i) / n);
    out += ',';
    out += format_double(static_cast<double>(i + 1) / n);
    out += ',';
    out += std::to_string(counts[i]);
    out += '\n';
  }
  return out;
}

StatsAggregate aggregate_over_seeds(std::span<const DistributionStats> stats) {
  if (stats.empty()) throw Error("aggregate_over_seeds: no runs");
  const auto collect = [&](auto field) {
    std::vector<double> v;
    v.reserve(stats.size());
    for (const DistributionStats& s : stats) v.push_back(s.*field);
    return field_aggregate(v);
  };
  StatsAggregate out;
  out.mean_data_weighted = collect(&DistributionStats::mean_data_weighted);
  out.mean_device = collect(&DistributionStats::mean_device);
  out.worst10 = collect(&DistributionStats::worst10);
  out.best10 = collect(&DistributionStats::best10);
  out.variance = collect(&DistributionStats::variance);
  out.num_runs = static_cast<int>(stats.size());
  return out;
}

}  // namespace fairfed
