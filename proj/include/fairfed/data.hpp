#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fairfed/matrix.hpp"
#include "fairfed/models.hpp"
#include "fairfed/rng.hpp"

namespace fairfed {

/// One device's local data. Split index lists partition {0..n_k-1}; a
/// freshly generated or loaded-without-splits shard keeps every row in
/// train_idx until split_dataset assigns val/test.
struct DeviceShard {
  int device_id = 0;
  Matrix features;
  std::vector<int> labels;
  std::vector<int> train_idx;
  std::vector<int> val_idx;
  std::vector<int> test_idx;

  int num_samples() const { return features.rows; }
};

struct FederatedDataset {
  Task task = Task::Softmax;
  int feature_dim = 0;
  int num_classes = 0;  // 2 for svm, encoded as labels in {-1,+1}
  std::string provenance;
  std::vector<DeviceShard> shards;

  int num_devices() const { return static_cast<int>(shards.size()); }

  /// Checks shared dims, label validity for the task, and that the three
  /// split lists partition each shard's rows. Throws Error with the device
  /// id on violation.
  void validate() const;
};

enum class SyntheticMode { NonIid, Iid, Hybrid };

std::string to_string(SyntheticMode mode);
SyntheticMode synthetic_mode_from_string(const std::string& text);

/// Generator configuration. noniid draws per-device softmax parameters
/// around a device-specific Gaussian center; iid shares one global
/// parameter set; hybrid gives the first ceil(m/2) devices the shared set.
struct SyntheticSpec {
  int num_devices = 100;
  SyntheticMode mode = SyntheticMode::NonIid;
  int feature_dim = 60;
  int num_classes = 10;
  int size_min = 15;
  double size_exponent = 1.5;
  int size_max = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Truncated-Pareto sample count from one uniform draw:
/// min(size_max, floor(size_min * u^(-1/(size_exponent-1)))).
int size_from_uniform(double u, int size_min, double size_exponent, int size_max);

/// Per-device sample counts, one uniform draw each.
std::vector<int> sizes_from_power_law(int num_devices, int size_min, double size_exponent,
                                      int size_max, RngStream& rng);

/// The device's generating softmax parameters (packed in the model layout
/// used by softmax_scores) and feature mean v. Pure in (spec, device_id);
/// iid devices of a dataset share one parameter set.
struct GeneratingParams {
  std::vector<double> softmax_params;
  std::vector<double> feature_mean;
};
GeneratingParams synthetic_generating_params(const SyntheticSpec& spec, int device_id);

/// Draws the federated dataset: power-law sizes, per-device (or shared)
/// generating parameters, rows x ~ N(v, diag(j^-1.2)), labels by argmax of
/// the generating scores. Bit-identical for equal specs.
FederatedDataset generate_synthetic(const SyntheticSpec& spec);

/// Assigns per-shard splits with a seeded shuffle: floor(n/10) rows to val,
/// floor(n/10) to test, the remainder to train. Index lists come out sorted.
void split_dataset(FederatedDataset& dataset, std::uint64_t seed);

/// p_k = |train_k| / sum_j |train_j|.
std::vector<double> sampling_weights(const FederatedDataset& dataset);

/// Writes manifest JSON, one CSV per device ("device_<id>.csv" beside the
/// manifest), and one "<file>.split.json" per device. Feature values are
/// shortest round-trip decimals, so save -> load -> save is byte-identical.
void save_csv_manifest(const FederatedDataset& dataset,
                       const std::filesystem::path& manifest_path);

FederatedDataset load_csv_manifest(const std::filesystem::path& manifest_path);

}  // namespace fairfed
