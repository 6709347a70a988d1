#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fairfed/data.hpp"
#include "fairfed/models.hpp"

namespace fairfed {

enum class Algorithm { FedAvg, QFedSgd, QFedAvg, Afl };

std::string to_string(Algorithm algorithm);
Algorithm algorithm_from_string(const std::string& text);

enum class SamplingMode { Weighted, Uniform };

std::string to_string(SamplingMode mode);
SamplingMode sampling_mode_from_string(const std::string& text);

struct SolverConfig {
  Algorithm algorithm = Algorithm::QFedAvg;
  double q = 0.0;
  double L = 1.0;
  double eta = 0.1;          // local SGD step-size
  int epochs = 1;            // local epochs per round
  int batch_size = 10;
  int devices_per_round = 10;
  int max_rounds = 200;
  SamplingMode sampling = SamplingMode::Weighted;
  std::uint64_t seed = 0;
  int patience = 10;              // rounds without a new objective minimum
  bool scale_delta_by_L = false;  // q-FedAvg variant whose q=0 is FedAvg
  double afl_gamma_w = 0.1;
  double afl_gamma_lambda = 0.1;
  double eps_floor = 1e-10;

  void validate(int num_devices) const;
};

/// One device's contribution to a q-family server update.
struct DeviceUpdate {
  std::vector<double> delta;  // numerator term
  double h = 0.0;             // step-size denominator term
};

struct SolverState {
  std::vector<double> params;
  std::vector<double> afl_lambda;  // per-device weights, afl only
  int round = 0;
};

struct RunResult {
  SolverConfig config;
  std::string dataset_id;
  int num_devices = 0;
  std::vector<double> final_params;
  std::vector<double> objective_history;  // training objective after each round
  int rounds_executed = 0;
  // Keyed by device id; devices whose split is empty are absent.
  std::map<int, double> train_acc;
  std::map<int, double> val_acc;
  std::map<int, double> test_acc;
  std::map<int, int> train_count;
  std::map<int, int> val_count;
  std::map<int, int> test_count;
};

/// The model a dataset implies: its task and dims, with an optional ridge
/// penalty for svm.
ModelSpec default_model(const FederatedDataset& dataset, double ridge = 0.0);

/// K distinct device indices, drawn sequentially without replacement with
/// the remaining weights renormalized after each draw.
std::vector<int> sample_devices(std::span<const double> p, int k, RngStream& rng);

/// E epochs of minibatch SGD on the shard's training split: per epoch a
/// seeded shuffle, then batches of size B (last one may be smaller), each
/// applying w <- w - eta * gradient(batch).
std::vector<double> local_sgd(const ModelSpec& spec, std::span<const double> params,
                              const DeviceShard& shard, int epochs, double eta, int batch_size,
                              RngStream& rng);

/// One round per algorithm. Device work may run in parallel; every
/// aggregation sums contributions in ascending device-id order, so results
/// are identical for any worker count. `sampled` holds shard indices.
void fedavg_round(SolverState& state, const SolverConfig& config, const ModelSpec& model,
                  const FederatedDataset& dataset, std::span<const int> sampled);
void qfedsgd_round(SolverState& state, const SolverConfig& config, const ModelSpec& model,
                   const FederatedDataset& dataset, std::span<const int> sampled);
void qfedavg_round(SolverState& state, const SolverConfig& config, const ModelSpec& model,
                   const FederatedDataset& dataset, std::span<const int> sampled);
void afl_round(SolverState& state, const SolverConfig& config, const ModelSpec& model,
               const FederatedDataset& dataset);

/// Euclidean projection onto the probability simplex (sort-based).
std::vector<double> project_to_simplex(std::span<const double> v);

/// The stopping-rule metric: qffl_value(q, p, per-device full-training-split
/// losses) with data-proportional p.
double training_objective(double q, const ModelSpec& model, const FederatedDataset& dataset,
                          std::span<const double> params);

using RoundCallback = std::function<void(int round, double objective)>;

/// Full training loop from w = 0: up to max_rounds rounds, recording the
/// training objective after each and stopping once it has gone `patience`
/// consecutive rounds without a new minimum.
RunResult run(const SolverConfig& config, const FederatedDataset& dataset,
              const ModelSpec& model, const RoundCallback& on_round = {});
RunResult run(const SolverConfig& config, const FederatedDataset& dataset);

void save_run_result(const RunResult& result, const std::filesystem::path& path);
RunResult load_run_result(const std::filesystem::path& path);

}  // namespace fairfed
