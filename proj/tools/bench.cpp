// Compares the serial reference path against the OpenMP path on the two
// hot kernels: full-dataset objective evaluation and whole solver rounds.
// Also checks that both paths produce bitwise-identical results.

#include <charconv>
#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "fairfed/data.hpp"
#include "fairfed/parallel.hpp"
#include "fairfed/solvers.hpp"

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  const auto end = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(end - start).count();
}

int arg_int(int argc, char** argv, int index, int fallback) {
  if (index >= argc) return fallback;
  int value = fallback;
  const std::string text = argv[index];
  std::from_chars(text.data(), text.data() + text.size(), value);
  return value;
}

}  // namespace

int main(int argc, char** argv) {
  using fairfed::exec::Mode;

  const int num_devices = arg_int(argc, argv, 1, 100);
  const int rounds = arg_int(argc, argv, 2, 20);

  fairfed::SyntheticSpec spec;
  spec.num_devices = num_devices;
  spec.seed = 7;
  fairfed::FederatedDataset dataset = fairfed::generate_synthetic(spec);
  fairfed::split_dataset(dataset, spec.seed);
  const fairfed::ModelSpec model = fairfed::default_model(dataset);

  long long samples = 0;
  for (const auto& shard : dataset.shards) samples += shard.num_samples();
  std::printf("dataset: %d devices, %lld samples, %d features, %d classes\n",
              dataset.num_devices(), samples, dataset.feature_dim, dataset.num_classes);

  fairfed::SolverConfig config;
  config.algorithm = fairfed::Algorithm::QFedAvg;
  config.q = 1.0;
  config.L = 10.0;
  config.scale_delta_by_L = true;
  config.max_rounds = rounds;
  config.patience = rounds + 1;
  config.devices_per_round = std::min(10, num_devices);

  const std::vector<double> zeros(fairfed::param_size(model), 0.0);

  double objective_time[2] = {0.0, 0.0};
  double run_time[2] = {0.0, 0.0};
  std::vector<double> finals[2];

  for (int pass = 0; pass < 2; ++pass) {
    fairfed::exec::set_mode(pass == 0 ? Mode::Serial : Mode::Parallel);

    const int reps = 10;
    auto start = std::chrono::steady_clock::now();
    double sink = 0.0;
    for (int r = 0; r < reps; ++r) {
      sink += fairfed::training_objective(config.q, model, dataset, zeros);
    }
    objective_time[pass] = seconds_since(start) / reps;
    if (!(sink > 0.0)) std::printf("unexpected zero objective\n");

    start = std::chrono::steady_clock::now();
    const fairfed::RunResult result = fairfed::run(config, dataset, model);
    run_time[pass] = seconds_since(start);
    finals[pass] = result.final_params;
  }

  const bool identical = finals[0] == finals[1];
  std::printf("objective eval: serial %.3f ms, parallel %.3f ms, speedup %.2fx\n",
              objective_time[0] * 1e3, objective_time[1] * 1e3,
              objective_time[0] / objective_time[1]);
  std::printf("%d rounds:      serial %.3f ms, parallel %.3f ms, speedup %.2fx\n", rounds,
              run_time[0] * 1e3, run_time[1] * 1e3, run_time[0] / run_time[1]);
  std::printf("serial and parallel final params identical: %s\n", identical ? "yes" : "NO");
  return identical ? 0 : 1;
}
