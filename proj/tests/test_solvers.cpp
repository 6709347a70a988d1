#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "fairfed/data.hpp"
#include "fairfed/error.hpp"
#include "fairfed/models.hpp"
#include "fairfed/objective.hpp"
#include "fairfed/parallel.hpp"
#include "fairfed/solvers.hpp"
#include "test_util.hpp"

using namespace fairfed;

namespace {

/// Two-sample SVM shard with loss 2 and gradient [2, 0, 0] at w = [0.5,0,0]:
/// the bias components of the two samples cancel.
DeviceShard hand_shard() {
  DeviceShard shard;
  shard.device_id = 0;
  shard.features = Matrix(2, 2);
  shard.features.at(0, 0) = -2.0;
  shard.features.at(1, 0) = 2.0;
  shard.labels = {1, -1};
  shard.train_idx = {0, 1};
  return shard;
}

FederatedDataset svm_dataset(std::vector<DeviceShard> shards) {
  FederatedDataset ds;
  ds.task = Task::Svm;
  ds.feature_dim = shards[0].features.cols;
  ds.num_classes = 2;
  for (std::size_t k = 0; k < shards.size(); ++k) {
    shards[k].device_id = static_cast<int>(k);
  }
  ds.shards = std::move(shards);
  ds.validate();
  return ds;
}

FederatedDataset small_synthetic(int devices, std::uint64_t seed, int size = 20) {
  SyntheticSpec spec;
  spec.num_devices = devices;
  spec.feature_dim = 8;
  spec.num_classes = 4;
  spec.size_min = size;
  spec.size_max = size;
  spec.seed = seed;
  FederatedDataset ds = generate_synthetic(spec);
  split_dataset(ds, seed);
  return ds;
}

std::string run_json(const RunResult& result) {
  test_util::TempDir dir("run_json");
  save_run_result(result, dir.file("r.json"));
  return test_util::slurp(dir.file("r.json"));
}

}  // namespace

TEST_CASE("algorithm and sampling names round-trip") {
  for (Algorithm a :
       {Algorithm::FedAvg, Algorithm::QFedSgd, Algorithm::QFedAvg, Algorithm::Afl}) {
    CHECK(algorithm_from_string(to_string(a)) == a);
  }
  CHECK_THROWS_AS(algorithm_from_string("sgd"), ConfigError);
  for (SamplingMode s : {SamplingMode::Weighted, SamplingMode::Uniform}) {
    CHECK(sampling_mode_from_string(to_string(s)) == s);
  }
  CHECK_THROWS_AS(sampling_mode_from_string("zipf"), ConfigError);
}

TEST_CASE("sample_devices degenerate and exhaustive draws") {
  RngStream rng(1, "s");
  for (int i = 0; i < 20; ++i) {
    CHECK(sample_devices(std::vector<double>{1.0, 0.0, 0.0}, 1, rng) == std::vector<int>{0});
  }
  std::vector<int> all = sample_devices(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3}, 3, rng);
  std::sort(all.begin(), all.end());
  CHECK(all == std::vector<int>{0, 1, 2});
}

TEST_CASE("sample_devices draws distinct devices matching the law") {
  RngStream rng(2, "mc");
  const std::vector<double> p = {0.7, 0.2, 0.1};
  int zero = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const std::vector<int> draw = sample_devices(p, 1, rng);
    if (draw[0] == 0) ++zero;
  }
  CHECK(std::abs(zero / static_cast<double>(n) - 0.7) < 0.02);

  for (int i = 0; i < 100; ++i) {
    const std::vector<int> draw = sample_devices(p, 2, rng);
    CHECK(draw[0] != draw[1]);
  }
  CHECK_THROWS_AS(sample_devices(std::vector<double>{1.0, 0.0}, 2, rng), Error);
}

TEST_CASE("local_sgd full-batch step equals one gradient step bitwise") {
  const FederatedDataset ds = small_synthetic(1, 3);
  const ModelSpec model = default_model(ds);
  std::vector<double> w(param_size(model), 0.0);
  w[0] = 0.25;

  RngStream rng(9, "sgd:test");
  const std::vector<double> stepped =
      local_sgd(model, w, ds.shards[0], 1, 0.05, 1000000, rng);
  const std::vector<double> g =
      gradient(model, w, ds.shards[0].features, ds.shards[0].labels, ds.shards[0].train_idx);
  std::vector<double> expect = w;
  for (std::size_t j = 0; j < w.size(); ++j) expect[j] -= 0.05 * g[j];
  CHECK(stepped == expect);
}

TEST_CASE("local_sgd with zero step returns the input") {
  const FederatedDataset ds = small_synthetic(1, 4);
  const ModelSpec model = default_model(ds);
  const std::vector<double> w(param_size(model), 0.1);
  RngStream rng(9, "sgd:test");
  CHECK(local_sgd(model, w, ds.shards[0], 3, 0.0, 4, rng) == w);
}

TEST_CASE("local_sgd descends on the training loss") {
  const FederatedDataset ds = small_synthetic(1, 5, 40);
  const ModelSpec model = default_model(ds);
  const std::vector<double> w(param_size(model), 0.0);
  RngStream rng(9, "sgd:test");
  const std::vector<double> out =
      local_sgd(model, w, ds.shards[0], 2, 1e-3, ds.shards[0].num_samples(), rng);
  const auto fk = [&](std::span<const double> params) {
    return loss(model, params, ds.shards[0].features, ds.shards[0].labels,
                ds.shards[0].train_idx);
  };
  CHECK(fk(out) < fk(w));
}

TEST_CASE("local_sgd rejects an empty training split") {
  FederatedDataset ds = small_synthetic(1, 6);
  ds.shards[0].val_idx.insert(ds.shards[0].val_idx.end(), ds.shards[0].train_idx.begin(),
                              ds.shards[0].train_idx.end());
  std::sort(ds.shards[0].val_idx.begin(), ds.shards[0].val_idx.end());
  ds.shards[0].train_idx.clear();
  const ModelSpec model = default_model(ds);
  const std::vector<double> w(param_size(model), 0.0);
  RngStream rng(9, "sgd:test");
  CHECK_THROWS_AS(local_sgd(model, w, ds.shards[0], 1, 0.1, 4, rng), Error);
}

TEST_CASE("fedavg aggregation identities") {
  SolverConfig config;
  config.algorithm = Algorithm::FedAvg;
  config.eta = 0.1;
  config.batch_size = 1000;

  // One sample (x,+1) on device 0 and (x,-1) on device 1: at w=0 the local
  // gradients are exact opposites, so the averaged model returns to zero.
  DeviceShard pos;
  pos.features = Matrix(1, 2);
  pos.features.at(0, 0) = 1.5;
  pos.features.at(0, 1) = -0.5;
  pos.labels = {1};
  pos.train_idx = {0};
  DeviceShard neg = pos;
  neg.labels = {-1};
  const FederatedDataset ds = svm_dataset({pos, neg});
  const ModelSpec model = default_model(ds);

  SolverState state;
  state.params.assign(param_size(model), 0.0);
  const std::vector<int> both = {0, 1};
  fedavg_round(state, config, model, ds, both);
  CHECK(state.params == std::vector<double>(param_size(model), 0.0));

  // K=1 from w=0 returns exactly that device's local model.
  SolverState single;
  single.params.assign(param_size(model), 0.0);
  const std::vector<int> just0 = {0};
  fedavg_round(single, config, model, ds, just0);
  RngStream rng(config.seed, "sgd:round:0:device:0");
  const std::vector<double> local =
      local_sgd(model, std::vector<double>(param_size(model), 0.0), ds.shards[0], config.epochs,
                config.eta, config.batch_size, rng);
  CHECK(single.params == local);
}

TEST_CASE("qfedsgd hand example: delta [4,0], h 6") {
  const FederatedDataset ds = svm_dataset({hand_shard()});
  const ModelSpec model = default_model(ds);
  SolverConfig config;
  config.algorithm = Algorithm::QFedSgd;
  config.q = 1.0;
  config.L = 1.0;

  SolverState state;
  state.params = {0.5, 0.0, 0.0};
  const double f0 = loss(model, state.params, ds.shards[0].features, ds.shards[0].labels,
                         ds.shards[0].train_idx);
  REQUIRE(f0 == 2.0);
  const std::vector<int> sampled = {0};
  qfedsgd_round(state, config, model, ds, sampled);
  // Delta = F^q grad = [4,0,0]; h = q F^{q-1}||grad||^2 + L F^q = 4 + 2 = 6.
  CHECK(state.params[0] == doctest::Approx(0.5 - 4.0 / 6.0).epsilon(1e-15));
  CHECK(state.params[1] == 0.0);
  CHECK(state.params[2] == 0.0);
}

TEST_CASE("qfedsgd q=0 is a fixed-step federated gradient method") {
  const FederatedDataset ds = small_synthetic(4, 7);
  const ModelSpec model = default_model(ds);
  SolverConfig config;
  config.algorithm = Algorithm::QFedSgd;
  config.q = 0.0;
  config.L = 4.0;  // power of two so the manual reduction matches bitwise

  SolverState state;
  state.params.assign(param_size(model), 0.0);
  std::vector<double> w0 = state.params;
  const std::vector<int> sampled = {2, 0, 3};
  qfedsgd_round(state, config, model, ds, sampled);

  // Manual: w - (1/(K L)) sum grad_k in ascending device order.
  std::vector<double> gsum(w0.size(), 0.0);
  for (int k : {0, 2, 3}) {
    const std::vector<double> g =
        gradient(model, w0, ds.shards[k].features, ds.shards[k].labels, ds.shards[k].train_idx);
    for (std::size_t j = 0; j < gsum.size(); ++j) gsum[j] += g[j];
  }
  for (std::size_t j = 0; j < w0.size(); ++j) w0[j] -= gsum[j] / (3 * 4.0);
  CHECK(state.params == w0);
}

TEST_CASE("zero losses make the q-family rounds no-ops") {
  // Margins are comfortably satisfied at w = [1, 0, 0]: hinge loss 0.
  DeviceShard shard;
  shard.features = Matrix(2, 2);
  shard.features.at(0, 0) = 2.0;
  shard.features.at(1, 0) = -3.0;
  shard.labels = {1, -1};
  shard.train_idx = {0, 1};
  const FederatedDataset ds = svm_dataset({shard});
  const ModelSpec model = default_model(ds);

  for (double q : {1.0, 2.0}) {
    SolverConfig config;
    config.algorithm = Algorithm::QFedSgd;
    config.q = q;
    SolverState state;
    state.params = {1.0, 0.0, 0.0};
    const std::vector<int> sampled = {0};
    qfedsgd_round(state, config, model, ds, sampled);
    CHECK(state.params == std::vector<double>{1.0, 0.0, 0.0});

    config.algorithm = Algorithm::QFedAvg;
    qfedavg_round(state, config, model, ds, sampled);
    CHECK(state.params == std::vector<double>{1.0, 0.0, 0.0});
  }
}

TEST_CASE("qfedavg with zero local step is a fixed point") {
  const FederatedDataset ds = small_synthetic(3, 8);
  const ModelSpec model = default_model(ds);
  SolverConfig config;
  config.algorithm = Algorithm::QFedAvg;
  config.q = 2.0;
  config.eta = 0.0;
  SolverState state;
  state.params.assign(param_size(model), 0.125);
  const std::vector<int> sampled = {0, 1, 2};
  qfedavg_round(state, config, model, ds, sampled);
  CHECK(state.params == std::vector<double>(param_size(model), 0.125));
}

TEST_CASE("qfedavg q=0 variants") {
  const FederatedDataset ds = small_synthetic(3, 9);
  const ModelSpec model = default_model(ds);

  SolverConfig config;
  config.q = 0.0;
  config.L = 2.0;
  config.eta = 0.1;
  config.batch_size = 5;
  config.seed = 11;

  // As printed: w' = w - (1/L) mean(w - local_k).
  SolverState state;
  state.params.assign(param_size(model), 0.0);
  const std::vector<int> sampled = {1, 2};
  qfedavg_round(state, config, model, ds, sampled);

  std::vector<double> expect(param_size(model), 0.0);
  {
    std::vector<std::vector<double>> locals;
    for (int k : {1, 2}) {
      RngStream rng(config.seed, "sgd:round:0:device:" + std::to_string(k));
      locals.push_back(local_sgd(model, expect, ds.shards[k], config.epochs, config.eta,
                                 config.batch_size, rng));
    }
    // Deltas are F^0 (w - local) = (w - local); h = L each.
    for (std::size_t j = 0; j < expect.size(); ++j) {
      double num = 0.0;
      for (const auto& local : locals) num += expect[j] - local[j];
      expect[j] -= num / (2 * config.L);
    }
  }
  CHECK(state.params == expect);
}

TEST_CASE("qfedavg q=0 with L-scaled deltas reproduces fedavg bitwise") {
  const FederatedDataset ds = small_synthetic(5, 10);
  const ModelSpec model = default_model(ds);

  SolverConfig fa;
  fa.algorithm = Algorithm::FedAvg;
  fa.q = 0.0;
  fa.eta = 0.1;
  fa.epochs = 2;
  fa.batch_size = 4;
  fa.devices_per_round = 3;
  fa.max_rounds = 6;
  fa.patience = 100;
  fa.seed = 21;

  for (double L : {1.0, 2.0}) {
    SolverConfig qa = fa;
    qa.algorithm = Algorithm::QFedAvg;
    qa.L = L;
    qa.scale_delta_by_L = true;

    const RunResult rfa = run(fa, ds, model);
    const RunResult rqa = run(qa, ds, model);
    CHECK(rfa.final_params == rqa.final_params);
    CHECK(rfa.objective_history == rqa.objective_history);
    CHECK(rfa.rounds_executed == rqa.rounds_executed);
  }
}

TEST_CASE("afl projection matches the hand example and stays on the simplex") {
  CHECK(project_to_simplex(std::vector<double>{0.5, 0.8}) == std::vector<double>{0.35, 0.65});

  RngStream rng(12, "proj");
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> v(5);
    for (double& x : v) x = 4.0 * rng.uniform01() - 2.0;
    const std::vector<double> p = project_to_simplex(v);
    double total = 0.0;
    for (double x : p) {
      CHECK(x >= 0.0);
      total += x;
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }

  // Projection of a simplex point is itself.
  const std::vector<double> onit = {0.2, 0.3, 0.5};
  const std::vector<double> back = project_to_simplex(onit);
  for (int i = 0; i < 3; ++i) CHECK(back[i] == doctest::Approx(onit[i]).epsilon(1e-12));
}

TEST_CASE("afl with frozen weights is weighted gradient descent") {
  const FederatedDataset ds = small_synthetic(3, 13);
  const ModelSpec model = default_model(ds);
  SolverConfig config;
  config.algorithm = Algorithm::Afl;
  config.afl_gamma_w = 0.05;
  config.afl_gamma_lambda = 0.0;

  SolverState state;
  state.params.assign(param_size(model), 0.0);
  state.afl_lambda.assign(3, 1.0 / 3.0);
  const std::vector<double> w0 = state.params;
  afl_round(state, config, model, ds);

  CHECK(state.afl_lambda == std::vector<double>(3, 1.0 / 3.0));
  std::vector<double> expect = w0;
  for (int k = 0; k < 3; ++k) {
    const std::vector<double> g =
        gradient(model, w0, ds.shards[k].features, ds.shards[k].labels, ds.shards[k].train_idx);
    for (std::size_t j = 0; j < expect.size(); ++j) {
      expect[j] -= config.afl_gamma_w * (1.0 / 3.0) * g[j];
    }
  }
  for (std::size_t j = 0; j < expect.size(); ++j) {
    CHECK(state.params[j] == doctest::Approx(expect[j]).epsilon(1e-12));
  }
}

TEST_CASE("afl lambda stays on the simplex across rounds") {
  const FederatedDataset ds = small_synthetic(4, 14);
  const ModelSpec model = default_model(ds);
  SolverConfig config;
  config.algorithm = Algorithm::Afl;
  config.afl_gamma_w = 0.05;
  config.afl_gamma_lambda = 0.5;

  SolverState state;
  state.params.assign(param_size(model), 0.0);
  state.afl_lambda.assign(4, 0.25);
  for (int t = 0; t < 10; ++t) {
    state.round = t;
    afl_round(state, config, model, ds);
    double total = 0.0;
    for (double l : state.afl_lambda) {
      CHECK(l >= 0.0);
      total += l;
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("training_objective is the weighted q-mean of device losses") {
  const FederatedDataset ds = small_synthetic(3, 15);
  const ModelSpec model = default_model(ds);
  const std::vector<double> w(param_size(model), 0.05);
  const std::vector<double> p = sampling_weights(ds);
  std::vector<double> losses;
  for (const DeviceShard& shard : ds.shards) {
    losses.push_back(loss(model, w, shard.features, shard.labels, shard.train_idx));
  }
  CHECK(training_objective(2.0, model, ds, w) == qffl_value(2.0, p, losses));
  CHECK(training_objective(0.0, model, ds, w) == qffl_value(0.0, p, losses));
}

TEST_CASE("run with zero rounds reports the zero model") {
  const FederatedDataset ds = small_synthetic(2, 16);
  SolverConfig config;
  config.max_rounds = 0;
  config.devices_per_round = 2;
  const RunResult result = run(config, ds);
  CHECK(result.rounds_executed == 0);
  CHECK(result.objective_history.empty());
  CHECK(result.final_params == std::vector<double>(result.final_params.size(), 0.0));
  CHECK(result.train_acc.size() == 2);
}

TEST_CASE("constant objective stops after patience+1 rounds") {
  const FederatedDataset ds = small_synthetic(2, 17);
  SolverConfig config;
  config.algorithm = Algorithm::QFedAvg;
  config.eta = 0.0;  // objective can never improve
  config.devices_per_round = 2;
  config.max_rounds = 100;
  config.patience = 3;
  const RunResult result = run(config, ds);
  CHECK(result.rounds_executed == 4);
  CHECK(result.objective_history.size() == 4);
}

TEST_CASE("identical configs give byte-identical run reports") {
  const FederatedDataset ds = small_synthetic(4, 18);
  SolverConfig config;
  config.algorithm = Algorithm::QFedAvg;
  config.q = 1.0;
  config.L = 5.0;
  config.devices_per_round = 2;
  config.max_rounds = 8;
  config.seed = 77;
  const RunResult a = run(config, ds);
  const RunResult b = run(config, ds);
  CHECK(run_json(a) == run_json(b));

  SolverConfig other = config;
  other.seed = 78;
  const RunResult c = run(other, ds);
  CHECK(run_json(a) != run_json(c));
}

TEST_CASE("runs are identical under serial and parallel execution") {
  const FederatedDataset ds = small_synthetic(4, 19);
  SolverConfig config;
  config.algorithm = Algorithm::QFedSgd;
  config.q = 1.0;
  config.L = 8.0;
  config.devices_per_round = 3;
  config.max_rounds = 5;
  exec::set_mode(exec::Mode::Serial);
  const RunResult serial = run(config, ds);
  exec::set_mode(exec::Mode::Parallel);
  const RunResult parallel = run(config, ds);
  CHECK(serial.final_params == parallel.final_params);
  CHECK(serial.objective_history == parallel.objective_history);
}

TEST_CASE("run result JSON round-trips and rejects malformed files") {
  const FederatedDataset ds = small_synthetic(3, 20);
  SolverConfig config;
  config.max_rounds = 4;
  config.devices_per_round = 2;
  RunResult result = run(config, ds);
  result.dataset_id = "unit-test-dataset";

  test_util::TempDir dir("run_roundtrip");
  save_run_result(result, dir.file("a.json"));
  const RunResult loaded = load_run_result(dir.file("a.json"));
  save_run_result(loaded, dir.file("b.json"));
  CHECK(test_util::slurp(dir.file("a.json")) == test_util::slurp(dir.file("b.json")));
  CHECK(loaded.final_params == result.final_params);
  CHECK(loaded.objective_history == result.objective_history);
  CHECK(loaded.train_acc == result.train_acc);
  CHECK(loaded.test_acc == result.test_acc);
  CHECK(loaded.config.q == result.config.q);

  const std::string text = test_util::slurp(dir.file("a.json"));
  test_util::spit(dir.file("trunc.json"), text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(load_run_result(dir.file("trunc.json")), Error);
  test_util::spit(dir.file("empty.json"), "{}");
  CHECK_THROWS_AS(load_run_result(dir.file("empty.json")), Error);
  CHECK_THROWS_AS(load_run_result(dir.file("absent.json")), Error);
}

TEST_CASE("solver config validation") {
  SolverConfig config;
  config.validate(10);
  config.devices_per_round = 11;
  CHECK_THROWS_AS(config.validate(10), ConfigError);
  config = SolverConfig{};
  config.q = -0.5;
  CHECK_THROWS_AS(config.validate(10), ConfigError);
  config = SolverConfig{};
  config.L = 0.0;
  CHECK_THROWS_AS(config.validate(10), ConfigError);
  config = SolverConfig{};
  config.epochs = 0;
  CHECK_THROWS_AS(config.validate(10), ConfigError);
  config = SolverConfig{};
  config.batch_size = 0;
  CHECK_THROWS_AS(config.validate(10), ConfigError);
  config = SolverConfig{};
  config.max_rounds = -1;
  CHECK_THROWS_AS(config.validate(10), ConfigError);
  config = SolverConfig{};
  config.eta = -0.1;
  CHECK_THROWS_AS(config.validate(10), ConfigError);
  // Zero eta and zero rounds are allowed: they exercise fixed points.
  config = SolverConfig{};
  config.eta = 0.0;
  config.max_rounds = 0;
  config.validate(10);
}

TEST_CASE("uniform sampling ignores data proportions") {
  const FederatedDataset ds = small_synthetic(3, 22);
  SolverConfig config;
  config.sampling = SamplingMode::Uniform;
  config.devices_per_round = 1;
  config.max_rounds = 60;
  config.patience = 1000;
  config.algorithm = Algorithm::QFedSgd;
  config.L = 50.0;
  const RunResult result = run(config, ds);
  CHECK(result.rounds_executed == 60);
}
