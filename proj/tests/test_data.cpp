#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "fairfed/data.hpp"
#include "fairfed/error.hpp"
#include "fairfed/models.hpp"
#include "test_util.hpp"

using namespace fairfed;

namespace {

SyntheticSpec small_spec(int devices, SyntheticMode mode, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_devices = devices;
  spec.mode = mode;
  spec.feature_dim = 8;
  spec.num_classes = 4;
  spec.size_min = 10;
  spec.size_max = 40;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_CASE("size_from_uniform matches the truncated Pareto formula") {
  // U=1 hits the lower bound.
  CHECK(size_from_uniform(1.0, 15, 1.5, 1000) == 15);
  // U=0.25: floor(15 * 0.25^-2) = 240.
  CHECK(size_from_uniform(0.25, 15, 1.5, 1000) == 240);
  // U -> 0 truncates at size_max.
  CHECK(size_from_uniform(0.0, 15, 1.5, 1000) == 1000);
  CHECK(size_from_uniform(1e-12, 15, 1.5, 1000) == 1000);
}

TEST_CASE("sizes_from_power_law stays in range and is deterministic") {
  RngStream a(5, "sizes"), b(5, "sizes");
  const std::vector<int> sa = sizes_from_power_law(200, 15, 1.5, 1000, a);
  const std::vector<int> sb = sizes_from_power_law(200, 15, 1.5, 1000, b);
  CHECK(sa == sb);
  for (int n : sa) {
    REQUIRE(n >= 15);
    REQUIRE(n <= 1000);
  }
}

TEST_CASE("generate_synthetic default-shaped dataset") {
  SyntheticSpec spec;
  spec.num_devices = 100;
  spec.seed = 1;
  const FederatedDataset ds = generate_synthetic(spec);
  CHECK(ds.num_devices() == 100);
  CHECK(ds.feature_dim == 60);
  CHECK(ds.num_classes == 10);
  CHECK(ds.task == Task::Softmax);
  ds.validate();
}

TEST_CASE("generate_synthetic single device with forced size") {
  SyntheticSpec spec = small_spec(1, SyntheticMode::NonIid, 2);
  spec.size_min = 5;
  spec.size_max = 5;
  spec.feature_dim = 60;
  spec.num_classes = 10;
  const FederatedDataset ds = generate_synthetic(spec);
  REQUIRE(ds.num_devices() == 1);
  CHECK(ds.shards[0].features.rows == 5);
  CHECK(ds.shards[0].features.cols == 60);
  // Fresh datasets keep every row in train_idx.
  CHECK(ds.shards[0].train_idx.size() == 5);
  CHECK(ds.shards[0].val_idx.empty());
  CHECK(ds.shards[0].test_idx.empty());
}

TEST_CASE("generate_synthetic is a pure function of the spec") {
  const SyntheticSpec spec = small_spec(6, SyntheticMode::NonIid, 9);
  const FederatedDataset a = generate_synthetic(spec);
  const FederatedDataset b = generate_synthetic(spec);
  REQUIRE(a.num_devices() == b.num_devices());
  for (int k = 0; k < a.num_devices(); ++k) {
    CHECK(a.shards[k].features.values == b.shards[k].features.values);
    CHECK(a.shards[k].labels == b.shards[k].labels);
  }
}

TEST_CASE("iid devices share the generating parameters") {
  const SyntheticSpec spec = small_spec(2, SyntheticMode::Iid, 3);
  const GeneratingParams g0 = synthetic_generating_params(spec, 0);
  const GeneratingParams g1 = synthetic_generating_params(spec, 1);
  CHECK(g0.softmax_params == g1.softmax_params);
  CHECK(g0.feature_mean == g1.feature_mean);
}

TEST_CASE("noniid devices draw different generating parameters") {
  const SyntheticSpec spec = small_spec(2, SyntheticMode::NonIid, 3);
  const GeneratingParams g0 = synthetic_generating_params(spec, 0);
  const GeneratingParams g1 = synthetic_generating_params(spec, 1);
  CHECK(g0.softmax_params != g1.softmax_params);
}

TEST_CASE("hybrid mode: first half shared, second half device-specific") {
  const SyntheticSpec spec = small_spec(4, SyntheticMode::Hybrid, 3);
  const GeneratingParams g0 = synthetic_generating_params(spec, 0);
  const GeneratingParams g1 = synthetic_generating_params(spec, 1);
  const GeneratingParams g2 = synthetic_generating_params(spec, 2);
  const GeneratingParams g3 = synthetic_generating_params(spec, 3);
  CHECK(g0.softmax_params == g1.softmax_params);
  CHECK(g2.softmax_params != g0.softmax_params);
  CHECK(g2.softmax_params != g3.softmax_params);
}

TEST_CASE("generated labels re-score exactly under the generating params") {
  const SyntheticSpec spec = small_spec(5, SyntheticMode::Hybrid, 17);
  const FederatedDataset ds = generate_synthetic(spec);
  for (int k = 0; k < ds.num_devices(); ++k) {
    const GeneratingParams gp = synthetic_generating_params(spec, k);
    std::vector<double> scores(spec.num_classes);
    const DeviceShard& shard = ds.shards[k];
    for (int i = 0; i < shard.num_samples(); ++i) {
      softmax_scores(gp.softmax_params, spec.num_classes, spec.feature_dim, shard.features.row(i),
                     scores.data());
      CHECK(argmax_class(scores.data(), spec.num_classes) == shard.labels[i]);
    }
  }
}

TEST_CASE("split_dataset applies the floor-10% rule") {
  SyntheticSpec spec = small_spec(1, SyntheticMode::NonIid, 4);
  spec.size_min = 10;
  spec.size_max = 10;
  FederatedDataset ds = generate_synthetic(spec);
  split_dataset(ds, 8);
  CHECK(ds.shards[0].train_idx.size() == 8);
  CHECK(ds.shards[0].val_idx.size() == 1);
  CHECK(ds.shards[0].test_idx.size() == 1);

  spec.size_min = 5;
  spec.size_max = 5;
  FederatedDataset tiny = generate_synthetic(spec);
  split_dataset(tiny, 8);
  CHECK(tiny.shards[0].train_idx.size() == 5);
  CHECK(tiny.shards[0].val_idx.empty());
  CHECK(tiny.shards[0].test_idx.empty());
}

TEST_CASE("split_dataset train count is n minus twice the hold-out") {
  for (int n : {7, 10, 19, 25, 100}) {
    SyntheticSpec spec = small_spec(1, SyntheticMode::NonIid, 4);
    spec.size_min = n;
    spec.size_max = n;
    FederatedDataset ds = generate_synthetic(spec);
    split_dataset(ds, 1);
    const int hold = n / 10;
    CHECK(static_cast<int>(ds.shards[0].train_idx.size()) == n - 2 * hold);
    CHECK(static_cast<int>(ds.shards[0].val_idx.size()) == hold);
    CHECK(static_cast<int>(ds.shards[0].test_idx.size()) == hold);
    ds.validate();
  }
}

TEST_CASE("split_dataset is deterministic in the seed") {
  const SyntheticSpec spec = small_spec(4, SyntheticMode::NonIid, 4);
  FederatedDataset a = generate_synthetic(spec);
  FederatedDataset b = generate_synthetic(spec);
  split_dataset(a, 77);
  split_dataset(b, 77);
  for (int k = 0; k < a.num_devices(); ++k) {
    CHECK(a.shards[k].train_idx == b.shards[k].train_idx);
    CHECK(a.shards[k].val_idx == b.shards[k].val_idx);
    CHECK(a.shards[k].test_idx == b.shards[k].test_idx);
  }
  FederatedDataset c = generate_synthetic(spec);
  split_dataset(c, 78);
  bool any_diff = false;
  for (int k = 0; k < a.num_devices(); ++k) {
    if (a.shards[k].train_idx != c.shards[k].train_idx) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("sampling_weights follows train-split proportions") {
  SyntheticSpec spec = small_spec(2, SyntheticMode::NonIid, 5);
  spec.size_min = 10;
  spec.size_max = 10;
  FederatedDataset ds = generate_synthetic(spec);
  split_dataset(ds, 1);  // both shards end up with 8 training rows
  const std::vector<double> equal = sampling_weights(ds);
  CHECK(equal == std::vector<double>{0.5, 0.5});

  // Force train sizes [1, 3] by editing the split lists directly.
  FederatedDataset uneven = ds;
  uneven.shards[0].train_idx = {0};
  uneven.shards[0].val_idx = {1, 2, 3, 4};
  uneven.shards[0].test_idx = {5, 6, 7, 8, 9};
  uneven.shards[1].train_idx = {0, 1, 2};
  uneven.shards[1].val_idx = {3, 4, 5};
  uneven.shards[1].test_idx = {6, 7, 8, 9};
  const std::vector<double> p = sampling_weights(uneven);
  CHECK(p == std::vector<double>{0.25, 0.75});

  const SyntheticSpec big = small_spec(30, SyntheticMode::NonIid, 6);
  FederatedDataset many = generate_synthetic(big);
  split_dataset(many, 2);
  const std::vector<double> w = sampling_weights(many);
  double total = 0.0;
  for (double x : w) {
    REQUIRE(x >= 0.0);
    total += x;
  }
  CHECK(std::abs(total - 1.0) < 1e-12);
}

TEST_CASE("sampling_weights with no training rows is an error") {
  SyntheticSpec spec = small_spec(1, SyntheticMode::NonIid, 5);
  spec.size_min = 4;
  spec.size_max = 4;
  FederatedDataset ds = generate_synthetic(spec);
  ds.shards[0].train_idx.clear();
  ds.shards[0].val_idx = {0, 1};
  ds.shards[0].test_idx = {2, 3};
  CHECK_THROWS_AS(sampling_weights(ds), Error);
}

TEST_CASE("manifest save/load round-trips bit-exactly") {
  test_util::TempDir dir("data_roundtrip");
  const SyntheticSpec spec = small_spec(3, SyntheticMode::NonIid, 21);
  FederatedDataset ds = generate_synthetic(spec);
  split_dataset(ds, 21);
  const std::string manifest = dir.file("manifest.json");
  save_csv_manifest(ds, manifest);

  const FederatedDataset back = load_csv_manifest(manifest);
  REQUIRE(back.num_devices() == ds.num_devices());
  CHECK(back.task == ds.task);
  CHECK(back.feature_dim == ds.feature_dim);
  CHECK(back.num_classes == ds.num_classes);
  for (int k = 0; k < ds.num_devices(); ++k) {
    CHECK(back.shards[k].device_id == ds.shards[k].device_id);
    CHECK(back.shards[k].features.values == ds.shards[k].features.values);
    CHECK(back.shards[k].labels == ds.shards[k].labels);
    CHECK(back.shards[k].train_idx == ds.shards[k].train_idx);
    CHECK(back.shards[k].val_idx == ds.shards[k].val_idx);
    CHECK(back.shards[k].test_idx == ds.shards[k].test_idx);
  }

  // save -> load -> save is byte-identical file by file.
  test_util::TempDir dir2("data_roundtrip2");
  save_csv_manifest(back, dir2.file("manifest.json"));
  CHECK(test_util::slurp(manifest) == test_util::slurp(dir2.file("manifest.json")));
  for (int k = 0; k < ds.num_devices(); ++k) {
    const std::string name = "device_" + std::to_string(ds.shards[k].device_id) + ".csv";
    CHECK(test_util::slurp(dir.file(name)) == test_util::slurp(dir2.file(name)));
    CHECK(test_util::slurp(dir.file(name + ".split.json")) ==
          test_util::slurp(dir2.file(name + ".split.json")));
  }
}

TEST_CASE("hand-written manifest with 4 and 6 row devices loads") {
  test_util::TempDir dir("data_manual");
  test_util::spit(dir.file("a.csv"),
                  "f0,f1,label\n0.5,1,0\n-1,2,1\n0.25,0,2\n1e-3,4,1\n");
  test_util::spit(dir.file("b.csv"),
                  "f0,f1,label\n1,1,0\n2,2,1\n3,3,2\n4,4,0\n5,5,1\n6,6,2\n");
  test_util::spit(dir.file("m.json"),
                  R"({"task":"softmax","feature_dim":2,"num_classes":3,)"
                  R"("devices":[{"id":0,"file":"a.csv"},{"id":1,"file":"b.csv"}]})");
  const FederatedDataset ds = load_csv_manifest(dir.file("m.json"));
  REQUIRE(ds.num_devices() == 2);
  CHECK(ds.shards[0].num_samples() == 4);
  CHECK(ds.shards[1].num_samples() == 6);
  CHECK(ds.shards[0].features.at(0, 0) == 0.5);
  CHECK(ds.shards[0].features.at(3, 0) == 1e-3);
  // No split files: everything stays in train.
  CHECK(ds.shards[1].train_idx.size() == 6);
}

TEST_CASE("load errors name the offending file and row") {
  test_util::TempDir dir("data_badload");
  test_util::spit(dir.file("bad.csv"), "f0,f1,label\n1,2,3\n");
  test_util::spit(dir.file("m.json"),
                  R"({"task":"softmax","feature_dim":2,"num_classes":3,)"
                  R"("devices":[{"id":0,"file":"bad.csv"}]})");
  // Label 3 is out of range for num_classes=3.
  CHECK_THROWS_WITH_AS(load_csv_manifest(dir.file("m.json")),
                       doctest::Contains("bad.csv"), Error);
  try {
    load_csv_manifest(dir.file("m.json"));
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("row") != std::string::npos);
  }

  test_util::spit(dir.file("m2.json"),
                  R"({"task":"softmax","feature_dim":2,"num_classes":3,)"
                  R"("devices":[{"id":0,"file":"missing.csv"}]})");
  CHECK_THROWS_WITH_AS(load_csv_manifest(dir.file("m2.json")),
                       doctest::Contains("missing.csv"), Error);

  test_util::spit(dir.file("wide.csv"), "f0,f1,f2,label\n1,2,3,0\n");
  test_util::spit(dir.file("m3.json"),
                  R"({"task":"softmax","feature_dim":2,"num_classes":3,)"
                  R"("devices":[{"id":0,"file":"wide.csv"}]})");
  CHECK_THROWS_AS(load_csv_manifest(dir.file("m3.json")), Error);
}

TEST_CASE("dataset validation rejects broken splits and labels") {
  SyntheticSpec spec = small_spec(1, SyntheticMode::NonIid, 2);
  spec.size_min = 10;
  spec.size_max = 10;
  FederatedDataset ds = generate_synthetic(spec);
  split_dataset(ds, 3);

  FederatedDataset overlap = ds;
  overlap.shards[0].val_idx.push_back(overlap.shards[0].train_idx[0]);
  CHECK_THROWS_AS(overlap.validate(), Error);

  FederatedDataset missing = ds;
  missing.shards[0].train_idx.pop_back();
  CHECK_THROWS_AS(missing.validate(), Error);

  FederatedDataset badlabel = ds;
  badlabel.shards[0].labels[0] = 99;
  CHECK_THROWS_AS(badlabel.validate(), Error);
}

TEST_CASE("synthetic mode names round-trip and reject junk") {
  for (SyntheticMode m : {SyntheticMode::NonIid, SyntheticMode::Iid, SyntheticMode::Hybrid}) {
    CHECK(synthetic_mode_from_string(to_string(m)) == m);
  }
  CHECK_THROWS_AS(synthetic_mode_from_string("fancy"), ConfigError);
}

TEST_CASE("spec validation enforces the documented bounds") {
  SyntheticSpec spec;
  spec.num_devices = 0;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = SyntheticSpec{};
  spec.size_min = 2;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = SyntheticSpec{};
  spec.size_exponent = 1.0;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = SyntheticSpec{};
  spec.size_max = spec.size_min - 1;
  CHECK_THROWS_AS(spec.validate(), Error);
}
