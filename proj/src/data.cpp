#include "fairfed/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <system_error>

#include <nlohmann/json.hpp>

#include "fairfed/error.hpp"
#include "file_io.hpp"

namespace fairfed {
namespace {

using nlohmann::json;

bool is_iid_device(SyntheticMode mode, int num_devices, int device_id) {
  switch (mode) {
    case SyntheticMode::NonIid:
      return false;
    case SyntheticMode::Iid:
      return true;
    case SyntheticMode::Hybrid:
      return device_id < (num_devices + 1) / 2;
  }
  return false;
}

void check_label(Task task, int num_classes, int label, const std::string& where) {
  if (task == Task::Softmax) {
    if (label < 0 || label >= num_classes) {
      throw Error(where + ": label " + std::to_string(label) + " out of range [0," +
                  std::to_string(num_classes) + ")");
    }
  } else if (label != -1 && label != 1) {
    throw Error(where + ": label " + std::to_string(label) + " must be -1 or +1");
  }
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

using detail::read_text_file;
using detail::write_text_file;

std::vector<int> json_int_array(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_array()) {
    throw Error(where + ": missing integer array \"" + key + "\"");
  }
  std::vector<int> out;
  out.reserve(j[key].size());
  for (const auto& e : j[key]) {
    if (!e.is_number_integer()) throw Error(where + ": \"" + key + "\" has a non-integer entry");
    out.push_back(e.get<int>());
  }
  return out;
}

std::string device_file_name(int device_id) {
  return "device_" + std::to_string(device_id) + ".csv";
}

}  // namespace

void FederatedDataset::validate() const {
  if (shards.empty()) throw Error("dataset: no devices");
  if (feature_dim < 1) throw Error("dataset: feature_dim must be >= 1");
  if (task == Task::Softmax && num_classes < 2) {
    throw Error("dataset: softmax needs num_classes >= 2");
  }
  if (task == Task::Svm && num_classes != 2) {
    throw Error("dataset: svm datasets must declare num_classes = 2");
  }
  for (const DeviceShard& shard : shards) {
    const std::string where = "dataset device " + std::to_string(shard.device_id);
    if (shard.device_id < 0) throw Error(where + ": negative device id");
    if (shard.features.cols != feature_dim) {
      throw Error(where + ": feature dim " + std::to_string(shard.features.cols) +
                  " does not match dataset dim " + std::to_string(feature_dim));
    }
    const int n = shard.features.rows;
    if (static_cast<int>(shard.labels.size()) != n) {
      throw Error(where + ": " + std::to_string(shard.labels.size()) + " labels for " +
                  std::to_string(n) + " rows");
    }
    for (int i = 0; i < n; ++i) {
      check_label(task, num_classes, shard.labels[i], where + " row " + std::to_string(i));
    }
    std::vector<char> seen(n, 0);
    auto mark = [&](const std::vector<int>& idx, const char* name) {
      for (int r : idx) {
        if (r < 0 || r >= n) {
          throw Error(where + ": " + name + " index " + std::to_string(r) + " out of range [0," +
                      std::to_string(n) + ")");
        }
        if (seen[r]) {
          throw Error(where + ": row " + std::to_string(r) + " appears in two splits");
        }
        seen[r] = 1;
      }
    };
    mark(shard.train_idx, "train");
    mark(shard.val_idx, "val");
    mark(shard.test_idx, "test");
    for (int r = 0; r < n; ++r) {
      if (!seen[r]) {
        throw Error(where + ": row " + std::to_string(r) + " is in no split");
      }
    }
  }
}

std::string to_string(SyntheticMode mode) {
  switch (mode) {
    case SyntheticMode::NonIid:
      return "noniid";
    case SyntheticMode::Iid:
      return "iid";
    case SyntheticMode::Hybrid:
      return "hybrid";
  }
  return "noniid";
}

SyntheticMode synthetic_mode_from_string(const std::string& text) {
  if (text == "noniid") return SyntheticMode::NonIid;
  if (text == "iid") return SyntheticMode::Iid;
  if (text == "hybrid") return SyntheticMode::Hybrid;
  throw ConfigError("unknown synthetic mode \"" + text + "\" (expected noniid, iid, or hybrid)");
}

void SyntheticSpec::validate() const {
  if (num_devices < 1) throw Error("synthetic: num_devices must be >= 1");
  if (feature_dim < 1) throw Error("synthetic: feature_dim must be >= 1");
  if (num_classes < 2) throw Error("synthetic: num_classes must be >= 2");
  if (size_min < 3) throw Error("synthetic: size_min must be >= 3");
  if (!(size_exponent > 1.0)) throw Error("synthetic: size_exponent must be > 1");
  if (size_max < size_min) throw Error("synthetic: size_max must be >= size_min");
}

int size_from_uniform(double u, int size_min, double size_exponent, int size_max) {
  // Inverse CDF of a Pareto tail; u = 0 maps to the truncation cap.
  const double raw = size_min * std::pow(u, -1.0 / (size_exponent - 1.0));
  if (!(raw < static_cast<double>(size_max))) return size_max;
  const int n = static_cast<int>(std::floor(raw));
  return std::max(size_min, std::min(size_max, n));
}

std::vector<int> sizes_from_power_law(int num_devices, int size_min, double size_exponent,
                                      int size_max, RngStream& rng) {
  std::vector<int> sizes(num_devices);
  for (int k = 0; k < num_devices; ++k) {
    sizes[k] = size_from_uniform(rng.uniform01(), size_min, size_exponent, size_max);
  }
  return sizes;
}

GeneratingParams synthetic_generating_params(const SyntheticSpec& spec, int device_id) {
  spec.validate();
  if (device_id < 0 || device_id >= spec.num_devices) {
    throw Error("synthetic: device id " + std::to_string(device_id) + " out of range [0," +
                std::to_string(spec.num_devices) + ")");
  }
  const bool iid = is_iid_device(spec.mode, spec.num_devices, device_id);
  RngStream rng(spec.seed,
                iid ? std::string("gen:global") : "gen:device:" + std::to_string(device_id));
  const int c = spec.num_classes;
  const int d = spec.feature_dim;
  GeneratingParams out;
  out.softmax_params.resize(static_cast<std::size_t>(c) * d + c);
  out.feature_mean.resize(d);
  const double u = iid ? 0.0 : rng.gaussian();
  for (int k = 0; k < c; ++k) {
    for (int j = 0; j < d; ++j) out.softmax_params[static_cast<std::size_t>(k) * d + j] = u + rng.gaussian();
  }
  for (int k = 0; k < c; ++k) out.softmax_params[static_cast<std::size_t>(c) * d + k] = u + rng.gaussian();
  const double center = iid ? 0.0 : rng.gaussian();
  for (int j = 0; j < d; ++j) out.feature_mean[j] = center + rng.gaussian();
  return out;
}

FederatedDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  RngStream sizes_rng(spec.seed, "sizes");
  const std::vector<int> sizes = sizes_from_power_law(spec.num_devices, spec.size_min,
                                                      spec.size_exponent, spec.size_max,
                                                      sizes_rng);
  const int d = spec.feature_dim;
  const int c = spec.num_classes;
  // Feature j (1-based) has variance j^-1.2.
  std::vector<double> stddev(d);
  for (int j = 0; j < d; ++j) stddev[j] = std::pow(static_cast<double>(j + 1), -0.6);

  FederatedDataset ds;
  ds.task = Task::Softmax;
  ds.feature_dim = d;
  ds.num_classes = c;
  ds.provenance = "synthetic mode=" + to_string(spec.mode) +
                  " devices=" + std::to_string(spec.num_devices) +
                  " seed=" + std::to_string(spec.seed);
  ds.shards.reserve(spec.num_devices);
  std::vector<double> scores(c);
  for (int k = 0; k < spec.num_devices; ++k) {
    const GeneratingParams gp = synthetic_generating_params(spec, k);
    DeviceShard shard;
    shard.device_id = k;
    const int n = sizes[k];
    shard.features = Matrix(n, d);
    shard.labels.resize(n);
    RngStream xs(spec.seed, "gen:device:" + std::to_string(k) + ":x");
    for (int i = 0; i < n; ++i) {
      double* row = shard.features.row(i);
      for (int j = 0; j < d; ++j) row[j] = gp.feature_mean[j] + stddev[j] * xs.gaussian();
      softmax_scores(gp.softmax_params, c, d, row, scores.data());
      shard.labels[i] = argmax_class(scores.data(), c);
    }
    shard.train_idx.resize(n);
    for (int i = 0; i < n; ++i) shard.train_idx[i] = i;
    ds.shards.push_back(std::move(shard));
  }
  ds.validate();
  return ds;
}

void split_dataset(FederatedDataset& dataset, std::uint64_t seed) {
  dataset.validate();
  for (DeviceShard& shard : dataset.shards) {
    const int n = shard.num_samples();
    if (n < 1) {
      throw Error("split: device " + std::to_string(shard.device_id) + " has no samples");
    }
    RngStream rng(seed, "split:device:" + std::to_string(shard.device_id));
    const std::vector<int> perm = rng.permutation(n);
    const int hold = n / 10;
    shard.val_idx.assign(perm.begin(), perm.begin() + hold);
    shard.test_idx.assign(perm.begin() + hold, perm.begin() + 2 * hold);
    shard.train_idx.assign(perm.begin() + 2 * hold, perm.end());
    std::sort(shard.val_idx.begin(), shard.val_idx.end());
    std::sort(shard.test_idx.begin(), shard.test_idx.end());
    std::sort(shard.train_idx.begin(), shard.train_idx.end());
  }
}

std::vector<double> sampling_weights(const FederatedDataset& dataset) {
  if (dataset.shards.empty()) throw Error("sampling_weights: no devices");
  long long total = 0;
  for (const DeviceShard& shard : dataset.shards) {
    total += static_cast<long long>(shard.train_idx.size());
  }
  if (total == 0) throw Error("sampling_weights: no training samples in any device");
  std::vector<double> p(dataset.shards.size());
  for (std::size_t k = 0; k < dataset.shards.size(); ++k) {
    p[k] = static_cast<double>(dataset.shards[k].train_idx.size()) / static_cast<double>(total);
  }
  return p;
}

void save_csv_manifest(const FederatedDataset& dataset,
                       const std::filesystem::path& manifest_path) {
  dataset.validate();
  const std::filesystem::path dir = manifest_path.parent_path();
  if (!dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error("save: cannot create directory " + dir.string() + ": " + ec.message());
  }
  json manifest;
  manifest["task"] = dataset.task == Task::Softmax ? "softmax" : "svm";
  manifest["feature_dim"] = dataset.feature_dim;
  manifest["num_classes"] = dataset.num_classes;
  manifest["devices"] = json::array();
  for (const DeviceShard& shard : dataset.shards) {
    const std::string file = device_file_name(shard.device_id);
    manifest["devices"].push_back({{"id", shard.device_id}, {"file", file}});

    std::string csv;
    for (int j = 0; j < dataset.feature_dim; ++j) {
      csv += "f" + std::to_string(j) + ",";
    }
    csv += "label\n";
    for (int i = 0; i < shard.num_samples(); ++i) {
      const double* row = shard.features.row(i);
      for (int j = 0; j < dataset.feature_dim; ++j) {
        csv += format_double(row[j]);
        csv += ',';
      }
      csv += std::to_string(shard.labels[i]);
      csv += '\n';
    }
    write_text_file(dir / file, csv, "save");

    json split;
    split["train"] = shard.train_idx;
    split["val"] = shard.val_idx;
    split["test"] = shard.test_idx;
    write_text_file(dir / (file + ".split.json"), split.dump() + "\n", "save");
  }
  write_text_file(manifest_path, manifest.dump(2) + "\n", "save");
}

FederatedDataset load_csv_manifest(const std::filesystem::path& manifest_path) {
  const std::string text = read_text_file(manifest_path, "manifest");
  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw Error("manifest " + manifest_path.string() + ": not valid JSON: " + e.what());
  }
  const std::string where = "manifest " + manifest_path.string();
  if (!manifest.is_object()) throw Error(where + ": top level must be an object");
  if (!manifest.contains("task") || !manifest["task"].is_string()) {
    throw Error(where + ": missing string field \"task\"");
  }
  const std::string task_name = manifest["task"].get<std::string>();
  FederatedDataset ds;
  if (task_name == "softmax") {
    ds.task = Task::Softmax;
  } else if (task_name == "svm") {
    ds.task = Task::Svm;
  } else {
    throw Error(where + ": task must be \"softmax\" or \"svm\", got \"" + task_name + "\"");
  }
  if (!manifest.contains("feature_dim") || !manifest["feature_dim"].is_number_integer()) {
    throw Error(where + ": missing integer field \"feature_dim\"");
  }
  if (!manifest.contains("num_classes") || !manifest["num_classes"].is_number_integer()) {
    throw Error(where + ": missing integer field \"num_classes\"");
  }
  ds.feature_dim = manifest["feature_dim"].get<int>();
  ds.num_classes = manifest["num_classes"].get<int>();
  if (!manifest.contains("devices") || !manifest["devices"].is_array() ||
      manifest["devices"].empty()) {
    throw Error(where + ": missing non-empty array \"devices\"");
  }
  const std::filesystem::path dir = manifest_path.parent_path();
  for (const auto& entry : manifest["devices"]) {
    if (!entry.is_object() || !entry.contains("id") || !entry["id"].is_number_integer() ||
        !entry.contains("file") || !entry["file"].is_string()) {
      throw Error(where + ": each device needs an integer \"id\" and string \"file\"");
    }
    DeviceShard shard;
    shard.device_id = entry["id"].get<int>();
    const std::string file = entry["file"].get<std::string>();
    const std::filesystem::path csv_path = dir / file;
    const std::string csv = read_text_file(csv_path, "device file");
    const std::string dwhere = "device file " + csv_path.string();

    std::string expected_header;
    for (int j = 0; j < ds.feature_dim; ++j) expected_header += "f" + std::to_string(j) + ",";
    expected_header += "label";

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t pos = 0;
    int line_no = 0;
    while (pos < csv.size()) {
      std::size_t eol = csv.find('\n', pos);
      if (eol == std::string::npos) eol = csv.size();
      std::string_view line(csv.data() + pos, eol - pos);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      pos = eol + 1;
      ++line_no;
      if (line.empty()) continue;
      if (line_no == 1) {
        if (line != expected_header) {
          throw Error(dwhere + ": header does not match \"" + expected_header + "\"");
        }
        continue;
      }
      const std::string rwhere = dwhere + " row " + std::to_string(line_no - 1);
      const char* p = line.data();
      const char* end = line.data() + line.size();
      for (int j = 0; j < ds.feature_dim; ++j) {
        double v = 0.0;
        auto res = std::from_chars(p, end, v);
        if (res.ec != std::errc() || res.ptr == end || *res.ptr != ',') {
          throw Error(rwhere + ": expected " + std::to_string(ds.feature_dim) +
                      " comma-separated features and a label");
        }
        if (!std::isfinite(v)) {
          throw Error(rwhere + ": non-finite feature value in column " + std::to_string(j));
        }
        values.push_back(v);
        p = res.ptr + 1;
      }
      int label = 0;
      auto res = std::from_chars(p, end, label);
      if (res.ec != std::errc() || res.ptr != end) {
        throw Error(rwhere + ": trailing characters after the label");
      }
      check_label(ds.task, ds.num_classes, label, rwhere);
      labels.push_back(label);
    }
    if (labels.empty()) throw Error(dwhere + ": no samples");
    const int n = static_cast<int>(labels.size());
    shard.features = Matrix(n, ds.feature_dim);
    shard.features.values = std::move(values);
    shard.labels = std::move(labels);

    const std::filesystem::path split_path = dir / (file + ".split.json");
    if (std::filesystem::exists(split_path)) {
      const std::string stext = read_text_file(split_path, "split file");
      json split;
      try {
        split = json::parse(stext);
      } catch (const json::exception& e) {
        throw Error("split file " + split_path.string() + ": not valid JSON: " + e.what());
      }
      const std::string swhere = "split file " + split_path.string();
      shard.train_idx = json_int_array(split, "train", swhere);
      shard.val_idx = json_int_array(split, "val", swhere);
      shard.test_idx = json_int_array(split, "test", swhere);
    } else {
      shard.train_idx.resize(n);
      for (int i = 0; i < n; ++i) shard.train_idx[i] = i;
    }
    ds.shards.push_back(std::move(shard));
  }
  ds.provenance = manifest_path.string();
  ds.validate();
  return ds;
}

}  // namespace fairfed
