#include "json_io.hpp"

#include <cmath>

#include "fairfed/error.hpp"
#include "file_io.hpp"

namespace fairfed::detail {

using nlohmann::json;

json parse_json_file(const std::filesystem::path& path, const char* what) {
  const std::string text = read_text_file(path, what);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string(what) + " " + path.string() + ": not valid JSON: " + e.what());
  }
}

const json& require_field(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw Error(where + ": missing field \"" + key + "\"");
  }
  return j[key];
}

double require_double(const json& j, const std::string& key, const std::string& where) {
  const json& f = require_field(j, key, where);
  if (!f.is_number()) throw Error(where + ": field \"" + key + "\" must be a number");
  return f.get<double>();
}

int require_int(const json& j, const std::string& key, const std::string& where) {
  const json& f = require_field(j, key, where);
  if (!f.is_number_integer()) throw Error(where + ": field \"" + key + "\" must be an integer");
  return f.get<int>();
}

std::uint64_t require_u64(const json& j, const std::string& key, const std::string& where) {
  const json& f = require_field(j, key, where);
  if (!f.is_number_integer() && !f.is_number_unsigned()) {
    throw Error(where + ": field \"" + key + "\" must be an integer");
  }
  return f.get<std::uint64_t>();
}

bool require_bool(const json& j, const std::string& key, const std::string& where) {
  const json& f = require_field(j, key, where);
  if (!f.is_boolean()) throw Error(where + ": field \"" + key + "\" must be a boolean");
  return f.get<bool>();
}

std::string require_string(const json& j, const std::string& key, const std::string& where) {
  const json& f = require_field(j, key, where);
  if (!f.is_string()) throw Error(where + ": field \"" + key + "\" must be a string");
  return f.get<std::string>();
}

std::vector<double> require_double_array(const json& j, const std::string& key,
                                         const std::string& where) {
  const json& f = require_field(j, key, where);
  if (!f.is_array()) throw Error(where + ": field \"" + key + "\" must be an array");
  std::vector<double> out;
  out.reserve(f.size());
  for (const auto& e : f) {
    if (!e.is_number()) throw Error(where + ": field \"" + key + "\" has a non-number entry");
    out.push_back(e.get<double>());
  }
  return out;
}

json solver_config_to_json(const SolverConfig& config) {
  json j;
  j["algorithm"] = to_string(config.algorithm);
  j["q"] = config.q;
  j["L"] = config.L;
  j["eta"] = config.eta;
  j["epochs"] = config.epochs;
  j["batch_size"] = config.batch_size;
  j["devices_per_round"] = config.devices_per_round;
  j["max_rounds"] = config.max_rounds;
  j["sampling"] = to_string(config.sampling);
  j["seed"] = config.seed;
  j["patience"] = config.patience;
  j["scale_delta_by_L"] = config.scale_delta_by_L;
  j["afl_gamma_w"] = config.afl_gamma_w;
  j["afl_gamma_lambda"] = config.afl_gamma_lambda;
  j["eps_floor"] = config.eps_floor;
  return j;
}

SolverConfig solver_config_from_json(const json& j, const std::string& where) {
  SolverConfig c;
  c.algorithm = algorithm_from_string(require_string(j, "algorithm", where));
  c.q = require_double(j, "q", where);
  c.L = require_double(j, "L", where);
  c.eta = require_double(j, "eta", where);
  c.epochs = require_int(j, "epochs", where);
  c.batch_size = require_int(j, "batch_size", where);
  c.devices_per_round = require_int(j, "devices_per_round", where);
  c.max_rounds = require_int(j, "max_rounds", where);
  c.sampling = sampling_mode_from_string(require_string(j, "sampling", where));
  c.seed = require_u64(j, "seed", where);
  c.patience = require_int(j, "patience", where);
  c.scale_delta_by_L = require_bool(j, "scale_delta_by_L", where);
  c.afl_gamma_w = require_double(j, "afl_gamma_w", where);
  c.afl_gamma_lambda = require_double(j, "afl_gamma_lambda", where);
  c.eps_floor = require_double(j, "eps_floor", where);
  return c;
}

namespace {

json id_map_to_json(const std::map<int, double>& m) {
  json j = json::object();
  for (const auto& [id, v] : m) j[std::to_string(id)] = v;
  return j;
}

json id_count_map_to_json(const std::map<int, int>& m) {
  json j = json::object();
  for (const auto& [id, v] : m) j[std::to_string(id)] = v;
  return j;
}

int parse_device_id(const std::string& key, const std::string& where) {
  try {
    std::size_t used = 0;
    const int id = std::stoi(key, &used);
    if (used != key.size() || id < 0) throw std::invalid_argument(key);
    return id;
  } catch (const std::exception&) {
    throw Error(where + ": bad device id key \"" + key + "\"");
  }
}

std::map<int, double> id_map_from_json(const json& j, const std::string& key,
                                       const std::string& where) {
  const json& f = require_field(j, key, where);
  if (!f.is_object()) throw Error(where + ": field \"" + key + "\" must be an object");
  std::map<int, double> out;
  for (const auto& [k, v] : f.items()) {
    if (!v.is_number()) throw Error(where + ": field \"" + key + "\" has a non-number entry");
    out[parse_device_id(k, where)] = v.get<double>();
  }
  return out;
}

std::map<int, int> id_count_map_from_json(const json& j, const std::string& key,
                                          const std::string& where) {
  const json& f = require_field(j, key, where);
  if (!f.is_object()) throw Error(where + ": field \"" + key + "\" must be an object");
  std::map<int, int> out;
  for (const auto& [k, v] : f.items()) {
    if (!v.is_number_integer()) {
      throw Error(where + ": field \"" + key + "\" has a non-integer entry");
    }
    out[parse_device_id(k, where)] = v.get<int>();
  }
  return out;
}

}  // namespace

json run_result_to_json(const RunResult& result) {
  json j;
  j["config"] = solver_config_to_json(result.config);
  j["dataset_id"] = result.dataset_id;
  j["num_devices"] = result.num_devices;
  j["final_params"] = result.final_params;
  j["objective_history"] = result.objective_history;
  j["rounds_executed"] = result.rounds_executed;
  j["train_acc"] = id_map_to_json(result.train_acc);
  j["val_acc"] = id_map_to_json(result.val_acc);
  j["test_acc"] = id_map_to_json(result.test_acc);
  j["train_count"] = id_count_map_to_json(result.train_count);
  j["val_count"] = id_count_map_to_json(result.val_count);
  j["test_count"] = id_count_map_to_json(result.test_count);
  return j;
}

RunResult run_result_from_json(const json& j, const std::string& where) {
  RunResult r;
  r.config = solver_config_from_json(require_field(j, "config", where), where + ".config");
  r.dataset_id = require_string(j, "dataset_id", where);
  r.num_devices = require_int(j, "num_devices", where);
  r.final_params = require_double_array(j, "final_params", where);
  r.objective_history = require_double_array(j, "objective_history", where);
  r.rounds_executed = require_int(j, "rounds_executed", where);
  if (r.rounds_executed != static_cast<int>(r.objective_history.size())) {
    throw Error(where + ": rounds_executed " + std::to_string(r.rounds_executed) +
                " does not match objective_history length " +
                std::to_string(r.objective_history.size()));
  }
  r.train_acc = id_map_from_json(j, "train_acc", where);
  r.val_acc = id_map_from_json(j, "val_acc", where);
  r.test_acc = id_map_from_json(j, "test_acc", where);
  r.train_count = id_count_map_from_json(j, "train_count", where);
  r.val_count = id_count_map_from_json(j, "val_count", where);
  r.test_count = id_count_map_from_json(j, "test_count", where);
  for (const auto& [id, acc] : r.train_acc) {
    if (!(acc >= 0.0 && acc <= 1.0)) {
      throw Error(where + ": train accuracy of device " + std::to_string(id) + " outside [0,1]");
    }
  }
  for (const auto& [id, acc] : r.val_acc) {
    if (!(acc >= 0.0 && acc <= 1.0)) {
      throw Error(where + ": val accuracy of device " + std::to_string(id) + " outside [0,1]");
    }
  }
  for (const auto& [id, acc] : r.test_acc) {
    if (!(acc >= 0.0 && acc <= 1.0)) {
      throw Error(where + ": test accuracy of device " + std::to_string(id) + " outside [0,1]");
    }
  }
  return r;
}

}  // namespace fairfed::detail
