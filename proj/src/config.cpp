#include "fairfed/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <map>

#include "fairfed/error.hpp"
#include "file_io.hpp"

namespace fairfed {
namespace {

struct TomlValue {
  enum class Kind { Number, Bool, String, Array };
  Kind kind = Kind::Number;
  std::string text;  // number literal or string content
  bool boolean = false;
  std::vector<TomlValue> items;
  int line = 0;
};

using Section = std::map<std::string, TomlValue>;
using Document = std::map<std::string, Section>;

[[noreturn]] void fail(const std::string& where, int line, const std::string& msg) {
  throw ConfigError(where + ":" + std::to_string(line) + ": " + msg);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

bool valid_key(std::string_view key) {
  if (key.empty()) return false;
  for (char c : key) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  }
  return true;
}

bool is_number_literal(std::string_view s) {
  if (s.empty()) return false;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

TomlValue parse_value(std::string_view text, const std::string& where, int line);

// Splits a flat [a, b, c] body on top-level commas.
std::vector<TomlValue> parse_array_items(std::string_view body, const std::string& where,
                                         int line) {
  std::vector<TomlValue> items;
  body = trim(body);
  if (body.empty()) return items;
  std::size_t start = 0;
  bool in_string = false;
  for (std::size_t i = 0; i <= body.size(); ++i) {
    const bool at_end = i == body.size();
    if (!at_end && body[i] == '"') in_string = !in_string;
    if (at_end || (body[i] == ',' && !in_string)) {
      const std::string_view piece = trim(body.substr(start, i - start));
      if (piece.empty()) fail(where, line, "empty array element");
      TomlValue v = parse_value(piece, where, line);
      if (v.kind == TomlValue::Kind::Array) fail(where, line, "nested arrays are not supported");
      items.push_back(std::move(v));
      start = i + 1;
    }
  }
  if (in_string) fail(where, line, "unterminated string in array");
  return items;
}

TomlValue parse_value(std::string_view text, const std::string& where, int line) {
  TomlValue v;
  v.line = line;
  if (text.size() >= 2 && text.front() == '"') {
    if (text.back() != '"' || text.size() < 2) fail(where, line, "unterminated string");
    const std::string_view body = text.substr(1, text.size() - 2);
    if (body.find('"') != std::string_view::npos) {
      fail(where, line, "escaped quotes are not supported");
    }
    v.kind = TomlValue::Kind::String;
    v.text = std::string(body);
    return v;
  }
  if (text == "true" || text == "false") {
    v.kind = TomlValue::Kind::Bool;
    v.boolean = text == "true";
    return v;
  }
  if (!text.empty() && text.front() == '[') {
    if (text.back() != ']') fail(where, line, "unterminated array");
    v.kind = TomlValue::Kind::Array;
    v.items = parse_array_items(text.substr(1, text.size() - 2), where, line);
    return v;
  }
  if (is_number_literal(text)) {
    v.kind = TomlValue::Kind::Number;
    v.text = std::string(text);
    return v;
  }
  fail(where, line, "cannot parse value \"" + std::string(text) + "\"");
}

Document parse_document(const std::string& text, const std::string& where) {
  Document doc;
  std::string section;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string_view line(text.data() + pos, eol - pos);
    pos = eol + 1;
    ++line_no;

    // Strip a comment, respecting string values.
    bool in_string = false;
    std::size_t cut = line.size();
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_string = !in_string;
      if (line[i] == '#' && !in_string) {
        cut = i;
        break;
      }
    }
    const std::string_view content = trim(line.substr(0, cut));
    if (content.empty()) {
      if (pos > text.size()) break;
      continue;
    }

    if (content.front() == '[') {
      if (content.back() != ']') fail(where, line_no, "unterminated section header");
      const std::string_view name = trim(content.substr(1, content.size() - 2));
      if (!valid_key(name)) {
        fail(where, line_no, "bad section name \"" + std::string(name) + "\"");
      }
      section = std::string(name);
      doc.try_emplace(section);
      continue;
    }

    const std::size_t eq = content.find('=');
    if (eq == std::string_view::npos) {
      fail(where, line_no, "expected key = value, got \"" + std::string(content) + "\"");
    }
    const std::string_view key = trim(content.substr(0, eq));
    if (!valid_key(key)) fail(where, line_no, "bad key \"" + std::string(key) + "\"");
    if (section.empty()) {
      fail(where, line_no, "key \"" + std::string(key) + "\" appears before any [section]");
    }
    const std::string_view value_text = trim(content.substr(eq + 1));
    if (value_text.empty()) fail(where, line_no, "missing value for \"" + std::string(key) + "\"");
    TomlValue value = parse_value(value_text, where, line_no);
    if (!doc[section].emplace(std::string(key), std::move(value)).second) {
      fail(where, line_no, "duplicate key \"" + std::string(key) + "\"");
    }
    if (pos > text.size()) break;
  }
  return doc;
}

// Typed accessors; each produces a ConfigError naming key and line.

double as_double(const TomlValue& v, const std::string& where, const std::string& key) {
  if (v.kind != TomlValue::Kind::Number) fail(where, v.line, "\"" + key + "\" must be a number");
  double out = 0.0;
  std::from_chars(v.text.data(), v.text.data() + v.text.size(), out);
  if (!std::isfinite(out)) fail(where, v.line, "\"" + key + "\" must be finite");
  return out;
}

long long as_int(const TomlValue& v, const std::string& where, const std::string& key) {
  if (v.kind != TomlValue::Kind::Number) fail(where, v.line, "\"" + key + "\" must be an integer");
  long long out = 0;
  const auto res = std::from_chars(v.text.data(), v.text.data() + v.text.size(), out);
  if (res.ec != std::errc() || res.ptr != v.text.data() + v.text.size()) {
    fail(where, v.line, "\"" + key + "\" must be an integer, got " + v.text);
  }
  return out;
}

std::uint64_t as_u64(const TomlValue& v, const std::string& where, const std::string& key) {
  if (v.kind != TomlValue::Kind::Number) fail(where, v.line, "\"" + key + "\" must be an integer");
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.text.data(), v.text.data() + v.text.size(), out);
  if (res.ec != std::errc() || res.ptr != v.text.data() + v.text.size()) {
    fail(where, v.line, "\"" + key + "\" must be a non-negative integer, got " + v.text);
  }
  return out;
}

bool as_bool(const TomlValue& v, const std::string& where, const std::string& key) {
  if (v.kind != TomlValue::Kind::Bool) {
    fail(where, v.line, "\"" + key + "\" must be true or false");
  }
  return v.boolean;
}

std::string as_string(const TomlValue& v, const std::string& where, const std::string& key) {
  if (v.kind != TomlValue::Kind::String) {
    fail(where, v.line, "\"" + key + "\" must be a quoted string");
  }
  return v.text;
}

std::vector<double> as_double_array(const TomlValue& v, const std::string& where,
                                    const std::string& key) {
  if (v.kind != TomlValue::Kind::Array) fail(where, v.line, "\"" + key + "\" must be an array");
  std::vector<double> out;
  for (const TomlValue& e : v.items) out.push_back(as_double(e, where, key));
  return out;
}

std::vector<std::uint64_t> as_u64_array(const TomlValue& v, const std::string& where,
                                        const std::string& key) {
  if (v.kind != TomlValue::Kind::Array) fail(where, v.line, "\"" + key + "\" must be an array");
  std::vector<std::uint64_t> out;
  for (const TomlValue& e : v.items) out.push_back(as_u64(e, where, key));
  return out;
}

int as_bounded_int(const TomlValue& v, const std::string& where, const std::string& key) {
  const long long raw = as_int(v, where, key);
  if (raw < -2147483648LL || raw > 2147483647LL) {
    fail(where, v.line, "\"" + key + "\" is out of range");
  }
  return static_cast<int>(raw);
}

void apply_data(const Section& table, SyntheticSpec& spec, const std::string& where) {
  for (const auto& [key, v] : table) {
    if (key == "num_devices") {
      spec.num_devices = as_bounded_int(v, where, key);
    } else if (key == "mode") {
      spec.mode = synthetic_mode_from_string(as_string(v, where, key));
    } else if (key == "feature_dim") {
      spec.feature_dim = as_bounded_int(v, where, key);
    } else if (key == "num_classes") {
      spec.num_classes = as_bounded_int(v, where, key);
    } else if (key == "size_min") {
      spec.size_min = as_bounded_int(v, where, key);
    } else if (key == "size_exponent") {
      spec.size_exponent = as_double(v, where, key);
    } else if (key == "size_max") {
      spec.size_max = as_bounded_int(v, where, key);
    } else if (key == "seed") {
      spec.seed = as_u64(v, where, key);
    } else {
      fail(where, v.line, "unknown key \"" + key + "\" in [data]");
    }
  }
}

void apply_solver(const Section& table, SolverConfig& cfg, const std::string& where) {
  for (const auto& [key, v] : table) {
    if (key == "algorithm") {
      cfg.algorithm = algorithm_from_string(as_string(v, where, key));
    } else if (key == "q") {
      cfg.q = as_double(v, where, key);
    } else if (key == "L") {
      cfg.L = as_double(v, where, key);
    } else if (key == "eta") {
      cfg.eta = as_double(v, where, key);
    } else if (key == "epochs") {
      cfg.epochs = as_bounded_int(v, where, key);
    } else if (key == "batch_size") {
      cfg.batch_size = as_bounded_int(v, where, key);
    } else if (key == "devices_per_round") {
      cfg.devices_per_round = as_bounded_int(v, where, key);
    } else if (key == "max_rounds") {
      cfg.max_rounds = as_bounded_int(v, where, key);
    } else if (key == "sampling") {
      cfg.sampling = sampling_mode_from_string(as_string(v, where, key));
    } else if (key == "seed") {
      cfg.seed = as_u64(v, where, key);
    } else if (key == "patience") {
      cfg.patience = as_bounded_int(v, where, key);
    } else if (key == "scale_delta_by_L") {
      cfg.scale_delta_by_L = as_bool(v, where, key);
    } else if (key == "afl_gamma_w") {
      cfg.afl_gamma_w = as_double(v, where, key);
    } else if (key == "afl_gamma_lambda") {
      cfg.afl_gamma_lambda = as_double(v, where, key);
    } else if (key == "eps_floor") {
      cfg.eps_floor = as_double(v, where, key);
    } else {
      fail(where, v.line, "unknown key \"" + key + "\" in [solver]");
    }
  }
}

void apply_sweep(const Section& table, ExperimentConfig& cfg, const std::string& where) {
  for (const auto& [key, v] : table) {
    if (key == "q_grid") {
      cfg.q_grid = as_double_array(v, where, key);
    } else if (key == "seeds") {
      cfg.seeds = as_u64_array(v, where, key);
    } else if (key == "accuracy_drop_tolerance") {
      cfg.accuracy_drop_tolerance = as_double(v, where, key);
    } else if (key == "estimate_l") {
      cfg.estimate_l = as_bool(v, where, key);
    } else if (key == "eta_grid") {
      cfg.eta_grid = as_double_array(v, where, key);
    } else if (key == "probe_rounds") {
      cfg.probe_rounds = as_bounded_int(v, where, key);
    } else {
      fail(where, v.line, "unknown key \"" + key + "\" in [sweep]");
    }
  }
}

void apply_model(const Section& table, ExperimentConfig& cfg, const std::string& where) {
  for (const auto& [key, v] : table) {
    if (key == "ridge") {
      cfg.model_ridge = as_double(v, where, key);
    } else {
      fail(where, v.line, "unknown key \"" + key + "\" in [model]");
    }
  }
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text, const std::string& where) {
  const Document doc = parse_document(text, where);
  ExperimentConfig cfg;
  for (const auto& [section, table] : doc) {
    if (section == "data") {
      apply_data(table, cfg.data, where);
    } else if (section == "solver") {
      apply_solver(table, cfg.solver, where);
    } else if (section == "sweep") {
      apply_sweep(table, cfg, where);
    } else if (section == "model") {
      apply_model(table, cfg, where);
    } else {
      throw ConfigError(where + ": unknown section [" + section +
                        "] (expected data, model, solver, or sweep)");
    }
  }
  if (!(cfg.model_ridge >= 0.0)) throw ConfigError(where + ": ridge must be >= 0");
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = detail::read_text_file(path, "config");
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return parse_experiment_config(text, path.string());
}

}  // namespace fairfed
