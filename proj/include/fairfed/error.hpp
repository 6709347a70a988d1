#pragma once

#include <stdexcept>
#include <string>

namespace fairfed {

/// Runtime failure inside the library (bad data, numeric violation, IO).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid configuration or usage; the CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

}  // namespace fairfed
