#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fairfed/data.hpp"
#include "fairfed/harness.hpp"
#include "fairfed/solvers.hpp"

namespace fairfed {

/// Experiment settings parsed from a TOML config file with sections
/// [data], [model], [solver], and [sweep]. Unknown sections or keys are
/// rejected so typos fail before any work starts. Command-line flags
/// override file values, which override these defaults.
struct ExperimentConfig {
  SyntheticSpec data;
  SolverConfig solver;
  double model_ridge = 0.0;

  std::vector<double> q_grid = {0.0, 0.001, 0.01, 0.1, 1.0, 2.0, 5.0, 10.0, 15.0};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  double accuracy_drop_tolerance = 1.0;
  bool estimate_l = false;
  std::vector<double> eta_grid;  // empty means default_eta_grid()
  int probe_rounds = 30;
};

/// Parses the TOML subset used by config files: [section] headers,
/// key = value lines with integer, float, boolean, string, and flat array
/// values, and # comments. `where` names the source in error messages.
ExperimentConfig parse_experiment_config(const std::string& text, const std::string& where);

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

}  // namespace fairfed
