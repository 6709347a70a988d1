#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "fairfed/solvers.hpp"

// Shared (library-private) file and JSON plumbing for the persistence
// formats: run reports, sweep reports, dataset manifests.
namespace fairfed::detail {

nlohmann::json parse_json_file(const std::filesystem::path& path, const char* what);

const nlohmann::json& require_field(const nlohmann::json& j, const std::string& key,
                                    const std::string& where);
double require_double(const nlohmann::json& j, const std::string& key, const std::string& where);
int require_int(const nlohmann::json& j, const std::string& key, const std::string& where);
std::uint64_t require_u64(const nlohmann::json& j, const std::string& key,
                          const std::string& where);
bool require_bool(const nlohmann::json& j, const std::string& key, const std::string& where);
std::string require_string(const nlohmann::json& j, const std::string& key,
                           const std::string& where);
std::vector<double> require_double_array(const nlohmann::json& j, const std::string& key,
                                         const std::string& where);

nlohmann::json solver_config_to_json(const SolverConfig& config);
SolverConfig solver_config_from_json(const nlohmann::json& j, const std::string& where);

nlohmann::json run_result_to_json(const RunResult& result);
RunResult run_result_from_json(const nlohmann::json& j, const std::string& where);

}  // namespace fairfed::detail
