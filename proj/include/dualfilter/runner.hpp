#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dualfilter/catalog.hpp"
#include "dualfilter/io.hpp"

namespace dualfilter {

inline constexpr const char* kLibraryVersion = "1.0.0";
inline constexpr int kConfigSchemaVersion = 1;

enum ExitCode : int { kExitPass = 0, kExitFailure = 1, kExitUsage = 2 };

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  std::string experiment;
  std::string model_name;           // catalog entry, or empty when `model_inline` is set
  std::optional<Json> model_inline;
  CatalogParams params;
  double horizon = 1.0;
  double dt = 1e-3;
  long n_paths = 1000;
  double tol = 1e-9;
  std::optional<double> c;
  std::optional<Vec> f;
  std::optional<Vec> mu;
  std::optional<Vec> nu;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "out";
};

/// Names accepted as `experiment`.
const std::vector<std::string>& experiment_names();

/// Parses and validates a config object; throws std::invalid_argument.
ExperimentConfig config_from_json(const Json& j);
Json config_to_json(const ExperimentConfig& config);

/// Human-readable description of the config fields.
std::string config_schema();

struct Check {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double threshold = 0.0;
};

struct RunResult {
  int exit_code = kExitPass;
  std::string message;
  Json summary;
  std::vector<Check> checks;
};

/// Runs one experiment and writes manifest.json, CSV files and summary.json
/// into config.out_dir. Exit code: 0 when every check passes, 1 on a failed
/// check or numerical failure, 2 on invalid input.
RunResult run(const ExperimentConfig& config);

}  // namespace dualfilter
