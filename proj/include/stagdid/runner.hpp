#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stagdid/aggregate.hpp"
#include "stagdid/csv.hpp"
#include "stagdid/sensitivity.hpp"
#include "stagdid/simlab.hpp"

namespace stagdid {

inline constexpr const char* kToolName = "stagdid";
inline constexpr const char* kToolVersion = "0.1.0";

struct GridConfig {
  double max = 0.0;
  int points = 0;
};

struct RunConfig {
  std::filesystem::path input;
  std::filesystem::path outdir;
  PanelColumns columns;
  Flavor flavor = Flavor::DR;
  int bootstrap_b = 999;  // 0 disables the bootstrap
  std::optional<std::uint64_t> seed;
  int threads = 1;
  GridConfig mbar_grid{2.0, 21};
  GridConfig m_grid{1.0, 21};
  int bh_bootstrap = 199;
  bool with_sensitivity = true;   // `run` writes everything; `sensitivity` reuses the same driver
  bool with_estimates = true;
};

struct RunArtifacts {
  std::vector<std::filesystem::path> written;
  GtattTable table;
  CohortDesign design;
};

// Full pipeline: validate, estimate, bootstrap, aggregate, sensitivity,
// serialize. Every numeric output derives from the seed and the input bytes;
// the manifest timestamp is the only thing two identical runs disagree on.
RunArtifacts run_pipeline(const RunConfig& config);

// Design summary for the `validate` subcommand, as a JSON string.
std::string validate_summary(const std::filesystem::path& input, const PanelColumns& columns);

// Scenario JSON -> ScenarioSpec (schema documented in the README).
ScenarioSpec scenario_from_json(const std::string& text);

struct SimulateArtifacts {
  std::vector<std::filesystem::path> written;
};

// Writes panel.csv and truth.json for a scenario file.
SimulateArtifacts run_simulate(const std::filesystem::path& scenario_path, const std::filesystem::path& outdir);

}  // namespace stagdid
