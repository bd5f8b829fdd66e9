// Run configuration: one JSON file drives every command.
//
//   {
//     "seed": 7,                                   required
//     "output_dir": "out",
//     "scenario": "scenario.json" | "synthetic": {SyntheticConfig fields},
//     "sensors": "sensors.json" | [ {position, theta_max, n_zen, n_azi}, ... ],
//     "flux": {"model": "exponential", "i0", "attenuation_length", "efficiency_exponent", "exposure"}
//           | {"model": "tabulated", "opacity": [...], "intensity": [...], ...},
//     "reference_density": number                  (default: top-layer unit density)
//     "gamma": 1.0, "height_reference": "center" | "lower_face",
//     "whitening": "spectral" | "cholesky", "quadrature": {"n_sub": 1},
//     "smoothness_prior": {"alpha": 1, "beta": 1}, "include_factorial": false,
//     "data_mode": "round" | "poisson",
//     "nuts": {...}, "plan": {"n_super", "n_within"}, "profile": "desk" | "paper",
//     "summary": {"airgap_threshold": 25, "airgap_layer": 1, "slices": [y indices]},
//     "threads": 0
//   }
//
// Relative paths resolve against the config file's directory.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mucave/flux.hpp"
#include "mucave/geometry.hpp"
#include "mucave/nuts.hpp"
#include "mucave/posterior.hpp"
#include "mucave/raytrace.hpp"
#include "mucave/runner.hpp"

namespace mucave {

enum class DataMode { round, poisson };

struct SummaryConfig {
  double airgap_threshold = 25.0;
  int airgap_layer = 1;
  std::vector<int> slices;  // empty: four evenly spread y indices
};

struct RunConfig {
  std::filesystem::path base_dir;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;

  std::optional<std::filesystem::path> scenario_path;
  std::optional<SyntheticConfig> synthetic;
  std::vector<Sensor> sensors;

  FluxModel flux = FluxModel::exponential(1.0, 1000.0);
  std::optional<double> reference_density;
  QuadratureSpec quadrature;
  PosteriorOptions posterior;
  DataMode data_mode = DataMode::round;

  NutsConfig nuts;
  SuperChainPlan plan;
  std::string profile;

  SummaryConfig summary;
  unsigned threads = 0;

  /// Loads the scenario (file or synthetic generator).
  Scenario scenario() const;
  /// R0 on the scenario grid.
  DensityArray reference(const Scenario& scenario) const;
  void validate() const;

  std::filesystem::path output(const std::string& name) const { return output_dir / name; }
};

/// Plan and step counts of a named profile: desk = 4 x 2, 2^11 adaptation,
/// 2^9 draws; paper = 32 x 8, 2^15, 2^12. Both keep the last draw.
void apply_profile(RunConfig& config, const std::string& profile);

RunConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const RunConfig& config);

SyntheticConfig synthetic_from_json(const nlohmann::json& doc);
nlohmann::json synthetic_to_json(const SyntheticConfig& config);
FluxModel flux_from_json(const nlohmann::json& doc);
nlohmann::json flux_to_json(const FluxModel& flux);

}  // namespace mucave
