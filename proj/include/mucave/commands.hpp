// The five CLI commands and the file formats they exchange. Every command
// reads a validated RunConfig and writes into its output directory:
//   simulate     counts.csv, truth.json
//   sensitivity  sensitivity.txt
//   sample       draws.ndjson, run_meta.json
//   diagnose     diagnostics.json
//   summarize    diagnostics.json, summary.json and CSV maps / slices

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mucave/config.hpp"
#include "mucave/posterior.hpp"

namespace mucave {

/// Exit codes shared by the CLI.
enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitNumeric = 3, kExitPartial = 4 };

/// CSV with header sensor_id,pixel_id,count, pixel-major within each sensor.
void write_counts_csv(const CountData& counts, int n_pps, const std::filesystem::path& path);
CountData read_counts_csv(const std::filesystem::path& path);

/// Nearest integer with ties to even; negative means clamp to 0.
std::vector<std::int64_t> round_counts(const Eigen::VectorXd& lambda);

/// Reads counts and the sensitivity file and checks both against the config.
PosteriorModel load_posterior(const RunConfig& config, const Scenario& scenario);

/// "z[layer=l,row=a,col=b]" or "rho_raw[layer=l]".
std::string coordinate_name(const LatentLayout& layout, const LayerGrid& grid, std::size_t index);

/// Cells whose voxel columns are crossed by at least one ray.
std::vector<bool> covered_cells(const SensitivityMatrix& s, const Scenario& scenario);

int cmd_simulate(const RunConfig& config, std::ostream& log);
int cmd_sensitivity(const RunConfig& config, std::ostream& log);
int cmd_sample(const RunConfig& config, std::ostream& log);
int cmd_diagnose(const RunConfig& config, std::ostream& log);
int cmd_summarize(const RunConfig& config, std::ostream& log);

}  // namespace mucave
