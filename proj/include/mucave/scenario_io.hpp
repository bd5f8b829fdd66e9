// JSON persistence for scenarios.
//
// Schema:
//   domain      {x_min, x_max, y_min, y_max, z_min, z_max}
//   layer_grid  {n_rows, n_cols}
//   voxel_grid  {n_x, n_y, n_z}
//   densities   [per layer: number | flat list | {"file": path to a flat list}]
//   heights     [per layer: n_rows x n_cols nested list]      (optional)
//   top_surface number | n_rows x n_cols nested list          (if no heights)
//   t_min       number                                        (optional)
//
// Relative density-file paths resolve against the scenario file's directory.

#pragma once

#include <filesystem>

#include "json.hpp"

#include "mucave/geometry.hpp"

namespace mucave {

Scenario scenario_from_json(const nlohmann::json& doc,
                            const std::filesystem::path& base_dir = {});
nlohmann::json scenario_to_json(const Scenario& scenario);

Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& scenario, const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const nlohmann::json& doc, const std::filesystem::path& path);

}  // namespace mucave
