// Posterior summaries over a set of kept draws: MAP draw, mean heights,
// layer-indicator spread and air-gap exceedance maps.

#pragma once

#include <filesystem>
#include <vector>

#include "mucave/geometry.hpp"
#include "mucave/posterior.hpp"
#include "mucave/runner.hpp"

namespace mucave {

/// Index of the draw with the largest stored log density; first one wins ties.
std::size_t map_index(const std::vector<double>& log_densities);
std::size_t map_index(const DrawSet& draws);

/// Heights of every draw, in draw order.
std::vector<LayerModel> draw_heights(const PosteriorModel& model, const DrawSet& draws);

LayerModel mean_heights(const std::vector<LayerModel>& heights);

/// Population standard deviation across draws of each smooth layer indicator,
/// laid out [layer][voxel].
std::vector<Eigen::VectorXd> indicator_std(const DensityMapper& mapper,
                                           const std::vector<LayerModel>& heights);

/// Per layer-grid cell, fraction of draws whose layer `layer` is thicker than
/// `threshold` (thickness = H[layer] - H[layer - 1]).
std::vector<double> airgap_risk(const std::vector<LayerModel>& heights, double threshold,
                                int layer = 1);

/// Root-mean-square height error over the inferred layers (all but the top)
/// of the cells where mask is true.
double height_rmse(const LayerModel& estimate, const LayerModel& truth,
                   const std::vector<bool>& mask);

double median(std::vector<double> values);

/// Voxels of the x-z plane at y index j as a CSV grid: one row per z index
/// (bottom first), one column per x index.
void write_slice_csv(const Eigen::VectorXd& voxel_values, const VoxelGrid& grid, int j,
                     const std::filesystem::path& path);

/// Interface heights along y index j: columns layer, x, z (absolute).
void write_interface_csv(const LayerModel& heights, const Scenario& scenario, int j,
                         const std::filesystem::path& path);

/// Cells as rows of (row, col, x, y, value...) with the given column names.
void write_cell_csv(const Scenario& scenario, const std::vector<std::string>& names,
                    const std::vector<std::vector<double>>& columns,
                    const std::filesystem::path& path);

}  // namespace mucave
