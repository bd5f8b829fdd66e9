// Inversion domain, layer grid, voxel grid and the layer-model representation
// of cave geometry.
//
// Heights are always stored relative to the domain floor (z_min). Layer index
// 0 is the bottom unit; the last layer is the known top surface.

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mucave {

/// Piecewise-constant density field in voxel linear-index order (g/cm^3).
using DensityArray = Eigen::VectorXd;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Domain {
  double x_min = 0, x_max = 1;
  double y_min = 0, y_max = 1;
  double z_min = 0, z_max = 1;

  void validate() const;
  double height() const { return z_max - z_min; }
};

class LayerGrid {
 public:
  LayerGrid(const Domain& domain, int n_rows, int n_cols);

  int n_rows() const { return n_rows_; }
  int n_cols() const { return n_cols_; }
  int n_cells() const { return n_rows_ * n_cols_; }
  double dx() const { return dx_; }
  double dy() const { return dy_; }
  int cell(int row, int col) const { return row * n_cols_ + col; }
  double x_center(int row) const { return x0_ + (row + 0.5) * dx_; }
  double y_center(int col) const { return y0_ + (col + 0.5) * dy_; }

 private:
  int n_rows_, n_cols_;
  double x0_, y0_, dx_, dy_;
};

/// Where within a voxel the layer indicators are evaluated.
enum class HeightReference { center, lower_face };

class VoxelGrid {
 public:
  VoxelGrid(const Domain& domain, int n_x, int n_y, int n_z);

  int n_x() const { return n_x_; }
  int n_y() const { return n_y_; }
  int n_z() const { return n_z_; }
  std::size_t size() const {
    return static_cast<std::size_t>(n_x_) * n_y_ * n_z_;
  }
  double dx() const { return dx_; }
  double dy() const { return dy_; }
  double dz() const { return dz_; }
  std::array<double, 3> origin() const { return {x0_, y0_, z0_}; }

  double x_center(int i) const { return x0_ + (i + 0.5) * dx_; }
  double y_center(int j) const { return y0_ + (j + 0.5) * dy_; }

  /// Representative height of layer k above the floor.
  double sample_height(int k, HeightReference ref = HeightReference::center) const {
    return ref == HeightReference::center ? (k + 0.5) * dz_ : k * dz_;
  }

  std::array<int, 3> unravel(std::size_t index) const;

 private:
  int n_x_, n_y_, n_z_;
  double x0_, y0_, z0_, dx_, dy_, dz_;
};

/// Right-most index varies fastest: i*n_y*n_z + j*n_z + k.
std::size_t linear_index(int i, int j, int k, const VoxelGrid& grid);

/// Maps each voxel column (i, j) to the layer-grid cell containing its centre.
/// Identity (i*n_cols + j) when the two grids coincide.
std::vector<int> column_cell_map(const VoxelGrid& voxels, const LayerGrid& layers);

/// Layer heights H[layer][cell], metres above the domain floor.
class LayerModel {
 public:
  LayerModel() = default;
  LayerModel(int n_layers, int n_cells);
  LayerModel(int n_layers, int n_cells, std::vector<double> heights);

  int n_layers() const { return n_layers_; }
  int n_cells() const { return n_cells_; }

  double& operator()(int layer, int cell) { return h_[index(layer, cell)]; }
  double operator()(int layer, int cell) const { return h_[index(layer, cell)]; }

  std::span<const double> layer(int l) const {
    return {h_.data() + static_cast<std::size_t>(l) * n_cells_,
            static_cast<std::size_t>(n_cells_)};
  }
  std::span<double> layer(int l) {
    return {h_.data() + static_cast<std::size_t>(l) * n_cells_,
            static_cast<std::size_t>(n_cells_)};
  }
  const std::vector<double>& values() const { return h_; }

  /// Throws std::invalid_argument naming the first violated constraint:
  /// 0 < H[0], H[l-1] < H[l] with margin >= min_thickness.
  void validate(double min_thickness = 0.0) const;
  bool is_valid(double min_thickness = 0.0) const;

 private:
  std::size_t index(int layer, int cell) const {
    return static_cast<std::size_t>(layer) * n_cells_ + cell;
  }

  int n_layers_ = 0;
  int n_cells_ = 0;
  std::vector<double> h_;
};

struct Scenario {
  Domain domain;
  LayerGrid layer_grid;
  VoxelGrid voxel_grid;
  int n_layers = 0;
  /// Known top surface per layer cell, metres above the floor.
  std::vector<double> top_surface;
  std::optional<LayerModel> truth;
  /// One density array per layer, each of length voxel_grid.size().
  std::vector<DensityArray> unit_densities;
  double t_min = 0.01;

  /// Checks every cross-field invariant; throws ConfigError.
  void validate() const;
  std::vector<int> column_map() const { return column_cell_map(voxel_grid, layer_grid); }
};

enum class CaveShape { cylinder, dome };

struct SyntheticConfig {
  int n_rows = 19;
  int n_cols = 19;
  double spacing = 40.0;
  double z_min = -25.0;
  double z_max = 625.0;
  int n_z = 20;
  double center_x = 0.0;
  double center_y = 0.0;
  double cave_radius = 200.0;
  double cave_height = 400.0;
  CaveShape shape = CaveShape::cylinder;
  double muck_fraction = 0.75;
  double gap_amplitude = 50.0;
  double gap_radius = 140.0;
  double t_min = 0.01;
  std::array<double, 3> densities{2.0, 0.001, 2.7};  // muck, air, rock
};

/// Local cave height at (x, y): 0 outside the footprint.
double synthetic_cave_height(const SyntheticConfig& config, double x, double y);

/// Three-layer block-cave scenario: muck pile, air gap, rock. The domain is
/// centred on the origin in x-y.
Scenario make_synthetic_truth(const SyntheticConfig& config);

}  // namespace mucave
