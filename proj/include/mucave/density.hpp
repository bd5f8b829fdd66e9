// Smooth layer-model to density-grid map: sigmoid layer indicators normalised
// into a partition of unity.

#pragma once

#include <vector>

#include "mucave/geometry.hpp"

namespace mucave {

/// 1 / (1 + exp(-u / gamma)).
double sigmoid(double u, double gamma);

/// 0 for u < 0, 0.5 at 0, 1 otherwise.
double heaviside(double u);

/// sigmoid(a) - sigmoid(b), evaluated without cancellation when both saturate.
double sigmoid_difference(double a, double b, double gamma);

class DensityMapper {
 public:
  DensityMapper(const VoxelGrid& grid, const LayerGrid& layers,
                std::vector<DensityArray> unit_densities, double gamma,
                HeightReference reference = HeightReference::center);
  DensityMapper(const Scenario& scenario, double gamma,
                HeightReference reference = HeightReference::center);

  int n_layers() const { return static_cast<int>(unit_.size()); }
  std::size_t n_voxels() const { return grid_.size(); }
  double gamma() const { return gamma_; }
  const VoxelGrid& grid() const { return grid_; }
  const std::vector<int>& column_map() const { return column_map_; }

  /// Smooth indicators D[layer * n_voxels + v], each in [0, 1).
  std::vector<double> indicators(const LayerModel& heights) const;

  /// Normalised weights W, same layout as indicators().
  std::vector<double> weights(const LayerModel& heights) const;

  DensityArray density(const LayerModel& heights) const;

  /// Hard assignment with the Heaviside step; reference only.
  DensityArray heaviside_density(const LayerModel& heights) const;

  /// Per-voxel intermediate values kept for the reverse pass.
  struct Cache {
    std::vector<double> slope;    // sigmoid'(H_l - h) for every layer, [layer][voxel]
    std::vector<double> inv_sum;  // 1 / sum_l D_l per voxel
    Eigen::VectorXd density;
  };

  void forward(const LayerModel& heights, Cache& cache) const;

  /// Accumulates dL/dH for every layer (top included) into grad_heights given
  /// dL/dR in grad_density.
  void backward(const LayerModel& heights, const Cache& cache,
                const Eigen::VectorXd& grad_density, LayerModel& grad_heights) const;

 private:
  void check(const LayerModel& heights) const;

  VoxelGrid grid_;
  LayerGrid layers_;
  std::vector<DensityArray> unit_;
  double gamma_;
  HeightReference reference_;
  std::vector<int> column_map_;
};

}  // namespace mucave
