#include "mucave/density.hpp"

#include <cmath>
#include <sstream>

namespace mucave {

double sigmoid(double u, double gamma) { return 1.0 / (1.0 + std::exp(-u / gamma)); }

double heaviside(double u) {
  if (u < 0.0) return 0.0;
  if (u == 0.0) return 0.5;
  return 1.0;
}

double sigmoid_difference(double a, double b, double gamma) {
  // sigmoid(x) = 1 - sigmoid(-x): subtract the small tails when both saturate high.
  if (a + b > 0.0) return sigmoid(-b, gamma) - sigmoid(-a, gamma);
  return sigmoid(a, gamma) - sigmoid(b, gamma);
}

DensityMapper::DensityMapper(const VoxelGrid& grid, const LayerGrid& layers,
                             std::vector<DensityArray> unit_densities, double gamma,
                             HeightReference reference)
    : grid_{grid},
      layers_{layers},
      unit_{std::move(unit_densities)},
      gamma_{gamma},
      reference_{reference},
      column_map_{column_cell_map(grid, layers)} {
  if (!(gamma > 0.0)) throw std::invalid_argument("sigmoid scale gamma must be positive");
  if (unit_.empty()) throw std::invalid_argument("density mapper needs unit densities");
  for (const auto& d : unit_) {
    if (static_cast<std::size_t>(d.size()) != grid_.size()) {
      throw std::invalid_argument("unit density length does not match the voxel grid");
    }
  }
}

DensityMapper::DensityMapper(const Scenario& scenario, double gamma, HeightReference reference)
    : DensityMapper(scenario.voxel_grid, scenario.layer_grid, scenario.unit_densities, gamma,
                    reference) {}

void DensityMapper::check(const LayerModel& heights) const {
  if (heights.n_layers() != n_layers() || heights.n_cells() != layers_.n_cells()) {
    throw std::invalid_argument("layer model shape does not match the density mapper");
  }
}

std::vector<double> DensityMapper::indicators(const LayerModel& heights) const {
  check(heights);
  const std::size_t nv = n_voxels();
  std::vector<double> d(nv * n_layers());
  const int nz = grid_.n_z();
  for (std::size_t col = 0; col < column_map_.size(); ++col) {
    const int cell = column_map_[col];
    for (int k = 0; k < nz; ++k) {
      const std::size_t v = col * nz + k;
      const double h = grid_.sample_height(k, reference_);
      double below = 0.0;
      for (int l = 0; l < n_layers(); ++l) {
        const double above = heights(l, cell);
        d[l * nv + v] = sigmoid_difference(above - h, below - h, gamma_);
        below = above;
      }
    }
  }
  return d;
}

std::vector<double> DensityMapper::weights(const LayerModel& heights) const {
  auto w = indicators(heights);
  const std::size_t nv = n_voxels();
  for (std::size_t v = 0; v < nv; ++v) {
    double sum = 0.0;
    for (int l = 0; l < n_layers(); ++l) sum += w[l * nv + v];
    for (int l = 0; l < n_layers(); ++l) w[l * nv + v] /= sum;
  }
  return w;
}

DensityArray DensityMapper::density(const LayerModel& heights) const {
  Cache cache;
  forward(heights, cache);
  return std::move(cache.density);
}

DensityArray DensityMapper::heaviside_density(const LayerModel& heights) const {
  check(heights);
  DensityArray r = DensityArray::Zero(static_cast<Eigen::Index>(n_voxels()));
  const int nz = grid_.n_z();
  for (std::size_t col = 0; col < column_map_.size(); ++col) {
    const int cell = column_map_[col];
    for (int k = 0; k < nz; ++k) {
      const auto v = static_cast<Eigen::Index>(col * nz + k);
      const double h = grid_.sample_height(k, reference_);
      double below = 0.0;
      for (int l = 0; l < n_layers(); ++l) {
        const double above = heights(l, cell);
        r[v] += (heaviside(above - h) - heaviside(below - h)) * unit_[l][v];
        below = above;
      }
    }
  }
  return r;
}

void DensityMapper::forward(const LayerModel& heights, Cache& cache) const {
  check(heights);
  const std::size_t nv = n_voxels();
  const int nl = n_layers();
  const int nz = grid_.n_z();
  cache.slope.resize(nv * nl);
  cache.inv_sum.resize(nv);
  cache.density.resize(static_cast<Eigen::Index>(nv));
  for (std::size_t col = 0; col < column_map_.size(); ++col) {
    const int cell = column_map_[col];
    for (int k = 0; k < nz; ++k) {
      const std::size_t v = col * nz + k;
      const auto vi = static_cast<Eigen::Index>(v);
      const double h = grid_.sample_height(k, reference_);
      double below = 0.0;
      double sum = 0.0;
      double weighted = 0.0;
      for (int l = 0; l < nl; ++l) {
        const double u = heights(l, cell) - h;
        const double e = std::exp(-std::abs(u) / gamma_);
        // sigmoid(u) * sigmoid(-u) / gamma, stable for either sign of u
        cache.slope[l * nv + v] = e / ((1.0 + e) * (1.0 + e) * gamma_);
        const double d = sigmoid_difference(u, below - h, gamma_);
        sum += d;
        weighted += d * unit_[l][vi];
        below = heights(l, cell);
      }
      if (!(sum > 1e-300)) {
        std::ostringstream msg;
        msg << "layer indicators vanish at voxel " << v << " (height " << h << ")";
        throw NumericError(msg.str());
      }
      cache.inv_sum[v] = 1.0 / sum;
      cache.density[vi] = weighted / sum;
    }
  }
}

void DensityMapper::backward(const LayerModel& heights, const Cache& cache,
                             const Eigen::VectorXd& grad_density,
                             LayerModel& grad_heights) const {
  check(heights);
  const std::size_t nv = n_voxels();
  const int nl = n_layers();
  const int nz = grid_.n_z();
  for (std::size_t col = 0; col < column_map_.size(); ++col) {
    const int cell = column_map_[col];
    for (int k = 0; k < nz; ++k) {
      const std::size_t v = col * nz + k;
      const auto vi = static_cast<Eigen::Index>(v);
      const double g = grad_density[vi];
      if (g == 0.0) continue;
      const double scale = g * cache.inv_sum[v];
      // H_l raises D_l and lowers D_{l+1}.
      for (int l = 0; l + 1 < nl; ++l) {
        grad_heights(l, cell) +=
            scale * cache.slope[l * nv + v] * (unit_[l][vi] - unit_[l + 1][vi]);
      }
      grad_heights(nl - 1, cell) +=
          scale * cache.slope[(nl - 1) * nv + v] * (unit_[nl - 1][vi] - cache.density[vi]);
    }
  }
}

}  // namespace mucave
