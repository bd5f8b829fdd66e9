#include "mucave/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mucave {

void Domain::validate() const {
  if (!(x_max > x_min) || !(y_max > y_min) || !(z_max > z_min)) {
    throw ConfigError("domain: every max bound must exceed its min bound");
  }
}

LayerGrid::LayerGrid(const Domain& domain, int n_rows, int n_cols)
    : n_rows_{n_rows}, n_cols_{n_cols}, x0_{domain.x_min}, y0_{domain.y_min} {
  if (n_rows < 2 || n_cols < 2) {
    throw ConfigError("layer grid needs at least 2 rows and 2 columns");
  }
  dx_ = (domain.x_max - domain.x_min) / n_rows;
  dy_ = (domain.y_max - domain.y_min) / n_cols;
}

VoxelGrid::VoxelGrid(const Domain& domain, int n_x, int n_y, int n_z)
    : n_x_{n_x}, n_y_{n_y}, n_z_{n_z},
      x0_{domain.x_min}, y0_{domain.y_min}, z0_{domain.z_min} {
  if (n_x < 1 || n_y < 1 || n_z < 1) {
    throw ConfigError("voxel grid sizes must be positive");
  }
  dx_ = (domain.x_max - domain.x_min) / n_x;
  dy_ = (domain.y_max - domain.y_min) / n_y;
  dz_ = (domain.z_max - domain.z_min) / n_z;
}

std::array<int, 3> VoxelGrid::unravel(std::size_t index) const {
  if (index >= size()) throw std::out_of_range("voxel index out of range");
  const auto nz = static_cast<std::size_t>(n_z_);
  const auto nyz = static_cast<std::size_t>(n_y_) * nz;
  return {static_cast<int>(index / nyz), static_cast<int>((index % nyz) / nz),
          static_cast<int>(index % nz)};
}

std::size_t linear_index(int i, int j, int k, const VoxelGrid& grid) {
  if (i < 0 || i >= grid.n_x() || j < 0 || j >= grid.n_y() || k < 0 || k >= grid.n_z()) {
    std::ostringstream msg;
    msg << "voxel (" << i << "," << j << "," << k << ") outside grid (" << grid.n_x()
        << "," << grid.n_y() << "," << grid.n_z() << ")";
    throw std::out_of_range(msg.str());
  }
  return (static_cast<std::size_t>(i) * grid.n_y() + j) * grid.n_z() + k;
}

std::vector<int> column_cell_map(const VoxelGrid& voxels, const LayerGrid& layers) {
  std::vector<int> map(static_cast<std::size_t>(voxels.n_x()) * voxels.n_y());
  const bool identity = voxels.n_x() == layers.n_rows() && voxels.n_y() == layers.n_cols();
  const auto [x0, y0, z0] = voxels.origin();
  for (int i = 0; i < voxels.n_x(); ++i) {
    for (int j = 0; j < voxels.n_y(); ++j) {
      int row = i, col = j;
      if (!identity) {
        row = static_cast<int>(std::floor((voxels.x_center(i) - x0) / layers.dx()));
        col = static_cast<int>(std::floor((voxels.y_center(j) - y0) / layers.dy()));
        row = std::clamp(row, 0, layers.n_rows() - 1);
        col = std::clamp(col, 0, layers.n_cols() - 1);
      }
      map[static_cast<std::size_t>(i) * voxels.n_y() + j] = layers.cell(row, col);
    }
  }
  return map;
}

LayerModel::LayerModel(int n_layers, int n_cells)
    : LayerModel(n_layers, n_cells,
                 std::vector<double>(static_cast<std::size_t>(n_layers) * n_cells, 0.0)) {}

LayerModel::LayerModel(int n_layers, int n_cells, std::vector<double> heights)
    : n_layers_{n_layers}, n_cells_{n_cells}, h_{std::move(heights)} {
  if (n_layers < 1 || n_cells < 1) throw std::invalid_argument("empty layer model");
  if (h_.size() != static_cast<std::size_t>(n_layers) * n_cells) {
    throw std::invalid_argument("layer model: height array has the wrong length");
  }
}

void LayerModel::validate(double min_thickness) const {
  for (int c = 0; c < n_cells_; ++c) {
    double below = 0.0;
    for (int l = 0; l < n_layers_; ++l) {
      const double h = (*this)(l, c);
      if (!std::isfinite(h) || !(h - below > 0.0) || h - below < min_thickness) {
        std::ostringstream msg;
        msg << "layer model not strictly increasing at layer " << l << ", cell " << c
            << " (" << below << " -> " << h << ")";
        throw std::invalid_argument(msg.str());
      }
      below = h;
    }
  }
}

bool LayerModel::is_valid(double min_thickness) const {
  try {
    validate(min_thickness);
    return true;
  } catch (const std::invalid_argument&) {
    return false;
  }
}

void Scenario::validate() const {
  domain.validate();
  if (n_layers < 2) throw ConfigError("scenario needs at least 2 layers");
  if (static_cast<int>(unit_densities.size()) != n_layers) {
    std::ostringstream msg;
    msg << "scenario has " << n_layers << " layers but " << unit_densities.size()
        << " unit densities";
    throw ConfigError(msg.str());
  }
  for (const auto& d : unit_densities) {
    if (static_cast<std::size_t>(d.size()) != voxel_grid.size()) {
      throw ConfigError("unit density array length does not match the voxel grid");
    }
    if ((d.array() < 0.0).any()) throw ConfigError("negative unit density");
  }
  if (static_cast<int>(top_surface.size()) != layer_grid.n_cells()) {
    throw ConfigError("top surface length does not match the layer grid");
  }
  for (double t : top_surface) {
    if (!(t > 0.0) || t > domain.height() * (1.0 + 1e-12)) {
      throw ConfigError("top surface must lie inside the domain column");
    }
  }
  if (!(t_min > 0.0)) throw ConfigError("t_min must be positive");
  if (truth) {
    if (truth->n_layers() != n_layers || truth->n_cells() != layer_grid.n_cells()) {
      throw ConfigError("true layer model shape does not match the scenario");
    }
    try {
      truth->validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("true layer model: ") + e.what());
    }
    for (int c = 0; c < layer_grid.n_cells(); ++c) {
      if (std::abs((*truth)(n_layers - 1, c) - top_surface[c]) > 1e-9) {
        throw ConfigError("true layer model top differs from the top surface");
      }
    }
  }
}

double synthetic_cave_height(const SyntheticConfig& config, double x, double y) {
  const double r = std::hypot(x - config.center_x, y - config.center_y);
  if (r >= config.cave_radius) return 0.0;
  if (config.shape == CaveShape::cylinder) return config.cave_height;
  const double s = r / config.cave_radius;
  return config.cave_height * std::sqrt(1.0 - s * s);
}

Scenario make_synthetic_truth(const SyntheticConfig& config) {
  if (config.n_rows < 2 || config.n_cols < 2 || config.n_z < 1 || !(config.spacing > 0)) {
    throw ConfigError("synthetic config: invalid grid sizes");
  }
  if (config.muck_fraction < 0.0 || config.muck_fraction > 1.0 || config.gap_amplitude < 0.0) {
    throw ConfigError("synthetic config: muck fraction or gap amplitude out of range");
  }
  Domain domain{.x_min = -0.5 * config.n_rows * config.spacing,
                .x_max = 0.5 * config.n_rows * config.spacing,
                .y_min = -0.5 * config.n_cols * config.spacing,
                .y_max = 0.5 * config.n_cols * config.spacing,
                .z_min = config.z_min,
                .z_max = config.z_max};
  domain.validate();
  if (config.center_x - config.cave_radius < domain.x_min ||
      config.center_x + config.cave_radius > domain.x_max ||
      config.center_y - config.cave_radius < domain.y_min ||
      config.center_y + config.cave_radius > domain.y_max) {
    throw ConfigError("synthetic config: cave footprint extends outside the domain");
  }

  LayerGrid layers(domain, config.n_rows, config.n_cols);
  VoxelGrid voxels(domain, config.n_rows, config.n_cols, config.n_z);
  const double top = domain.height();
  const double t_min = config.t_min;

  LayerModel truth(3, layers.n_cells());
  for (int a = 0; a < layers.n_rows(); ++a) {
    for (int b = 0; b < layers.n_cols(); ++b) {
      const int c = layers.cell(a, b);
      const double x = layers.x_center(a);
      const double y = layers.y_center(b);
      const double cave = synthetic_cave_height(config, x, y);
      const double muck = std::max(t_min, config.muck_fraction * cave);
      double gap = t_min;
      if (cave > 0.0 &&
          std::hypot(x - config.center_x, y - config.center_y) < config.gap_radius) {
        gap = std::max(t_min, config.gap_amplitude);
      }
      if (muck + gap + t_min > top) {
        throw ConfigError("synthetic config: cave does not fit below the surface");
      }
      truth(0, c) = muck;
      truth(1, c) = muck + gap;
      truth(2, c) = top;
    }
  }

  Scenario scenario{.domain = domain,
                    .layer_grid = layers,
                    .voxel_grid = voxels,
                    .n_layers = 3,
                    .top_surface = std::vector<double>(layers.n_cells(), top),
                    .truth = truth,
                    .unit_densities = {},
                    .t_min = t_min};
  for (double rho : config.densities) {
    scenario.unit_densities.push_back(DensityArray::Constant(voxels.size(), rho));
  }
  scenario.validate();
  return scenario;
}

}  // namespace mucave
