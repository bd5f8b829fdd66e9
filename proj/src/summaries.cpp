#include "mucave/summaries.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "mucave/text_format.hpp"

namespace mucave {

std::size_t map_index(const std::vector<double>& log_densities) {
  if (log_densities.empty()) throw std::invalid_argument("map_index: no draws");
  std::size_t best = 0;
  for (std::size_t i = 1; i < log_densities.size(); ++i) {
    if (log_densities[i] > log_densities[best]) best = i;
  }
  return best;
}

std::size_t map_index(const DrawSet& draws) {
  std::vector<double> ld;
  ld.reserve(draws.draws.size());
  for (const auto& d : draws.draws) ld.push_back(d.log_density);
  return map_index(ld);
}

std::vector<LayerModel> draw_heights(const PosteriorModel& model, const DrawSet& draws) {
  std::vector<LayerModel> out;
  out.reserve(draws.draws.size());
  for (const auto& d : draws.draws) out.push_back(model.heights(d.latent));
  return out;
}

LayerModel mean_heights(const std::vector<LayerModel>& heights) {
  if (heights.empty()) throw std::invalid_argument("mean_heights: no draws");
  const int nl = heights.front().n_layers();
  const int nc = heights.front().n_cells();
  std::vector<double> sum(static_cast<std::size_t>(nl) * nc, 0.0);
  for (const auto& h : heights) {
    if (h.n_layers() != nl || h.n_cells() != nc) {
      throw std::invalid_argument("mean_heights: draws differ in shape");
    }
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += h.values()[i];
  }
  for (auto& v : sum) v /= static_cast<double>(heights.size());
  return LayerModel(nl, nc, std::move(sum));
}

std::vector<Eigen::VectorXd> indicator_std(const DensityMapper& mapper,
                                           const std::vector<LayerModel>& heights) {
  if (heights.empty()) throw std::invalid_argument("indicator_std: no draws");
  const auto nv = static_cast<Eigen::Index>(mapper.n_voxels());
  const int nl = mapper.n_layers();
  std::vector<Eigen::VectorXd> mean(nl, Eigen::VectorXd::Zero(nv));
  std::vector<Eigen::VectorXd> m2(nl, Eigen::VectorXd::Zero(nv));
  // Welford update per draw keeps memory at two arrays per layer.
  double n = 0.0;
  for (const auto& h : heights) {
    const auto d = mapper.indicators(h);
    n += 1.0;
    for (int l = 0; l < nl; ++l) {
      for (Eigen::Index v = 0; v < nv; ++v) {
        const double x = d[static_cast<std::size_t>(l * nv + v)];
        const double delta = x - mean[l][v];
        mean[l][v] += delta / n;
        m2[l][v] += delta * (x - mean[l][v]);
      }
    }
  }
  for (auto& m : m2) m = (m / n).cwiseMax(0.0).cwiseSqrt();
  return m2;
}

std::vector<double> airgap_risk(const std::vector<LayerModel>& heights, double threshold,
                                int layer) {
  if (heights.empty()) throw std::invalid_argument("airgap_risk: no draws");
  if (threshold < 0.0) throw std::invalid_argument("airgap_risk: threshold must be >= 0");
  const int nc = heights.front().n_cells();
  if (layer < 0 || layer >= heights.front().n_layers()) {
    throw std::invalid_argument("airgap_risk: layer index out of range");
  }
  std::vector<double> risk(static_cast<std::size_t>(nc), 0.0);
  for (const auto& h : heights) {
    for (int c = 0; c < nc; ++c) {
      const double below = layer > 0 ? h(layer - 1, c) : 0.0;
      if (h(layer, c) - below > threshold) risk[c] += 1.0;
    }
  }
  for (auto& r : risk) r /= static_cast<double>(heights.size());
  return risk;
}

double height_rmse(const LayerModel& estimate, const LayerModel& truth,
                   const std::vector<bool>& mask) {
  if (estimate.n_layers() != truth.n_layers() || estimate.n_cells() != truth.n_cells() ||
      static_cast<int>(mask.size()) != truth.n_cells()) {
    throw std::invalid_argument("height_rmse: shapes differ");
  }
  double sum = 0.0;
  int n = 0;
  for (int l = 0; l + 1 < truth.n_layers(); ++l) {
    for (int c = 0; c < truth.n_cells(); ++c) {
      if (!mask[c]) continue;
      const double d = estimate(l, c) - truth(l, c);
      sum += d * d;
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("height_rmse: empty mask");
  return std::sqrt(sum / n);
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty set");
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

void write_slice_csv(const Eigen::VectorXd& values, const VoxelGrid& grid, int j,
                     const std::filesystem::path& path) {
  if (j < 0 || j >= grid.n_y()) throw std::out_of_range("slice index outside the grid");
  if (static_cast<std::size_t>(values.size()) != grid.size()) {
    throw std::invalid_argument("slice values do not match the grid");
  }
  auto out = open_csv(path);
  for (int k = 0; k < grid.n_z(); ++k) {
    for (int i = 0; i < grid.n_x(); ++i) {
      if (i) out << ',';
      out << format_double(values[static_cast<Eigen::Index>(linear_index(i, j, k, grid))]);
    }
    out << '\n';
  }
}

void write_interface_csv(const LayerModel& heights, const Scenario& scenario, int j,
                         const std::filesystem::path& path) {
  const auto& grid = scenario.voxel_grid;
  if (j < 0 || j >= grid.n_y()) throw std::out_of_range("slice index outside the grid");
  const auto map = scenario.column_map();
  auto out = open_csv(path);
  out << "layer,x,z\n";
  for (int l = 0; l < heights.n_layers(); ++l) {
    for (int i = 0; i < grid.n_x(); ++i) {
      const int cell = map[static_cast<std::size_t>(i) * grid.n_y() + j];
      out << l << ',' << format_double(grid.x_center(i)) << ','
          << format_double(scenario.domain.z_min + heights(l, cell)) << '\n';
    }
  }
}

void write_cell_csv(const Scenario& scenario, const std::vector<std::string>& names,
                    const std::vector<std::vector<double>>& columns,
                    const std::filesystem::path& path) {
  if (names.size() != columns.size()) throw std::invalid_argument("cell csv: name count");
  const auto& lg = scenario.layer_grid;
  for (const auto& c : columns) {
    if (static_cast<int>(c.size()) != lg.n_cells()) {
      throw std::invalid_argument("cell csv: column length");
    }
  }
  auto out = open_csv(path);
  out << "row,col,x,y";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (int a = 0; a < lg.n_rows(); ++a) {
    for (int b = 0; b < lg.n_cols(); ++b) {
      const int c = lg.cell(a, b);
      out << a << ',' << b << ',' << format_double(lg.x_center(a)) << ','
          << format_double(lg.y_center(b));
      for (const auto& col : columns) out << ',' << format_double(col[c]);
      out << '\n';
    }
  }
}

}  // namespace mucave
