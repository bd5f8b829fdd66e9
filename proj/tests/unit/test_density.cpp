#include <doctest.h>

#include <cmath>
#include <random>

#include "mucave/density.hpp"

using namespace mucave;

namespace {

// 2 x 2 columns of n_z voxels; voxel k of the first column has index k.
struct Column {
  VoxelGrid grid;
  LayerGrid layers;
};

Column column(int n_z, double height) {
  Domain d{.x_min = 0, .x_max = 10, .y_min = 0, .y_max = 10, .z_min = 0, .z_max = height};
  return {VoxelGrid(d, 2, 2, n_z), LayerGrid(d, 2, 2)};
}

std::vector<DensityArray> constants(std::size_t n, std::initializer_list<double> values) {
  std::vector<DensityArray> out;
  for (double v : values) out.push_back(DensityArray::Constant(static_cast<Eigen::Index>(n), v));
  return out;
}

LayerModel random_model(std::mt19937_64& rng, int n_layers, int n_cells, double top) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LayerModel h(n_layers, n_cells);
  for (int c = 0; c < n_cells; ++c) {
    std::vector<double> cuts(n_layers - 1);
    for (auto& x : cuts) x = 0.01 + (top - 0.02) * u(rng);
    std::sort(cuts.begin(), cuts.end());
    for (int l = 0; l + 1 < n_layers; ++l) h(l, c) = cuts[l] + 1e-3 * l;
    h(n_layers - 1, c) = top;
  }
  return h;
}

}  // namespace

TEST_CASE("scaled sigmoid") {
  CHECK(sigmoid(0.0, 1.0) == 0.5);
  CHECK(sigmoid(0.0, 0.01) == 0.5);
  CHECK(sigmoid(1.0, 1.0) == doctest::Approx(0.73106).epsilon(1e-5));
  CHECK(sigmoid(1.0, 0.1) == doctest::Approx(0.9999546).epsilon(1e-7));
  CHECK(std::abs(sigmoid(1.0, 0.1) - heaviside(1.0)) < 1e-4);
  CHECK(sigmoid_difference(40.0, 30.0, 1.0) ==
        doctest::Approx(std::exp(-30.0) - std::exp(-40.0)).epsilon(1e-10));
}

TEST_CASE("indicators saturate inside layers and split at interfaces") {
  auto col = column(100, 100.0);  // voxel centres at k + 0.5
  DensityMapper m(col.grid, col.layers, constants(col.grid.size(), {1, 2, 3}), 1.0);
  LayerModel h(3, 4);
  for (int c = 0; c < 4; ++c) {
    h(0, c) = 30.5;
    h(1, c) = 60.0;
    h(2, c) = 100.0;
  }
  const auto d = m.indicators(h);
  const std::size_t nv = m.n_voxels();
  // Voxel 15 sits 15 m inside layer 0.
  CHECK(d[0 * nv + 15] == doctest::Approx(1.0).epsilon(1e-4));
  // Voxel 30 is centred exactly on the first interface.
  CHECK(d[0 * nv + 30] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(d[1 * nv + 30] == doctest::Approx(0.5).epsilon(1e-9));
  for (double x : d) {
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }

  LayerModel empty_middle = h;
  for (int c = 0; c < 4; ++c) empty_middle(0, c) = empty_middle(1, c) = 40.0;
  const auto e = m.indicators(empty_middle);
  for (std::size_t v = 0; v < nv; ++v) CHECK(e[nv + v] == 0.0);
}

TEST_CASE("weights form a partition of unity") {
  Domain d{.x_min = 0, .x_max = 50, .y_min = 0, .y_max = 50, .z_min = 0, .z_max = 100};
  VoxelGrid g(d, 5, 5, 10);
  LayerGrid lg(d, 5, 5);
  DensityMapper m(g, lg, constants(g.size(), {2.0, 0.001, 2.7}), 1.0);
  std::mt19937_64 rng(21);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto w = m.weights(random_model(rng, 3, 25, 100.0));
    for (std::size_t v = 0; v < g.size(); ++v) {
      double sum = 0.0;
      for (int l = 0; l < 3; ++l) sum += w[l * g.size() + v];
      worst = std::max(worst, std::abs(sum - 1.0));
    }
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("smoothed density is a convex combination") {
  Domain d{.x_min = 0, .x_max = 30, .y_min = 0, .y_max = 30, .z_min = 0, .z_max = 60};
  VoxelGrid g(d, 3, 3, 12);
  LayerGrid lg(d, 3, 3);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  std::vector<DensityArray> unit(3, DensityArray(g.size()));
  for (auto& a : unit) {
    for (auto& x : a) x = u(rng);
  }
  DensityMapper m(g, lg, unit, 2.0);
  const auto r = m.density(random_model(rng, 3, 9, 60.0));
  for (Eigen::Index v = 0; v < r.size(); ++v) {
    const double lo = std::min({unit[0][v], unit[1][v], unit[2][v]});
    const double hi = std::max({unit[0][v], unit[1][v], unit[2][v]});
    CHECK(r[v] >= lo - 1e-12);
    CHECK(r[v] <= hi + 1e-12);
  }

  DensityMapper flat(g, lg, constants(g.size(), {1.7, 1.7, 1.7}), 1.0);
  const auto c = flat.density(random_model(rng, 3, 9, 60.0));
  CHECK((c.array() - 1.7).abs().maxCoeff() <= 1e-14);
}

TEST_CASE("air gap column example") {
  // 20 m voxels so that voxel 12 is centred at exactly 250 m.
  auto col = column(25, 500.0);
  DensityMapper m(col.grid, col.layers, constants(col.grid.size(), {2.0, 0.001, 2.7}), 1.0);
  LayerModel h(3, 4);
  for (int c = 0; c < 4; ++c) {
    h(0, c) = 200.0;
    h(1, c) = 300.0;
    h(2, c) = 500.0;
  }
  const auto r = m.density(h);
  REQUIRE(col.grid.sample_height(12) == 250.0);
  CHECK(std::abs(r[12] - 0.001) <= 1e-3);
}

TEST_CASE("Heaviside limit away from interfaces") {
  Domain d{.x_min = 0, .x_max = 40, .y_min = 0, .y_max = 40, .z_min = 0, .z_max = 100};
  VoxelGrid g(d, 4, 4, 40);
  LayerGrid lg(d, 4, 4);
  std::mt19937_64 rng(8);
  const auto h = random_model(rng, 3, 16, 100.0);
  for (double gamma : {1.0, 0.1, 0.01}) {
    DensityMapper m(g, lg, constants(g.size(), {2.0, 0.001, 2.7}), gamma);
    const auto smooth = m.density(h);
    const auto hard = m.heaviside_density(h);
    double worst = 0.0;
    for (std::size_t v = 0; v < g.size(); ++v) {
      const auto [i, j, k] = g.unravel(v);
      const int cell = m.column_map()[static_cast<std::size_t>(i) * 4 + j];
      const double z = g.sample_height(k);
      bool near = false;
      for (int l = 0; l < 3; ++l) near = near || std::abs(h(l, cell) - z) < 10 * gamma;
      if (!near) worst = std::max(worst, std::abs(smooth[v] - hard[v]));
    }
    // A centre 10 gamma from an interface is off by at most 2.7 exp(-10).
    CHECK(worst <= 2e-4);
  }
}

TEST_CASE("reverse pass matches central differences") {
  Domain d{.x_min = 0, .x_max = 20, .y_min = 0, .y_max = 20, .z_min = 0, .z_max = 12};
  VoxelGrid g(d, 2, 2, 6);
  LayerGrid lg(d, 2, 2);
  DensityMapper m(g, lg, constants(g.size(), {2.0, 0.001, 2.7}), 1.0);
  std::mt19937_64 rng(4);
  const auto h = random_model(rng, 3, 4, 12.0);
  std::normal_distribution<double> n01;
  Eigen::VectorXd w(g.size());
  for (auto& x : w) x = n01(rng);

  DensityMapper::Cache cache;
  m.forward(h, cache);
  LayerModel grad(3, 4);
  m.backward(h, cache, w, grad);

  const double step = 1e-4;
  for (int l = 0; l < 3; ++l) {
    for (int c = 0; c < 4; ++c) {
      LayerModel up = h, down = h;
      up(l, c) += step;
      down(l, c) -= step;
      const double fd = (w.dot(m.density(up)) - w.dot(m.density(down))) / (2 * step);
      CHECK(std::abs(grad(l, c) - fd) <= 1e-6 * std::max(std::abs(fd), 1e-3));
    }
  }
}
