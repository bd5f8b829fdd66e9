// Small synthetic inversion problems for the posterior and sampler tests.

#pragma once

#include <cmath>

#include "mucave/posterior.hpp"
#include "mucave/sensitivity.hpp"

namespace mucave::testing {

struct Problem {
  Scenario scenario;
  std::vector<Sensor> sensors;
  FluxModel flux = FluxModel::exponential(1.0, 1.0);
  SensitivityMatrix sensitivity;
  CountData counts;
};

/// n x n layer grid with a 3-layer cave and one sensor near the middle of the floor.
/// Counts are the rounded exact expectation at the true model.
inline Problem small_problem(int n, int n_z = 10, double i0 = 1e6, double gamma = 1.0,
                             Eigen::Vector2d sensor_xy = {3.0, -2.0}) {
  SyntheticConfig c;
  c.n_rows = n;
  c.n_cols = n;
  c.spacing = 40.0;
  c.n_z = n_z;
  c.cave_radius = 0.35 * n * c.spacing;
  c.gap_radius = 0.25 * n * c.spacing;
  c.cave_height = 400.0;
  Problem p{.scenario = make_synthetic_truth(c)};
  Sensor s;
  s.position = {sensor_xy.x(), sensor_xy.y(), c.z_min};
  s.n_zen = 3;
  s.n_azi = 4;
  p.sensors = {s};
  p.flux = FluxModel::exponential(i0, 1000.0, 2.0, 1.0);
  const auto& sc = p.scenario;
  const DensityArray r0 = sc.unit_densities.back();
  p.sensitivity = build_sensitivity(r0, sc.voxel_grid, p.sensors, p.flux, {.n_sub = 1}, 1);
  DensityMapper mapper(sc, gamma);
  const Eigen::VectorXd lambda =
      expected_counts(mapper.density(*sc.truth), sc.voxel_grid, p.sensors, p.flux, {.n_sub = 1});
  for (double l : lambda) p.counts.counts.push_back(static_cast<std::int64_t>(std::nearbyint(l)));
  return p;
}

inline PosteriorModel make_model(const Problem& p, PosteriorOptions options = {}) {
  return PosteriorModel(p.scenario, p.sensitivity, p.counts, options);
}

}  // namespace mucave::testing
