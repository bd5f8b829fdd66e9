#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "mucave/sensitivity.hpp"

using namespace mucave;

namespace {

struct Setup {
  VoxelGrid grid;
  std::vector<Sensor> sensors;
  FluxModel flux;
  QuadratureSpec quad;
  DensityArray r0;
};

Setup small_setup() {
  Domain d{.x_min = -60, .x_max = 60, .y_min = -60, .y_max = 60, .z_min = 0, .z_max = 200};
  VoxelGrid g(d, 3, 3, 4);
  Sensor s;
  s.position = {5, -3, 0};
  s.n_zen = 3;
  s.n_azi = 4;
  DensityArray r0 = DensityArray::Constant(g.size(), 2.65);
  return {g, {s}, FluxModel::exponential(1e5, 900.0), {.n_sub = 2}, r0};
}

}  // namespace

TEST_CASE("G matches central differences of the exact forward model") {
  const auto st = small_setup();
  const RayBundle bundle(st.grid, st.sensors, st.quad);
  const auto s = build_sensitivity(st.r0, bundle, st.flux, 1);
  CHECK(s.lambda0.isApprox(expected_counts(st.r0, bundle, st.flux), 1e-14));
  const Eigen::MatrixXd dense = s.g;
  const double h = 1e-2;
  int checked = 0;
  for (std::size_t v = 0; v < st.grid.size(); ++v) {
    DensityArray up = st.r0, down = st.r0;
    up[v] += h;
    down[v] -= h;
    const Eigen::VectorXd fd =
        (expected_counts(up, bundle, st.flux) - expected_counts(down, bundle, st.flux)) / (2 * h);
    for (Eigen::Index p = 0; p < fd.size(); ++p) {
      const double g = dense(p, static_cast<Eigen::Index>(v));
      if (g == 0.0) {
        CHECK(fd[p] == 0.0);
        continue;
      }
      CHECK(g <= 0.0);
      CHECK(std::abs(g - fd[p]) <= 1e-6 * std::abs(fd[p]));
      ++checked;
    }
  }
  CHECK(checked > 20);
}

TEST_CASE("linearised counts") {
  const auto st = small_setup();
  const auto s = build_sensitivity(st.r0, st.grid, st.sensors, st.flux, st.quad, 1);
  CHECK(linearized_counts(s, st.r0) == s.lambda0);

  DensityArray bumped = st.r0;
  const std::size_t v = linear_index(1, 1, 2, st.grid);
  bumped[v] += 0.3;
  const Eigen::VectorXd diff = linearized_counts(s, bumped) - s.lambda0;
  for (Eigen::Index p = 0; p < diff.size(); ++p) {
    CHECK(diff[p] == doctest::Approx(s.g.coeff(p, static_cast<Eigen::Index>(v)) * 0.3)
                         .epsilon(1e-10));
  }

  CHECK_THROWS_AS(linearized_counts(s, DensityArray::Zero(3)), std::invalid_argument);
  DensityArray huge = DensityArray::Constant(st.grid.size(), 1e6);
  CHECK(linearized_counts(s, huge).minCoeff() == kLambdaFloor);
}

TEST_CASE("Taylor remainder of the linearisation is second order") {
  const auto st = small_setup();
  const RayBundle bundle(st.grid, st.sensors, st.quad);
  const auto s = build_sensitivity(st.r0, bundle, st.flux, 1);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01;
  DensityArray dr(st.grid.size());
  for (auto& x : dr) x = 2.0 * n01(rng);
  auto err = [&](double t) {
    const DensityArray r = st.r0 + t * dr;
    return (linearized_counts(s, r, -1e300) - expected_counts(r, bundle, st.flux)).norm();
  };
  for (double t : {0.1, 0.05}) {
    const double ratio = err(t) / err(t / 2);
    CHECK(ratio >= 3.0);
    CHECK(ratio <= 5.0);
  }
}

TEST_CASE("sensitivity file round trip") {
  const auto st = small_setup();
  const auto s = build_sensitivity(st.r0, st.grid, st.sensors, st.flux, st.quad, 1);
  const auto path = std::filesystem::temp_directory_path() / "mucave_test_sensitivity.txt";
  save_sensitivity(s, path);
  const auto r = load_sensitivity(path);
  CHECK(r.n_sensors == s.n_sensors);
  CHECK(r.n_pps == s.n_pps);
  CHECK(r.lambda0 == s.lambda0);
  CHECK(r.r0 == s.r0);
  CHECK(r.r0_hash() == s.r0_hash());
  REQUIRE(r.g.nonZeros() == s.g.nonZeros());
  CHECK(Eigen::MatrixXd(r.g) == Eigen::MatrixXd(s.g));
  std::filesystem::remove(path);
}

TEST_CASE("sensor JSON accepts a bare list or a wrapped object") {
  const auto doc = nlohmann::json::parse(
      R"([{"position": [1, 2, 3]}, {"position": [0, 0, 0], "theta_max": 0.5, "n_zen": 2, "n_azi": 3}])");
  const auto sensors = sensors_from_json(doc);
  REQUIRE(sensors.size() == 2);
  CHECK(sensors[0].position == Eigen::Vector3d(1, 2, 3));
  CHECK(sensors[0].n_pixels() == 64);
  CHECK(sensors[1].n_pixels() == 6);
  const auto again = sensors_from_json(nlohmann::json{{"sensors", sensors_to_json(sensors)}});
  CHECK(again[1].theta_max == 0.5);
}
