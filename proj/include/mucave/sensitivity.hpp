// Exact expected pixel counts by ray quadrature, and the sparse sensitivity
// matrix of the linearised forward model
//   lambda_hat(R) = lambda(R0) + G (R - R0).

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "json.hpp"
#include "mucave/flux.hpp"
#include "mucave/geometry.hpp"
#include "mucave/raytrace.hpp"

namespace mucave {

/// Floor applied to linearised means before they reach a Poisson likelihood.
inline constexpr double kLambdaFloor = 1e-8;

/// Traced quadrature rays for every pixel of every sensor. Pixel p of sensor s
/// has global index s * n_pps + p; all sensors must share one pixel layout.
class RayBundle {
 public:
  struct Ray {
    double solid_angle;
    double cos_zenith;
    RayPath path;
  };

  RayBundle(const VoxelGrid& grid, const std::vector<Sensor>& sensors,
            const QuadratureSpec& quadrature);

  std::size_t n_pixels() const { return pixels_.size(); }
  int n_sensors() const { return n_sensors_; }
  int n_pps() const { return n_pps_; }
  std::size_t n_voxels() const { return n_voxels_; }
  const std::vector<Ray>& rays(std::size_t pixel) const { return pixels_[pixel]; }

 private:
  int n_sensors_ = 0;
  int n_pps_ = 0;
  std::size_t n_voxels_ = 0;
  std::vector<std::vector<Ray>> pixels_;
};

Eigen::VectorXd expected_counts(const DensityArray& density, const RayBundle& bundle,
                                const FluxModel& flux);

Eigen::VectorXd expected_counts(const DensityArray& density, const VoxelGrid& grid,
                                const std::vector<Sensor>& sensors, const FluxModel& flux,
                                const QuadratureSpec& quadrature);

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct SensitivityMatrix {
  SparseRowMatrix g;  // n_pixels x n_grid, entries d lambda_p / d R_v at R0
  Eigen::VectorXd lambda0;
  DensityArray r0;
  int n_sensors = 0;
  int n_pps = 0;

  std::size_t n_pixels() const { return static_cast<std::size_t>(g.rows()); }
  std::uint64_t r0_hash() const;
};

/// Parallel over pixels; n_threads = 0 uses hardware concurrency.
SensitivityMatrix build_sensitivity(const DensityArray& r0, const RayBundle& bundle,
                                    const FluxModel& flux, unsigned n_threads = 0);

SensitivityMatrix build_sensitivity(const DensityArray& r0, const VoxelGrid& grid,
                                    const std::vector<Sensor>& sensors, const FluxModel& flux,
                                    const QuadratureSpec& quadrature, unsigned n_threads = 0);

/// lambda0 + G (R - R0), floored at `floor`.
Eigen::VectorXd linearized_counts(const SensitivityMatrix& s, const DensityArray& density,
                                  double floor = kLambdaFloor);

/// FNV-1a over the raw bytes of the array.
std::uint64_t hash_array(const Eigen::VectorXd& values);

/// Text format: header, lambda0, r0, then (row, col, value) triplets; values
/// are written with round-trip precision so reloading is exact.
void save_sensitivity(const SensitivityMatrix& s, const std::filesystem::path& path);
SensitivityMatrix load_sensitivity(const std::filesystem::path& path);

/// List of {position, theta_max, n_zen, n_azi}, or {"sensors": [...]}.
std::vector<Sensor> sensors_from_json(const nlohmann::json& doc);
nlohmann::json sensors_to_json(const std::vector<Sensor>& sensors);
std::vector<Sensor> load_sensors(const std::filesystem::path& path);
void save_sensors(const std::vector<Sensor>& sensors, const std::filesystem::path& path);

}  // namespace mucave
