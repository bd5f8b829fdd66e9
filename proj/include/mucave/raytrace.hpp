// Ray traversal through the voxel grid and per-sensor pixel quadrature.

#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "mucave/geometry.hpp"

namespace mucave {

struct ChordSegment {
  std::size_t voxel;
  double length;  // metres
};

/// Voxels crossed by a ray, ordered by distance from the origin.
struct RayPath {
  std::vector<ChordSegment> segments;

  double total_length() const;
};

/// Exact chord lengths for the axis-aligned grid (incremental grid stepping).
/// Returns an empty path when the ray misses the domain.
RayPath trace_ray(const Eigen::Vector3d& origin, const Eigen::Vector3d& direction,
                  const VoxelGrid& grid);

/// Sum of density times chord length, in g/cm^3 * m.
double opacity(const RayPath& path, const DensityArray& density);

/// Upward-looking detector with a cone field of view split into
/// n_zen zenith rings times n_azi azimuth sectors (pixel = ring * n_azi + sector).
struct Sensor {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double theta_max = 0.7853981633974483;
  int n_zen = 8;
  int n_azi = 8;

  int n_pixels() const { return n_zen * n_azi; }
  void validate() const;
};

/// Sub-rays per pixel: n_sub x n_sub midpoint rule in (theta, phi).
struct QuadratureSpec {
  int n_sub = 1;
};

struct QuadratureRay {
  Eigen::Vector3d direction;
  double solid_angle;  // weight, steradians
  double cos_zenith;
};

double pixel_solid_angle(const Sensor& sensor, int pixel);

/// Weights sum to pixel_solid_angle(sensor, pixel).
std::vector<QuadratureRay> pixel_rays(const Sensor& sensor, int pixel,
                                      const QuadratureSpec& quadrature);

}  // namespace mucave
