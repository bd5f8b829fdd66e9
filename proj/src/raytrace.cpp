#include "mucave/raytrace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace mucave {

double RayPath::total_length() const {
  double sum = 0.0;
  for (const auto& s : segments) sum += s.length;
  return sum;
}

RayPath trace_ray(const Eigen::Vector3d& origin, const Eigen::Vector3d& direction,
                  const VoxelGrid& grid) {
  const double norm = direction.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw std::invalid_argument("trace_ray: direction must be a non-zero finite vector");
  }
  const Eigen::Vector3d d = direction / norm;
  const auto [x0, y0, z0] = grid.origin();
  const std::array<double, 3> lo{x0, y0, z0};
  const std::array<double, 3> step{grid.dx(), grid.dy(), grid.dz()};
  const std::array<int, 3> n{grid.n_x(), grid.n_y(), grid.n_z()};
  constexpr double inf = std::numeric_limits<double>::infinity();

  // Slab clipping against the domain box.
  double t_enter = 0.0;
  double t_exit = inf;
  for (int a = 0; a < 3; ++a) {
    const double hi = lo[a] + n[a] * step[a];
    if (d[a] == 0.0) {
      if (origin[a] < lo[a] || origin[a] > hi) return {};
      continue;
    }
    double t1 = (lo[a] - origin[a]) / d[a];
    double t2 = (hi - origin[a]) / d[a];
    if (t1 > t2) std::swap(t1, t2);
    t_enter = std::max(t_enter, t1);
    t_exit = std::min(t_exit, t2);
  }
  if (!(t_exit > t_enter)) return {};

  std::array<int, 3> cell{};
  std::array<double, 3> t_next{};
  std::array<double, 3> t_delta{};
  std::array<int, 3> dir_step{};
  for (int a = 0; a < 3; ++a) {
    const double p = origin[a] + t_enter * d[a];
    int c = static_cast<int>(std::floor((p - lo[a]) / step[a]));
    // On a boundary the entry cell is the one the ray moves into.
    if (d[a] < 0.0 && p - (lo[a] + c * step[a]) <= 0.0) --c;
    c = std::clamp(c, 0, n[a] - 1);
    cell[a] = c;
    if (d[a] > 0.0) {
      dir_step[a] = 1;
      t_next[a] = (lo[a] + (c + 1) * step[a] - origin[a]) / d[a];
      t_delta[a] = step[a] / d[a];
    } else if (d[a] < 0.0) {
      dir_step[a] = -1;
      t_next[a] = (lo[a] + c * step[a] - origin[a]) / d[a];
      t_delta[a] = -step[a] / d[a];
    } else {
      dir_step[a] = 0;
      t_next[a] = inf;
      t_delta[a] = inf;
    }
  }

  RayPath path;
  double t = t_enter;
  while (true) {
    const int axis = static_cast<int>(
        std::min_element(t_next.begin(), t_next.end()) - t_next.begin());
    const double t_end = std::min(t_next[axis], t_exit);
    if (t_end > t) {
      path.segments.push_back({linear_index(cell[0], cell[1], cell[2], grid), t_end - t});
      t = t_end;
    }
    if (t_end >= t_exit) break;
    cell[axis] += dir_step[axis];
    if (cell[axis] < 0 || cell[axis] >= n[axis]) break;
    t_next[axis] += t_delta[axis];
  }
  return path;
}

double opacity(const RayPath& path, const DensityArray& density) {
  double sum = 0.0;
  for (const auto& s : path.segments) {
    if (s.voxel >= static_cast<std::size_t>(density.size())) {
      throw std::out_of_range("opacity: voxel index outside the density array");
    }
    sum += density[static_cast<Eigen::Index>(s.voxel)] * s.length;
  }
  return sum;
}

void Sensor::validate() const {
  if (!(theta_max > 0.0) || theta_max > std::numbers::pi / 2 + 1e-15) {
    throw ConfigError("sensor: theta_max must lie in (0, pi/2]");
  }
  if (n_zen < 1 || n_azi < 1) throw ConfigError("sensor: pixel counts must be positive");
  if (!position.allFinite()) throw ConfigError("sensor: position must be finite");
}

namespace {

struct PixelBounds {
  double theta_lo, theta_hi, phi_lo, phi_hi;
};

PixelBounds bounds(const Sensor& sensor, int pixel) {
  if (pixel < 0 || pixel >= sensor.n_pixels()) throw std::out_of_range("pixel index");
  const int ring = pixel / sensor.n_azi;
  const int sector = pixel % sensor.n_azi;
  const double dtheta = sensor.theta_max / sensor.n_zen;
  const double dphi = 2.0 * std::numbers::pi / sensor.n_azi;
  return {ring * dtheta, (ring + 1) * dtheta, sector * dphi, (sector + 1) * dphi};
}

}  // namespace

double pixel_solid_angle(const Sensor& sensor, int pixel) {
  const auto b = bounds(sensor, pixel);
  return (b.phi_hi - b.phi_lo) * (std::cos(b.theta_lo) - std::cos(b.theta_hi));
}

std::vector<QuadratureRay> pixel_rays(const Sensor& sensor, int pixel,
                                      const QuadratureSpec& quadrature) {
  if (quadrature.n_sub < 1) throw std::invalid_argument("quadrature: n_sub must be >= 1");
  const auto b = bounds(sensor, pixel);
  const int m = quadrature.n_sub;
  const double dtheta = (b.theta_hi - b.theta_lo) / m;
  const double dphi = (b.phi_hi - b.phi_lo) / m;
  std::vector<QuadratureRay> rays;
  rays.reserve(static_cast<std::size_t>(m) * m);
  for (int a = 0; a < m; ++a) {
    const double t_lo = b.theta_lo + a * dtheta;
    const double t_hi = t_lo + dtheta;
    const double theta = 0.5 * (t_lo + t_hi);
    const double weight_theta = std::cos(t_lo) - std::cos(t_hi);
    for (int c = 0; c < m; ++c) {
      const double phi = b.phi_lo + (c + 0.5) * dphi;
      Eigen::Vector3d dir(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                          std::cos(theta));
      rays.push_back({dir, weight_theta * dphi, std::cos(theta)});
    }
  }
  return rays;
}

}  // namespace mucave
