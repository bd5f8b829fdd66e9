#include "mucave/sensitivity.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mucave/parallel.hpp"
#include "mucave/scenario_io.hpp"
#include "mucave/text_format.hpp"

namespace mucave {

RayBundle::RayBundle(const VoxelGrid& grid, const std::vector<Sensor>& sensors,
                     const QuadratureSpec& quadrature)
    : n_sensors_{static_cast<int>(sensors.size())}, n_voxels_{grid.size()} {
  for (const auto& s : sensors) {
    s.validate();
    if (n_pps_ == 0) n_pps_ = s.n_pixels();
    if (s.n_pixels() != n_pps_) throw ConfigError("all sensors must share one pixel layout");
  }
  pixels_.reserve(static_cast<std::size_t>(n_sensors_) * n_pps_);
  for (const auto& s : sensors) {
    for (int p = 0; p < n_pps_; ++p) {
      std::vector<Ray> rays;
      for (const auto& q : pixel_rays(s, p, quadrature)) {
        rays.push_back({q.solid_angle, q.cos_zenith, trace_ray(s.position, q.direction, grid)});
      }
      pixels_.push_back(std::move(rays));
    }
  }
}

Eigen::VectorXd expected_counts(const DensityArray& density, const RayBundle& bundle,
                                const FluxModel& flux) {
  if (static_cast<std::size_t>(density.size()) != bundle.n_voxels()) {
    throw std::invalid_argument("expected_counts: density length does not match the grid");
  }
  Eigen::VectorXd lambda(bundle.n_pixels());
  for (std::size_t p = 0; p < bundle.n_pixels(); ++p) {
    double sum = 0.0;
    for (const auto& ray : bundle.rays(p)) {
      sum += ray.solid_angle * flux.intensity(opacity(ray.path, density)) *
             flux.efficiency(ray.cos_zenith);
    }
    lambda[static_cast<Eigen::Index>(p)] = flux.exposure() * sum;
  }
  return lambda;
}

Eigen::VectorXd expected_counts(const DensityArray& density, const VoxelGrid& grid,
                                const std::vector<Sensor>& sensors, const FluxModel& flux,
                                const QuadratureSpec& quadrature) {
  return expected_counts(density, RayBundle(grid, sensors, quadrature), flux);
}

SensitivityMatrix build_sensitivity(const DensityArray& r0, const RayBundle& bundle,
                                    const FluxModel& flux, unsigned n_threads) {
  if (!flux.has_derivative()) {
    throw UnsupportedModel("build_sensitivity: flux model has no intensity derivative");
  }
  if (static_cast<std::size_t>(r0.size()) != bundle.n_voxels()) {
    throw std::invalid_argument("build_sensitivity: R0 length does not match the grid");
  }
  const std::size_t n_pixels = bundle.n_pixels();
  std::vector<std::vector<Eigen::Triplet<double>>> rows(n_pixels);
  Eigen::VectorXd lambda0(n_pixels);

  parallel_for(n_pixels, n_threads, [&](std::size_t p) {
    std::vector<std::pair<std::size_t, double>> entries;
    double sum = 0.0;
    for (const auto& ray : bundle.rays(p)) {
      const double o = opacity(ray.path, r0);
      const double scale = flux.exposure() * ray.solid_angle * flux.efficiency(ray.cos_zenith);
      sum += scale * flux.intensity(o);
      const double slope = scale * flux.intensity_derivative(o);
      for (const auto& seg : ray.path.segments) entries.emplace_back(seg.voxel, slope * seg.length);
    }
    lambda0[static_cast<Eigen::Index>(p)] = sum;
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    auto& row = rows[p];
    for (const auto& [v, value] : entries) {
      if (!row.empty() && row.back().col() == static_cast<int>(v)) {
        row.back() = Eigen::Triplet<double>(static_cast<int>(p), static_cast<int>(v),
                                            row.back().value() + value);
      } else {
        row.emplace_back(static_cast<int>(p), static_cast<int>(v), value);
      }
    }
  });

  std::vector<Eigen::Triplet<double>> all;
  for (const auto& row : rows) all.insert(all.end(), row.begin(), row.end());
  SensitivityMatrix s;
  s.g.resize(static_cast<Eigen::Index>(n_pixels), static_cast<Eigen::Index>(bundle.n_voxels()));
  s.g.setFromTriplets(all.begin(), all.end());
  s.g.makeCompressed();
  s.lambda0 = std::move(lambda0);
  s.r0 = r0;
  s.n_sensors = bundle.n_sensors();
  s.n_pps = bundle.n_pps();
  return s;
}

SensitivityMatrix build_sensitivity(const DensityArray& r0, const VoxelGrid& grid,
                                    const std::vector<Sensor>& sensors, const FluxModel& flux,
                                    const QuadratureSpec& quadrature, unsigned n_threads) {
  return build_sensitivity(r0, RayBundle(grid, sensors, quadrature), flux, n_threads);
}

Eigen::VectorXd linearized_counts(const SensitivityMatrix& s, const DensityArray& density,
                                  double floor) {
  if (density.size() != s.r0.size()) {
    throw std::invalid_argument("linearized_counts: density length does not match R0");
  }
  Eigen::VectorXd lambda = s.lambda0 + s.g * (density - s.r0);
  return lambda.cwiseMax(floor);
}

std::uint64_t hash_array(const Eigen::VectorXd& values) {
  std::uint64_t h = 1469598103934665603ull;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &values[i], sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::uint64_t SensitivityMatrix::r0_hash() const { return hash_array(r0); }

namespace {

constexpr const char* kMagic = "mucave-sensitivity v1";

void write_vector(std::ostream& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) out << format_double(v[i]) << '\n';
}

Eigen::VectorXd read_vector(std::istream& in, std::size_t n) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  std::string token;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(in >> token)) throw std::runtime_error("sensitivity file truncated");
    v[static_cast<Eigen::Index>(i)] = parse_double(token);
  }
  return v;
}

void expect(std::istream& in, const std::string& keyword) {
  std::string token;
  if (!(in >> token) || token != keyword) {
    throw std::runtime_error("sensitivity file: expected '" + keyword + "'");
  }
}

}  // namespace

void save_sensitivity(const SensitivityMatrix& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kMagic << '\n'
      << "rows " << s.g.rows() << " cols " << s.g.cols() << " nnz " << s.g.nonZeros() << '\n'
      << "sensors " << s.n_sensors << " pps " << s.n_pps << '\n'
      << "r0_hash " << std::hex << s.r0_hash() << std::dec << '\n'
      << "lambda0\n";
  write_vector(out, s.lambda0);
  out << "r0\n";
  write_vector(out, s.r0);
  out << "triplets\n";
  for (Eigen::Index r = 0; r < s.g.outerSize(); ++r) {
    for (SparseRowMatrix::InnerIterator it(s.g, r); it; ++it) {
      out << it.row() << ' ' << it.col() << ' ' << format_double(it.value()) << '\n';
    }
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

SensitivityMatrix load_sensitivity(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string magic;
  std::getline(in, magic);
  if (magic != kMagic) throw std::runtime_error(path.string() + " is not a sensitivity file");
  Eigen::Index rows = 0, cols = 0, nnz = 0;
  SensitivityMatrix s;
  std::uint64_t hash = 0;
  expect(in, "rows");
  in >> rows;
  expect(in, "cols");
  in >> cols;
  expect(in, "nnz");
  in >> nnz;
  expect(in, "sensors");
  in >> s.n_sensors;
  expect(in, "pps");
  in >> s.n_pps;
  expect(in, "r0_hash");
  in >> std::hex >> hash >> std::dec;
  expect(in, "lambda0");
  s.lambda0 = read_vector(in, static_cast<std::size_t>(rows));
  expect(in, "r0");
  s.r0 = read_vector(in, static_cast<std::size_t>(cols));
  expect(in, "triplets");
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(nnz));
  std::string token;
  for (Eigen::Index i = 0; i < nnz; ++i) {
    long r = 0, c = 0;
    if (!(in >> r >> c >> token)) throw std::runtime_error("sensitivity file truncated");
    triplets.emplace_back(static_cast<int>(r), static_cast<int>(c), parse_double(token));
  }
  s.g.resize(rows, cols);
  s.g.setFromTriplets(triplets.begin(), triplets.end());
  s.g.makeCompressed();
  if (s.r0_hash() != hash) throw std::runtime_error("sensitivity file: R0 hash mismatch");
  return s;
}

std::vector<Sensor> sensors_from_json(const nlohmann::json& doc) {
  const auto& list = doc.is_object() && doc.contains("sensors") ? doc.at("sensors") : doc;
  if (!list.is_array()) throw ConfigError("sensors must be a list");
  std::vector<Sensor> sensors;
  try {
    for (const auto& entry : list) {
      const auto pos = entry.at("position").get<std::vector<double>>();
      if (pos.size() != 3) throw ConfigError("sensor position must have 3 coordinates");
      Sensor s;
      s.position = Eigen::Vector3d(pos[0], pos[1], pos[2]);
      s.theta_max = entry.value("theta_max", s.theta_max);
      s.n_zen = entry.value("n_zen", s.n_zen);
      s.n_azi = entry.value("n_azi", s.n_azi);
      s.validate();
      sensors.push_back(s);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sensors: ") + e.what());
  }
  return sensors;
}

nlohmann::json sensors_to_json(const std::vector<Sensor>& sensors) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& s : sensors) {
    list.push_back({{"position", {s.position.x(), s.position.y(), s.position.z()}},
                    {"theta_max", s.theta_max},
                    {"n_zen", s.n_zen},
                    {"n_azi", s.n_azi}});
  }
  return list;
}

std::vector<Sensor> load_sensors(const std::filesystem::path& path) {
  return sensors_from_json(read_json_file(path));
}

void save_sensors(const std::vector<Sensor>& sensors, const std::filesystem::path& path) {
  write_json_file(sensors_to_json(sensors), path);
}

}  // namespace mucave
