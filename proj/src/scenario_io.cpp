#include "mucave/scenario_io.hpp"

#include <fstream>
#include <sstream>

namespace mucave {
namespace {

using nlohmann::json;

const json& require(const json& doc, const char* key) {
  if (!doc.is_object() || !doc.contains(key)) {
    throw ConfigError(std::string("scenario: missing field '") + key + "'");
  }
  return doc.at(key);
}

std::vector<double> grid_values(const json& rows, const LayerGrid& grid, const char* what) {
  if (rows.is_number()) {
    return std::vector<double>(grid.n_cells(), rows.get<double>());
  }
  if (!rows.is_array() || static_cast<int>(rows.size()) != grid.n_rows()) {
    throw ConfigError(std::string("scenario: ") + what + " must have n_rows rows");
  }
  std::vector<double> out;
  out.reserve(grid.n_cells());
  for (const auto& row : rows) {
    if (!row.is_array() || static_cast<int>(row.size()) != grid.n_cols()) {
      throw ConfigError(std::string("scenario: ") + what + " row must have n_cols entries");
    }
    for (const auto& v : row) out.push_back(v.get<double>());
  }
  return out;
}

json grid_rows(std::span<const double> values, const LayerGrid& grid) {
  json rows = json::array();
  for (int a = 0; a < grid.n_rows(); ++a) {
    json row = json::array();
    for (int b = 0; b < grid.n_cols(); ++b) row.push_back(values[grid.cell(a, b)]);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json_file(const nlohmann::json& doc, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

Scenario scenario_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  try {
    const json& d = require(doc, "domain");
    Domain domain{.x_min = require(d, "x_min").get<double>(),
                  .x_max = require(d, "x_max").get<double>(),
                  .y_min = require(d, "y_min").get<double>(),
                  .y_max = require(d, "y_max").get<double>(),
                  .z_min = require(d, "z_min").get<double>(),
                  .z_max = require(d, "z_max").get<double>()};
    domain.validate();
    const json& lg = require(doc, "layer_grid");
    LayerGrid layers(domain, require(lg, "n_rows").get<int>(), require(lg, "n_cols").get<int>());
    const json& vg = require(doc, "voxel_grid");
    VoxelGrid voxels(domain, require(vg, "n_x").get<int>(), require(vg, "n_y").get<int>(),
                     require(vg, "n_z").get<int>());

    const json& dens = require(doc, "densities");
    if (!dens.is_array()) throw ConfigError("scenario: densities must be a list");
    std::vector<DensityArray> unit;
    for (const auto& entry : dens) {
      if (entry.is_number()) {
        unit.push_back(DensityArray::Constant(voxels.size(), entry.get<double>()));
        continue;
      }
      json values;
      std::string source = "inline voxel array";
      if (entry.is_array()) {
        values = entry;
      } else {
        const auto file = base_dir / require(entry, "file").get<std::string>();
        values = read_json_file(file);
        source = file.string();
      }
      if (!values.is_array() || values.size() != voxels.size()) {
        throw ConfigError(source + " has the wrong length");
      }
      DensityArray arr(voxels.size());
      for (std::size_t v = 0; v < values.size(); ++v) arr[v] = values[v].get<double>();
      unit.push_back(std::move(arr));
    }

    std::optional<LayerModel> truth;
    std::vector<double> top;
    int n_layers = static_cast<int>(unit.size());
    if (doc.contains("heights")) {
      const json& hs = doc.at("heights");
      if (!hs.is_array() || hs.empty()) throw ConfigError("scenario: heights must be a list");
      n_layers = static_cast<int>(hs.size());
      std::vector<double> flat;
      for (const auto& layer : hs) {
        auto v = grid_values(layer, layers, "heights");
        flat.insert(flat.end(), v.begin(), v.end());
      }
      truth = LayerModel(n_layers, layers.n_cells(), std::move(flat));
      auto top_span = truth->layer(n_layers - 1);
      top.assign(top_span.begin(), top_span.end());
    } else {
      top = grid_values(require(doc, "top_surface"), layers, "top_surface");
    }

    Scenario scenario{.domain = domain,
                      .layer_grid = layers,
                      .voxel_grid = voxels,
                      .n_layers = n_layers,
                      .top_surface = std::move(top),
                      .truth = std::move(truth),
                      .unit_densities = std::move(unit),
                      .t_min = doc.value("t_min", 0.01)};
    scenario.validate();
    return scenario;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
}

nlohmann::json scenario_to_json(const Scenario& s) {
  json doc;
  doc["domain"] = {{"x_min", s.domain.x_min}, {"x_max", s.domain.x_max},
                   {"y_min", s.domain.y_min}, {"y_max", s.domain.y_max},
                   {"z_min", s.domain.z_min}, {"z_max", s.domain.z_max}};
  doc["layer_grid"] = {{"n_rows", s.layer_grid.n_rows()}, {"n_cols", s.layer_grid.n_cols()}};
  doc["voxel_grid"] = {{"n_x", s.voxel_grid.n_x()},
                       {"n_y", s.voxel_grid.n_y()},
                       {"n_z", s.voxel_grid.n_z()}};
  doc["t_min"] = s.t_min;
  json dens = json::array();
  for (const auto& d : s.unit_densities) {
    if (d.size() > 0 && (d.array() == d[0]).all()) {
      dens.push_back(d[0]);
    } else {
      dens.push_back(std::vector<double>(d.data(), d.data() + d.size()));
    }
  }
  doc["densities"] = dens;
  if (s.truth) {
    json hs = json::array();
    for (int l = 0; l < s.truth->n_layers(); ++l) hs.push_back(grid_rows(s.truth->layer(l), s.layer_grid));
    doc["heights"] = hs;
  } else {
    doc["top_surface"] = grid_rows(s.top_surface, s.layer_grid);
  }
  return doc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  return scenario_from_json(read_json_file(path), path.parent_path());
}

void save_scenario(const Scenario& scenario, const std::filesystem::path& path) {
  write_json_file(scenario_to_json(scenario), path);
}

}  // namespace mucave
