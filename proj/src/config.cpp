#include "mucave/config.hpp"

#include <sstream>

#include "mucave/scenario_io.hpp"
#include "mucave/sensitivity.hpp"

namespace mucave {

namespace {

using nlohmann::json;

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  return p.is_absolute() || base.empty() ? p : base / p;
}

template <typename T>
void read_opt(const json& j, const char* key, T& value) {
  if (j.contains(key)) value = j.at(key).get<T>();
}

}  // namespace

SyntheticConfig synthetic_from_json(const json& j) {
  SyntheticConfig c;
  read_opt(j, "n_rows", c.n_rows);
  read_opt(j, "n_cols", c.n_cols);
  read_opt(j, "spacing", c.spacing);
  read_opt(j, "z_min", c.z_min);
  read_opt(j, "z_max", c.z_max);
  read_opt(j, "n_z", c.n_z);
  read_opt(j, "center_x", c.center_x);
  read_opt(j, "center_y", c.center_y);
  read_opt(j, "cave_radius", c.cave_radius);
  read_opt(j, "cave_height", c.cave_height);
  read_opt(j, "muck_fraction", c.muck_fraction);
  read_opt(j, "gap_amplitude", c.gap_amplitude);
  read_opt(j, "gap_radius", c.gap_radius);
  read_opt(j, "t_min", c.t_min);
  if (j.contains("shape")) {
    const auto s = j.at("shape").get<std::string>();
    if (s != "cylinder" && s != "dome") throw ConfigError("shape must be 'cylinder' or 'dome'");
    c.shape = s == "dome" ? CaveShape::dome : CaveShape::cylinder;
  }
  if (j.contains("densities")) {
    const auto d = j.at("densities").get<std::vector<double>>();
    if (d.size() != 3) throw ConfigError("synthetic densities need muck, air and rock values");
    c.densities = {d[0], d[1], d[2]};
  }
  return c;
}

json synthetic_to_json(const SyntheticConfig& c) {
  return {{"n_rows", c.n_rows},
          {"n_cols", c.n_cols},
          {"spacing", c.spacing},
          {"z_min", c.z_min},
          {"z_max", c.z_max},
          {"n_z", c.n_z},
          {"center_x", c.center_x},
          {"center_y", c.center_y},
          {"cave_radius", c.cave_radius},
          {"cave_height", c.cave_height},
          {"shape", c.shape == CaveShape::dome ? "dome" : "cylinder"},
          {"muck_fraction", c.muck_fraction},
          {"gap_amplitude", c.gap_amplitude},
          {"gap_radius", c.gap_radius},
          {"t_min", c.t_min},
          {"densities", c.densities}};
}

FluxModel flux_from_json(const json& j) {
  const auto model = j.value("model", std::string("exponential"));
  const double m = j.value("efficiency_exponent", 2.0);
  const double exposure = j.value("exposure", 1.0);
  if (model == "exponential") {
    return FluxModel::exponential(j.at("i0").get<double>(), j.at("attenuation_length").get<double>(),
                                  m, exposure);
  }
  if (model == "tabulated") {
    return FluxModel::tabulated(j.at("opacity").get<std::vector<double>>(),
                                j.at("intensity").get<std::vector<double>>(), m, exposure);
  }
  throw ConfigError("unknown flux model '" + model + "'");
}

json flux_to_json(const FluxModel& f) {
  json j{{"efficiency_exponent", f.efficiency_exponent()}, {"exposure", f.exposure()}};
  switch (f.kind()) {
    case FluxModel::Kind::exponential:
      j["model"] = "exponential";
      j["i0"] = f.i0();
      j["attenuation_length"] = f.attenuation_length();
      break;
    case FluxModel::Kind::tabulated:
      j["model"] = "tabulated";
      j["opacity"] = f.table_opacity();
      j["intensity"] = f.table_intensity();
      break;
    case FluxModel::Kind::custom:
      throw ConfigError("custom flux models cannot be serialised");
  }
  return j;
}

void apply_profile(RunConfig& c, const std::string& profile) {
  if (profile == "desk") {
    c.plan.n_super = 4;
    c.plan.n_within = 2;
    c.nuts.n_adapt = 1 << 11;
    c.nuts.n_draws = 1 << 9;
  } else if (profile == "paper") {
    c.plan.n_super = 32;
    c.plan.n_within = 8;
    c.nuts.n_adapt = 1 << 15;
    c.nuts.n_draws = 1 << 12;
  } else {
    throw ConfigError("unknown profile '" + profile + "' (expected desk or paper)");
  }
  c.nuts.keep = KeepPolicy::last;
  c.profile = profile;
}

RunConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  RunConfig c;
  c.base_dir = base_dir;
  try {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    if (!j.contains("seed")) throw ConfigError("config needs an explicit seed");
    c.seed = j.at("seed").get<std::uint64_t>();
    c.plan.seed = c.seed;
    if (j.contains("output_dir")) {
      c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
    } else {
      c.output_dir = resolve(base_dir, "out");
    }

    if (j.contains("scenario") == j.contains("synthetic")) {
      throw ConfigError("config needs exactly one of 'scenario' and 'synthetic'");
    }
    if (j.contains("scenario")) {
      c.scenario_path = resolve(base_dir, j.at("scenario").get<std::string>());
    } else {
      c.synthetic = synthetic_from_json(j.at("synthetic"));
    }

    if (!j.contains("sensors")) throw ConfigError("config needs 'sensors'");
    const auto& s = j.at("sensors");
    c.sensors = s.is_string() ? load_sensors(resolve(base_dir, s.get<std::string>()))
                              : sensors_from_json(s);

    if (!j.contains("flux")) throw ConfigError("config needs a 'flux' block");
    c.flux = flux_from_json(j.at("flux"));
    if (j.contains("reference_density")) {
      c.reference_density = j.at("reference_density").get<double>();
    }
    if (j.contains("quadrature")) c.quadrature.n_sub = j.at("quadrature").value("n_sub", 1);

    auto& p = c.posterior;
    read_opt(j, "gamma", p.gamma);
    read_opt(j, "include_factorial", p.include_factorial);
    if (j.contains("height_reference")) {
      const auto r = j.at("height_reference").get<std::string>();
      if (r != "center" && r != "lower_face") {
        throw ConfigError("height_reference must be 'center' or 'lower_face'");
      }
      p.reference = r == "center" ? HeightReference::center : HeightReference::lower_face;
    }
    if (j.contains("whitening")) {
      const auto w = j.at("whitening").get<std::string>();
      if (w != "spectral" && w != "cholesky") {
        throw ConfigError("whitening must be 'spectral' or 'cholesky'");
      }
      p.whitening = w == "spectral" ? WhiteningMethod::spectral : WhiteningMethod::cholesky;
    }
    if (j.contains("smoothness_prior")) {
      read_opt(j.at("smoothness_prior"), "alpha", p.smoothness.alpha);
      read_opt(j.at("smoothness_prior"), "beta", p.smoothness.beta);
    }
    if (j.contains("data_mode")) {
      const auto m = j.at("data_mode").get<std::string>();
      if (m != "round" && m != "poisson") throw ConfigError("data_mode must be round or poisson");
      c.data_mode = m == "round" ? DataMode::round : DataMode::poisson;
    }

    if (j.contains("profile")) apply_profile(c, j.at("profile").get<std::string>());
    if (j.contains("nuts")) c.nuts = nuts_config_from_json(j.at("nuts"), c.nuts);
    if (j.contains("plan")) {
      read_opt(j.at("plan"), "n_super", c.plan.n_super);
      read_opt(j.at("plan"), "n_within", c.plan.n_within);
    }
    if (j.contains("summary")) {
      const auto& sj = j.at("summary");
      read_opt(sj, "airgap_threshold", c.summary.airgap_threshold);
      read_opt(sj, "airgap_layer", c.summary.airgap_layer);
      read_opt(sj, "slices", c.summary.slices);
    }
    read_opt(j, "threads", c.threads);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_json_file(path), path.parent_path());
}

void RunConfig::validate() const {
  if (scenario_path && !std::filesystem::exists(*scenario_path)) {
    throw ConfigError("scenario file not found: " + scenario_path->string());
  }
  if (sensors.empty()) throw ConfigError("at least one sensor is required");
  for (const auto& s : sensors) s.validate();
  if (quadrature.n_sub < 1) throw ConfigError("quadrature n_sub must be >= 1");
  if (!(posterior.gamma > 0.0)) throw ConfigError("gamma must be positive");
  if (!(posterior.smoothness.alpha > 0.0 && posterior.smoothness.beta > 0.0)) {
    throw ConfigError("smoothness prior parameters must be positive");
  }
  if (reference_density && !(*reference_density >= 0.0)) {
    throw ConfigError("reference density must be non-negative");
  }
  if (summary.airgap_threshold < 0.0) throw ConfigError("airgap threshold must be >= 0");
  nuts.validate();
  plan.validate();
}

Scenario RunConfig::scenario() const {
  if (scenario_path) return load_scenario(*scenario_path);
  return make_synthetic_truth(*synthetic);
}

DensityArray RunConfig::reference(const Scenario& scenario) const {
  if (reference_density) {
    return DensityArray::Constant(static_cast<Eigen::Index>(scenario.voxel_grid.size()),
                                  *reference_density);
  }
  return scenario.unit_densities.back();
}

json config_to_json(const RunConfig& c) {
  json j{{"seed", c.seed},
         {"output_dir", c.output_dir.string()},
         {"sensors", sensors_to_json(c.sensors)},
         {"flux", flux_to_json(c.flux)},
         {"quadrature", {{"n_sub", c.quadrature.n_sub}}},
         {"gamma", c.posterior.gamma},
         {"height_reference",
          c.posterior.reference == HeightReference::center ? "center" : "lower_face"},
         {"whitening",
          c.posterior.whitening == WhiteningMethod::spectral ? "spectral" : "cholesky"},
         {"smoothness_prior",
          {{"alpha", c.posterior.smoothness.alpha}, {"beta", c.posterior.smoothness.beta}}},
         {"include_factorial", c.posterior.include_factorial},
         {"data_mode", c.data_mode == DataMode::round ? "round" : "poisson"},
         {"nuts", nuts_config_to_json(c.nuts)},
         {"plan", {{"n_super", c.plan.n_super}, {"n_within", c.plan.n_within}}},
         {"summary",
          {{"airgap_threshold", c.summary.airgap_threshold},
           {"airgap_layer", c.summary.airgap_layer},
           {"slices", c.summary.slices}}},
         {"threads", c.threads}};
  if (c.scenario_path) j["scenario"] = c.scenario_path->string();
  if (c.synthetic) j["synthetic"] = synthetic_to_json(*c.synthetic);
  if (c.reference_density) j["reference_density"] = *c.reference_density;
  if (!c.profile.empty()) j["profile"] = c.profile;
  return j;
}

}  // namespace mucave
