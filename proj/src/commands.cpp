#include "mucave/commands.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>

#include "mucave/diagnostics.hpp"
#include "mucave/scenario_io.hpp"
#include "mucave/sensitivity.hpp"
#include "mucave/summaries.hpp"
#include "mucave/text_format.hpp"

namespace mucave {

namespace {

constexpr const char* kCounts = "counts.csv";
constexpr const char* kTruth = "truth.json";
constexpr const char* kSensitivity = "sensitivity.txt";
constexpr const char* kDraws = "draws.ndjson";
constexpr const char* kRunMeta = "run_meta.json";
constexpr const char* kDiagnostics = "diagnostics.json";
constexpr const char* kSummary = "summary.json";

// Stream reserved for data generation, clear of every chain and init stream.
constexpr std::uint64_t kDataStream = std::uint64_t{3} << 32;

void require_file(const std::filesystem::path& p, const char* produced_by) {
  if (!std::filesystem::exists(p)) {
    throw ConfigError(p.string() + " not found; run '" + produced_by + "' first");
  }
}

void prepare_output(const RunConfig& config) {
  std::filesystem::create_directories(config.output_dir);
}

SensitivityMatrix build_for(const RunConfig& config, const Scenario& scenario) {
  return build_sensitivity(config.reference(scenario), scenario.voxel_grid, config.sensors,
                           config.flux, config.quadrature, config.threads);
}

}  // namespace

void write_counts_csv(const CountData& counts, int n_pps, const std::filesystem::path& path) {
  if (n_pps < 1) throw std::invalid_argument("pixels per sensor must be positive");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "sensor_id,pixel_id,count\n";
  for (std::size_t p = 0; p < counts.size(); ++p) {
    out << p / n_pps << ',' << p % n_pps << ',' << counts.counts[p] << '\n';
  }
}

CountData read_counts_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open count file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "sensor_id,pixel_id,count") {
    throw ConfigError(path.string() + ": expected header sensor_id,pixel_id,count");
  }
  CountData data;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    long long sensor, pixel, count;
    char c1, c2;
    if (!(row >> sensor >> c1 >> pixel >> c2 >> count) || c1 != ',' || c2 != ',') {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": malformed row");
    }
    data.counts.push_back(count);
  }
  data.validate();
  return data;
}

std::vector<std::int64_t> round_counts(const Eigen::VectorXd& lambda) {
  std::vector<std::int64_t> c(static_cast<std::size_t>(lambda.size()));
  for (Eigen::Index p = 0; p < lambda.size(); ++p) {
    // nearbyint honours the default round-to-nearest-even mode.
    c[p] = static_cast<std::int64_t>(std::max(0.0, std::nearbyint(lambda[p])));
  }
  return c;
}

PosteriorModel load_posterior(const RunConfig& config, const Scenario& scenario) {
  require_file(config.output(kCounts), "simulate");
  require_file(config.output(kSensitivity), "sensitivity");
  SensitivityMatrix s = load_sensitivity(config.output(kSensitivity));
  if (s.r0_hash() != hash_array(config.reference(scenario))) {
    throw ConfigError("sensitivity file was built for a different reference density");
  }
  if (s.n_sensors != static_cast<int>(config.sensors.size())) {
    throw ConfigError("sensitivity file was built for a different sensor set");
  }
  // The hash covers R0 only; flux, sensors and quadrature show up in lambda0.
  const Eigen::VectorXd lambda0 = expected_counts(s.r0, scenario.voxel_grid, config.sensors,
                                                  config.flux, config.quadrature);
  if (lambda0.size() != s.lambda0.size() ||
      ((lambda0 - s.lambda0).cwiseAbs().array() > 1e-9 * lambda0.cwiseAbs().array() + 1e-12)
          .any()) {
    throw ConfigError("sensitivity file is stale: reference counts differ from the config; "
                      "rerun 'sensitivity'");
  }
  return PosteriorModel(scenario, std::move(s), read_counts_csv(config.output(kCounts)),
                        config.posterior);
}

std::string coordinate_name(const LatentLayout& layout, const LayerGrid& grid, std::size_t i) {
  std::ostringstream name;
  if (i < layout.z_size()) {
    const auto l = i / static_cast<std::size_t>(layout.n_cells);
    const auto c = static_cast<int>(i % static_cast<std::size_t>(layout.n_cells));
    name << "z[layer=" << l << ",row=" << c / grid.n_cols() << ",col=" << c % grid.n_cols()
         << "]";
  } else {
    name << "rho_raw[layer=" << i - layout.z_size() << "]";
  }
  return name.str();
}

std::vector<bool> covered_cells(const SensitivityMatrix& s, const Scenario& scenario) {
  const auto map = scenario.column_map();
  const int nz = scenario.voxel_grid.n_z();
  std::vector<bool> covered(static_cast<std::size_t>(scenario.layer_grid.n_cells()), false);
  for (Eigen::Index r = 0; r < s.g.outerSize(); ++r) {
    for (SparseRowMatrix::InnerIterator it(s.g, r); it; ++it) {
      if (it.value() != 0.0) covered[map[static_cast<std::size_t>(it.col()) / nz]] = true;
    }
  }
  return covered;
}

int cmd_simulate(const RunConfig& config, std::ostream& log) {
  const Scenario scenario = config.scenario();
  if (!scenario.truth) throw ConfigError("simulate needs a scenario with a true layer model");
  const SensitivityMatrix s = build_for(config, scenario);
  const DensityMapper mapper(scenario, config.posterior.gamma, config.posterior.reference);
  const Eigen::VectorXd lambda =
      linearized_counts(s, mapper.density(*scenario.truth), config.posterior.lambda_floor);

  CountData counts;
  if (config.data_mode == DataMode::round) {
    counts.counts = round_counts(lambda);
  } else {
    Philox rng(config.seed, kDataStream);
    for (Eigen::Index p = 0; p < lambda.size(); ++p) {
      std::poisson_distribution<std::int64_t> pois(lambda[p]);
      counts.counts.push_back(pois(rng));
    }
  }
  prepare_output(config);
  write_counts_csv(counts, s.n_pps, config.output(kCounts));
  save_scenario(scenario, config.output(kTruth));
  log << "simulate: " << counts.size() << " pixels, mean expected count "
      << format_double(lambda.mean()) << ", min " << format_double(lambda.minCoeff()) << "\n";
  return kExitOk;
}

int cmd_sensitivity(const RunConfig& config, std::ostream& log) {
  const Scenario scenario = config.scenario();
  const SensitivityMatrix s = build_for(config, scenario);
  prepare_output(config);
  save_sensitivity(s, config.output(kSensitivity));
  log << "sensitivity: " << s.g.rows() << " x " << s.g.cols() << ", " << s.g.nonZeros()
      << " nonzeros\n";
  return kExitOk;
}

int cmd_sample(const RunConfig& config, std::ostream& log) {
  const Scenario scenario = config.scenario();
  const PosteriorModel model = load_posterior(config, scenario);
  prepare_output(config);
  SuperChainPlan plan = config.plan;
  plan.seed = config.seed;
  const RunResult run = run_superchains(
      plan, config.nuts, [&] { return std::make_unique<PosteriorDensity>(model); },
      [&](Philox& rng) { return model.sample_prior(rng); }, config.threads);
  write_draws(run.draws(), config.output(kDraws));
  auto meta = run_metadata(run);
  meta["dim"] = model.dim();
  meta["profile"] = config.profile;
  meta["config"] = config_to_json(config);
  write_json_file(meta, config.output(kRunMeta));
  log << "sample: " << run.chains.size() << " chains, " << run.draws().draws.size()
      << " kept draws, " << format_double(run.wall_seconds) << " s\n";
  if (run.partial()) {
    for (const auto& c : run.chains) {
      if (c.result.failed) {
        log << "  chain (" << c.super << "," << c.within << ") failed: " << c.result.failure
            << "\n";
      }
    }
    return kExitPartial;
  }
  return kExitOk;
}

namespace {

RhatReport diagnose(const RunConfig& config, const Scenario& scenario, const DrawSet& draws,
                    std::ostream& log) {
  const RhatReport report = nested_rhat(draws);
  auto doc = rhat_to_json(report);
  const LatentLayout layout{scenario.n_layers - 1, scenario.layer_grid.n_cells()};
  const std::string worst = coordinate_name(layout, scenario.layer_grid, report.worst_index);
  doc["worst_coordinate"] = worst;
  write_json_file(doc, config.output(kDiagnostics));
  log << "worst nested R-hat " << format_double(report.worst) << " at " << worst << " (index "
      << report.worst_index << ")\n";
  for (const auto& w : report.warnings()) log << "warning: " << w << "\n";
  return report;
}

DrawSet load_draws(const RunConfig& config) {
  require_file(config.output(kDraws), "sample");
  DrawSet draws = read_draws(config.output(kDraws));
  if (draws.draws.empty()) throw ConfigError("draw file is empty");
  return draws;
}

}  // namespace

int cmd_diagnose(const RunConfig& config, std::ostream& log) {
  const Scenario scenario = config.scenario();
  diagnose(config, scenario, load_draws(config), log);
  return kExitOk;
}

int cmd_summarize(const RunConfig& config, std::ostream& log) {
  const Scenario scenario = config.scenario();
  const PosteriorModel model = load_posterior(config, scenario);
  const DrawSet draws = load_draws(config);
  if (draws.dim() != model.dim()) throw ConfigError("draws do not match the model dimension");
  const RhatReport rhat = diagnose(config, scenario, draws, log);

  const auto heights = draw_heights(model, draws);
  const std::size_t map = map_index(draws);
  const LayerModel mean = mean_heights(heights);
  const auto spread = indicator_std(model.mapper(), heights);
  const auto risk = airgap_risk(heights, config.summary.airgap_threshold,
                                config.summary.airgap_layer);

  std::vector<std::string> names;
  std::vector<std::vector<double>> map_cols, mean_cols;
  for (int l = 0; l < scenario.n_layers; ++l) {
    names.push_back("H" + std::to_string(l));
    map_cols.emplace_back(heights[map].layer(l).begin(), heights[map].layer(l).end());
    mean_cols.emplace_back(mean.layer(l).begin(), mean.layer(l).end());
  }
  write_cell_csv(scenario, names, map_cols, config.output("map_heights.csv"));
  write_cell_csv(scenario, names, mean_cols, config.output("mean_heights.csv"));
  write_cell_csv(scenario, {"risk"}, {risk}, config.output("airgap_risk.csv"));

  std::vector<int> slices = config.summary.slices;
  const int ny = scenario.voxel_grid.n_y();
  if (slices.empty()) {
    for (int s = 1; s <= 4; ++s) slices.push_back(std::min(ny - 1, s * ny / 5));
  }
  for (int j : slices) {
    for (int l = 0; l < scenario.n_layers; ++l) {
      write_slice_csv(spread[l], scenario.voxel_grid, j,
                      config.output("indicator_std_layer" + std::to_string(l) + "_y" +
                                    std::to_string(j) + ".csv"));
    }
    if (scenario.truth) {
      write_interface_csv(*scenario.truth, scenario, j,
                          config.output("truth_interfaces_y" + std::to_string(j) + ".csv"));
    }
    write_interface_csv(mean, scenario, j,
                        config.output("mean_interfaces_y" + std::to_string(j) + ".csv"));
  }

  double max_std = 0.0;
  for (const auto& s : spread) max_std = std::max(max_std, s.maxCoeff());
  std::vector<std::vector<double>> r_by_layer(static_cast<std::size_t>(scenario.n_layers - 1));
  for (const auto& d : draws.draws) {
    const auto r = model.smoothness(d.latent);
    for (std::size_t l = 0; l < r.size(); ++l) r_by_layer[l].push_back(r[l]);
  }
  nlohmann::json summary{{"n_draws", draws.draws.size()},
                         {"map_draw", map},
                         {"map_log_density", draws.draws[map].log_density},
                         {"worst_nested_rhat", rhat.worst},
                         {"indicator_std_max", max_std},
                         {"airgap_threshold", config.summary.airgap_threshold},
                         {"slices", slices}};
  nlohmann::json r_median = nlohmann::json::array();
  for (const auto& r : r_by_layer) r_median.push_back(median(r));
  summary["smoothness_median"] = r_median;
  if (scenario.truth) {
    const SensitivityMatrix& s = model.sensitivity();
    const auto covered = covered_cells(s, scenario);
    summary["mean_height_rmse_covered"] = height_rmse(mean, *scenario.truth, covered);
    std::vector<double> inside, outside;
    const int gl = config.summary.airgap_layer;
    for (int c = 0; c < scenario.layer_grid.n_cells(); ++c) {
      const double below = gl > 0 ? (*scenario.truth)(gl - 1, c) : 0.0;
      const bool gap = (*scenario.truth)(gl, c) - below > config.summary.airgap_threshold;
      if (gap) {
        inside.push_back(risk[c]);
      } else if (covered[c]) {
        outside.push_back(risk[c]);
      }
    }
    if (!inside.empty()) summary["airgap_risk_median_gap"] = median(inside);
    if (!outside.empty()) summary["airgap_risk_median_outside"] = median(outside);
  }
  write_json_file(summary, config.output(kSummary));
  log << "summarize: " << draws.draws.size() << " draws, MAP draw " << map
      << ", max indicator std " << format_double(max_std) << "\n";
  return kExitOk;
}

}  // namespace mucave
