#include "mucave/runner.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "mucave/geometry.hpp"
#include "mucave/parallel.hpp"

namespace mucave {

void SuperChainPlan::validate() const {
  if (n_super < 1 || n_within < 1) throw ConfigError("plan needs n_super >= 1 and n_within >= 1");
}

Eigen::MatrixXd DrawSet::super_chain_matrix(int k) const {
  std::vector<const Draw*> rows;
  for (const auto& d : draws) {
    if (d.super == k) rows.push_back(&d);
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < dim(); ++j) m(i, j) = rows[i]->latent[j];
  }
  return m;
}

Eigen::MatrixXd DrawSet::chain_matrix(int k, int w) const {
  std::vector<const Draw*> rows;
  for (const auto& d : draws) {
    if (d.super == k && d.within == w) rows.push_back(&d);
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < dim(); ++j) m(i, j) = rows[i]->latent[j];
  }
  return m;
}

bool RunResult::partial() const {
  for (const auto& c : chains) {
    if (c.result.failed) return true;
  }
  return false;
}

DrawSet RunResult::draws() const {
  DrawSet set{plan.n_super, plan.n_within, {}};
  for (const auto& c : chains) {
    for (std::size_t i = 0; i < c.result.draws.size(); ++i) {
      set.draws.push_back({c.super, c.within, c.result.draw_index[i], c.result.log_densities[i],
                           c.result.draws[i]});
    }
  }
  return set;
}

RunResult run_superchains(const SuperChainPlan& plan, const NutsConfig& config,
                          const DensityFactory& make_density, const InitialSampler& sample_initial,
                          unsigned n_threads) {
  plan.validate();
  config.validate();
  const auto start = std::chrono::steady_clock::now();

  std::vector<std::vector<double>> inits(static_cast<std::size_t>(plan.n_super));
  {
    auto density = make_density();
    for (int k = 0; k < plan.n_super; ++k) {
      Philox rng(plan.seed, SuperChainPlan::init_stream(k));
      constexpr int kMaxTries = 100;
      for (int attempt = 0;; ++attempt) {
        auto v = sample_initial(rng);
        try {
          make_state(*density, v);
          inits[k] = std::move(v);
          break;
        } catch (const NumericError&) {
          if (attempt + 1 == kMaxTries) {
            throw NumericError("no finite initial state found for super-chain " +
                               std::to_string(k));
          }
        }
      }
    }
  }

  RunResult run{plan, config, {}, 0.0};
  run.chains.resize(static_cast<std::size_t>(plan.n_chains()));
  parallel_for(run.chains.size(), n_threads, [&](std::size_t idx) {
    const int k = static_cast<int>(idx) / plan.n_within;
    const int m = static_cast<int>(idx) % plan.n_within;
    ChainRecord& rec = run.chains[idx];
    rec.super = k;
    rec.within = m;
    rec.initial = inits[k];
    Philox rng(plan.seed, plan.chain_stream(k, m));
    auto density = make_density();
    try {
      rec.result = run_chain(*density, rec.initial, config, rng);
    } catch (const NumericError& e) {
      rec.result.failed = true;
      rec.result.failure = e.what();
    }
  });
  run.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

void write_draws(const DrawSet& draws, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& d : draws.draws) {
    nlohmann::json rec{{"super", d.super},
                       {"within", d.within},
                       {"draw", d.index},
                       {"log_density", d.log_density},
                       {"latent", d.latent}};
    out << rec.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

DrawSet read_draws(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open draw file " + path.string());
  DrawSet set;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      Draw d{rec.at("super").get<int>(), rec.at("within").get<int>(), rec.at("draw").get<int>(),
             rec.at("log_density").get<double>(), rec.at("latent").get<std::vector<double>>()};
      set.n_super = std::max(set.n_super, d.super + 1);
      set.n_within = std::max(set.n_within, d.within + 1);
      if (!set.draws.empty() && d.latent.size() != set.dim()) {
        throw ConfigError("draw dimension changes");
      }
      set.draws.push_back(std::move(d));
    } catch (const nlohmann::json::exception& e) {
      std::ostringstream msg;
      msg << path.string() << ":" << line_no << ": " << e.what();
      throw ConfigError(msg.str());
    }
  }
  return set;
}

nlohmann::json nuts_config_to_json(const NutsConfig& c) {
  nlohmann::json j{{"max_leapfrog_steps", c.max_leapfrog_steps},
                   {"target_accept", c.target_accept},
                   {"n_adapt", c.n_adapt},
                   {"n_draws", c.n_draws},
                   {"keep_policy", c.keep == KeepPolicy::all ? "all" : "last"},
                   {"variant", c.variant == NutsVariant::slice ? "slice" : "multinomial"},
                   {"max_delta_energy", c.max_delta_energy}};
  if (c.fixed_step_size) j["fixed_step_size"] = *c.fixed_step_size;
  return j;
}

NutsConfig nuts_config_from_json(const nlohmann::json& j, NutsConfig c) {
  try {
    if (j.contains("max_leapfrog_steps")) c.max_leapfrog_steps = j["max_leapfrog_steps"].get<int>();
    if (j.contains("target_accept")) c.target_accept = j["target_accept"].get<double>();
    if (j.contains("n_adapt")) c.n_adapt = j["n_adapt"].get<int>();
    if (j.contains("n_draws")) c.n_draws = j["n_draws"].get<int>();
    if (j.contains("max_delta_energy")) c.max_delta_energy = j["max_delta_energy"].get<double>();
    if (j.contains("fixed_step_size")) c.fixed_step_size = j["fixed_step_size"].get<double>();
    if (j.contains("keep_policy")) {
      const auto k = j["keep_policy"].get<std::string>();
      if (k != "all" && k != "last") throw ConfigError("keep_policy must be 'all' or 'last'");
      c.keep = k == "all" ? KeepPolicy::all : KeepPolicy::last;
    }
    if (j.contains("variant")) {
      const auto v = j["variant"].get<std::string>();
      if (v != "slice" && v != "multinomial") {
        throw ConfigError("variant must be 'multinomial' or 'slice'");
      }
      c.variant = v == "slice" ? NutsVariant::slice : NutsVariant::multinomial;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("nuts config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json run_metadata(const RunResult& run) {
  nlohmann::json chains = nlohmann::json::array();
  for (const auto& c : run.chains) {
    nlohmann::json j{{"super", c.super},
                     {"within", c.within},
                     {"step_size", c.result.step_size},
                     {"mean_accept_stat", c.result.mean_accept_stat},
                     {"mean_tree_depth", c.result.mean_tree_depth},
                     {"max_leapfrog_used", c.result.max_leapfrog_used},
                     {"n_divergent", c.result.n_divergent},
                     {"n_gradient_evals", c.result.n_gradient_evals},
                     {"n_kept", c.result.draws.size()},
                     {"failed", c.result.failed}};
    if (c.result.failed) j["failure"] = c.result.failure;
    if (!c.result.warning.empty()) j["warning"] = c.result.warning;
    chains.push_back(std::move(j));
  }
  return {{"plan", {{"n_super", run.plan.n_super},
                    {"n_within", run.plan.n_within},
                    {"seed", run.plan.seed}}},
          {"nuts", nuts_config_to_json(run.config)},
          {"chains", std::move(chains)},
          {"partial", run.partial()},
          {"wall_seconds", run.wall_seconds}};
}

}  // namespace mucave
