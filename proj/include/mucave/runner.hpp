// Super-chain runner: n_super random initial states, each shared by n_within
// independently seeded chains, plus draw persistence (NDJSON + JSON sidecar).

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "mucave/nuts.hpp"

namespace mucave {

struct SuperChainPlan {
  int n_super = 4;
  int n_within = 2;
  std::uint64_t seed = 0;

  int n_chains() const { return n_super * n_within; }
  void validate() const;

  /// Philox stream of chain (k, m) and of super-chain k's initial draw.
  std::uint64_t chain_stream(int k, int m) const {
    return static_cast<std::uint64_t>(k) * static_cast<std::uint64_t>(n_within) + m;
  }
  static std::uint64_t init_stream(int k) { return (std::uint64_t{1} << 32) + k; }
};

struct Draw {
  int super = 0;
  int within = 0;
  int index = 0;  // sampling iteration
  double log_density = 0.0;
  std::vector<double> latent;
};

/// Kept draws in (super, within, index) order.
struct DrawSet {
  int n_super = 0;
  int n_within = 0;
  std::vector<Draw> draws;

  std::size_t dim() const { return draws.empty() ? 0 : draws.front().latent.size(); }
  /// Rows of super-chain k (pooled over its chains), one column per coordinate.
  Eigen::MatrixXd super_chain_matrix(int k) const;
  Eigen::MatrixXd chain_matrix(int k, int m) const;
};

struct ChainRecord {
  int super = 0;
  int within = 0;
  std::vector<double> initial;
  ChainResult result;
};

struct RunResult {
  SuperChainPlan plan;
  NutsConfig config;
  std::vector<ChainRecord> chains;
  double wall_seconds = 0.0;

  bool partial() const;
  DrawSet draws() const;
};

using DensityFactory = std::function<std::unique_ptr<LogDensity>()>;
using InitialSampler = std::function<std::vector<double>(Philox&)>;

/// Chains run on up to n_threads workers (0 = hardware concurrency). A
/// super-chain's initial state is redrawn until the density is finite there.
RunResult run_superchains(const SuperChainPlan& plan, const NutsConfig& config,
                          const DensityFactory& make_density, const InitialSampler& sample_initial,
                          unsigned n_threads = 0);

void write_draws(const DrawSet& draws, const std::filesystem::path& path);
DrawSet read_draws(const std::filesystem::path& path);

nlohmann::json run_metadata(const RunResult& run);

nlohmann::json nuts_config_to_json(const NutsConfig& config);
NutsConfig nuts_config_from_json(const nlohmann::json& doc, NutsConfig base = {});

}  // namespace mucave
