// No-U-Turn sampler with an identity metric: leapfrog integration, tree
// doubling capped by a leapfrog budget, and dual-averaging step-size adaptation.

#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mucave/log_density.hpp"
#include "mucave/rng.hpp"

namespace mucave {

enum class NutsVariant { multinomial, slice };
enum class KeepPolicy { all, last };

struct NutsConfig {
  int max_leapfrog_steps = 256;
  double target_accept = 0.8;
  int n_adapt = 1 << 15;
  int n_draws = 1 << 12;
  KeepPolicy keep = KeepPolicy::last;
  NutsVariant variant = NutsVariant::multinomial;
  /// Skips adaptation when set.
  std::optional<double> fixed_step_size;
  double max_delta_energy = 1000.0;
  /// A chain aborts after this many consecutive iterations that hit a
  /// non-finite log density.
  int max_consecutive_failures = 1000;

  /// Deepest tree whose 2^depth - 1 leapfrogs fit the budget.
  int max_depth() const;
  void validate() const;
};

struct ChainState {
  std::vector<double> position;
  double log_density = 0.0;
  std::vector<double> gradient;
};

/// Evaluates the density at `position`; throws NumericError if it is not finite.
ChainState make_state(LogDensity& target, std::vector<double> position);

/// n steps of size eps (negative eps integrates backwards). Returns false if an
/// evaluation was non-finite, leaving the state at the failing point.
bool leapfrog(LogDensity& target, ChainState& state, std::span<double> momentum, double eps,
              int n = 1);

struct TransitionStats {
  double accept_stat = 0.0;
  int n_leapfrog = 0;
  int depth = 0;
  bool divergent = false;
  bool non_finite = false;
  double energy = 0.0;
};

/// One NUTS transition; replaces `state` with the selected point.
TransitionStats nuts_step(LogDensity& target, ChainState& state, double eps,
                          const NutsConfig& config, Philox& rng);

class DualAveraging {
 public:
  DualAveraging(double initial_step, double target, double gamma = 0.05, double t0 = 10.0,
                double kappa = 0.75);

  void update(double accept_stat);
  double step_size() const { return std::exp(log_eps_); }
  /// Averaged iterate used once adaptation ends.
  double final_step_size() const { return std::exp(log_eps_bar_); }

 private:
  double mu_, target_, gamma_, t0_, kappa_;
  double h_bar_ = 0.0, log_eps_ = 0.0, log_eps_bar_ = 0.0;
  int count_ = 0;
};

/// Doubles or halves eps until a single leapfrog step crosses acceptance 0.8.
double find_reasonable_step_size(LogDensity& target, const ChainState& state, Philox& rng,
                                 double initial = 1.0);

struct ChainResult {
  std::vector<std::vector<double>> draws;
  std::vector<double> log_densities;
  std::vector<int> draw_index;  // iteration of each kept draw within sampling
  double step_size = 0.0;
  double mean_accept_stat = 0.0;  // sampling phase
  double mean_tree_depth = 0.0;
  int max_leapfrog_used = 0;
  int n_divergent = 0;  // sampling phase
  long long n_gradient_evals = 0;
  bool failed = false;
  std::string failure;
  std::string warning;
};

ChainResult run_chain(LogDensity& target, std::vector<double> initial, const NutsConfig& config,
                      Philox& rng);

}  // namespace mucave
