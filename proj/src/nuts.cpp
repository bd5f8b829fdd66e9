#include "mucave/nuts.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "mucave/geometry.hpp"

namespace mucave {

int NutsConfig::max_depth() const {
  return std::bit_width(static_cast<unsigned>(max_leapfrog_steps) + 1u) - 1;
}

void NutsConfig::validate() const {
  if (max_leapfrog_steps < 1 || !std::has_single_bit(static_cast<unsigned>(max_leapfrog_steps))) {
    throw ConfigError("max_leapfrog_steps must be a positive power of two");
  }
  if (!(target_accept > 0.0 && target_accept < 1.0)) {
    throw ConfigError("target acceptance must lie in (0, 1)");
  }
  if (n_adapt < 0 || n_draws < 1) throw ConfigError("n_adapt must be >= 0 and n_draws >= 1");
  if (fixed_step_size && !(*fixed_step_size > 0.0)) {
    throw ConfigError("fixed step size must be positive");
  }
  if (!(max_delta_energy > 0.0)) throw ConfigError("max_delta_energy must be positive");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// False when the density is not finite at the state's position.
bool refresh(LogDensity& target, ChainState& state) {
  try {
    state.log_density = target.evaluate(state.position, state.gradient);
  } catch (const NumericError&) {
    state.log_density = -kInf;
    return false;
  }
  if (!std::isfinite(state.log_density)) return false;
  return std::all_of(state.gradient.begin(), state.gradient.end(),
                     [](double g) { return std::isfinite(g); });
}

double log_sum_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

struct Point {
  ChainState state;
  std::vector<double> p;
};

double hamiltonian(const Point& z) {
  const double h = -z.state.log_density + 0.5 * dot(z.p, z.p);
  return std::isnan(h) ? kInf : h;
}

void sample_momentum(Philox& rng, std::vector<double>& p) {
  for (auto& v : p) v = standard_normal(rng);
}

void add(std::vector<double>& acc, std::span<const double> v) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
}

std::vector<double> sum(std::span<const double> a, std::span<const double> b) {
  std::vector<double> r(a.begin(), a.end());
  add(r, b);
  return r;
}

// Generalised no-U-turn criterion with the identity metric (p_sharp = p).
bool no_u_turn(std::span<const double> p_sharp_minus, std::span<const double> p_sharp_plus,
               std::span<const double> rho) {
  return dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0;
}

class MultinomialTree {
 public:
  MultinomialTree(LogDensity& target, double eps, const NutsConfig& config, Philox& rng)
      : target_{target}, eps_{eps}, config_{config}, rng_{rng} {}

  TransitionStats transition(ChainState& state) {
    const std::size_t d = state.position.size();
    Point z{state, std::vector<double>(d)};
    sample_momentum(rng_, z.p);
    h0_ = hamiltonian(z);

    Point z_fwd = z, z_bck = z;
    ChainState z_sample = z.state;
    ChainState z_propose = z.state;

    std::vector<double> p_fwd_fwd = z.p, p_fwd_bck = z.p, p_bck_fwd = z.p, p_bck_bck = z.p;
    std::vector<double> ps_fwd_fwd = z.p, ps_fwd_bck = z.p, ps_bck_fwd = z.p, ps_bck_bck = z.p;
    std::vector<double> rho = z.p;
    double log_sum_weight = 0.0;
    int depth = 0;

    while (depth < config_.max_depth()) {
      std::vector<double> rho_fwd(d, 0.0), rho_bck(d, 0.0);
      double log_sum_weight_subtree = -kInf;
      bool valid;
      if (rng_.uniform() > 0.5) {
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        ps_bck_fwd = ps_fwd_bck;
        current_ = z_fwd;
        valid = build(depth, z_propose, ps_fwd_bck, ps_fwd_fwd, rho_fwd, p_fwd_bck, p_fwd_fwd,
                      1.0, log_sum_weight_subtree);
        z_fwd = current_;
      } else {
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        ps_fwd_bck = ps_bck_fwd;
        current_ = z_bck;
        valid = build(depth, z_propose, ps_bck_fwd, ps_bck_bck, rho_bck, p_bck_fwd, p_bck_bck,
                      -1.0, log_sum_weight_subtree);
        z_bck = current_;
      }
      if (!valid) break;
      ++depth;

      if (log_sum_weight_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (rng_.uniform() < std::exp(log_sum_weight_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

      rho = sum(rho_bck, rho_fwd);
      bool persist = no_u_turn(ps_bck_bck, ps_fwd_fwd, rho);
      persist = persist && no_u_turn(ps_bck_bck, ps_fwd_bck, sum(rho_bck, p_fwd_bck));
      persist = persist && no_u_turn(ps_bck_fwd, ps_fwd_fwd, sum(rho_fwd, p_bck_fwd));
      if (!persist) break;
    }

    TransitionStats stats;
    stats.n_leapfrog = n_leapfrog_;
    stats.depth = depth;
    stats.divergent = divergent_;
    stats.non_finite = non_finite_;
    stats.accept_stat = n_leapfrog_ > 0 ? sum_metro_prob_ / n_leapfrog_ : 0.0;
    state = std::move(z_sample);
    stats.energy = -state.log_density;
    return stats;
  }

 private:
  bool build(int depth, ChainState& z_propose, std::vector<double>& ps_beg,
             std::vector<double>& ps_end, std::vector<double>& rho, std::vector<double>& p_beg,
             std::vector<double>& p_end, double sign, double& log_sum_weight) {
    const std::size_t d = rho.size();
    if (depth == 0) {
      if (!leapfrog(target_, current_.state, current_.p, sign * eps_, 1)) non_finite_ = true;
      ++n_leapfrog_;
      const double h = hamiltonian(current_);
      if (h - h0_ > config_.max_delta_energy) divergent_ = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0_ - h);
      sum_metro_prob_ += h0_ - h > 0.0 ? 1.0 : std::exp(h0_ - h);
      z_propose = current_.state;
      ps_beg = current_.p;
      ps_end = ps_beg;
      add(rho, current_.p);
      p_beg = current_.p;
      p_end = p_beg;
      return !divergent_;
    }

    double log_sum_weight_init = -kInf;
    std::vector<double> p_init_end(d), ps_init_end(d), rho_init(d, 0.0);
    if (!build(depth - 1, z_propose, ps_beg, ps_init_end, rho_init, p_beg, p_init_end, sign,
               log_sum_weight_init)) {
      return false;
    }

    ChainState z_propose_final = current_.state;
    double log_sum_weight_final = -kInf;
    std::vector<double> p_final_beg(d), ps_final_beg(d), rho_final(d, 0.0);
    if (!build(depth - 1, z_propose_final, ps_final_beg, ps_end, rho_final, p_final_beg, p_end,
               sign, log_sum_weight_final)) {
      return false;
    }

    const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
    if (log_sum_weight_final > log_sum_weight_subtree) {
      z_propose = std::move(z_propose_final);
    } else if (rng_.uniform() < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
      z_propose = std::move(z_propose_final);
    }

    const std::vector<double> rho_subtree = sum(rho_init, rho_final);
    add(rho, rho_subtree);
    bool persist = no_u_turn(ps_beg, ps_end, rho_subtree);
    persist = persist && no_u_turn(ps_beg, ps_final_beg, sum(rho_init, p_final_beg));
    persist = persist && no_u_turn(ps_init_end, ps_end, sum(rho_final, p_init_end));
    return persist;
  }

  LogDensity& target_;
  double eps_;
  const NutsConfig& config_;
  Philox& rng_;
  Point current_;
  double h0_ = 0.0;
  int n_leapfrog_ = 0;
  double sum_metro_prob_ = 0.0;
  bool divergent_ = false;
  bool non_finite_ = false;
};

// Original slice-variable sampler with progressive (biased) subtree selection.
class SliceTree {
 public:
  SliceTree(LogDensity& target, double eps, const NutsConfig& config, Philox& rng)
      : target_{target}, eps_{eps}, config_{config}, rng_{rng} {}

  TransitionStats transition(ChainState& state) {
    const std::size_t d = state.position.size();
    Point z{state, std::vector<double>(d)};
    sample_momentum(rng_, z.p);
    h0_ = hamiltonian(z);
    log_u_ = -h0_ + std::log(1.0 - rng_.uniform());

    Point minus = z, plus = z;
    ChainState sample = z.state;
    long long n = 1;
    int depth = 0;
    bool keep_going = true;
    while (keep_going && depth < config_.max_depth()) {
      const double dir = rng_.uniform() < 0.5 ? -1.0 : 1.0;
      Subtree sub = dir < 0 ? build(minus, dir, depth) : build(plus, dir, depth);
      if (dir < 0) {
        minus = std::move(sub.edge);
      } else {
        plus = std::move(sub.edge);
      }
      if (sub.valid && sub.n > 0 &&
          rng_.uniform() < static_cast<double>(sub.n) / static_cast<double>(n)) {
        sample = std::move(sub.candidate);
      }
      n += sub.n;
      ++depth;
      keep_going = sub.valid && spans_without_u_turn(minus, plus);
    }

    TransitionStats stats;
    stats.n_leapfrog = n_leapfrog_;
    stats.depth = depth;
    stats.divergent = divergent_;
    stats.non_finite = non_finite_;
    stats.accept_stat = n_leapfrog_ > 0 ? sum_alpha_ / n_leapfrog_ : 0.0;
    state = std::move(sample);
    stats.energy = -state.log_density;
    return stats;
  }

 private:
  struct Subtree {
    Point edge;  // outermost point in the build direction
    Point inner;  // innermost point
    ChainState candidate;
    long long n = 0;
    bool valid = true;
  };

  static bool spans_without_u_turn(const Point& minus, const Point& plus) {
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < minus.p.size(); ++i) {
      const double delta = plus.state.position[i] - minus.state.position[i];
      a += delta * minus.p[i];
      b += delta * plus.p[i];
    }
    return a >= 0.0 && b >= 0.0;
  }

  Subtree build(const Point& from, double dir, int depth) {
    if (depth == 0) {
      Point z = from;
      if (!leapfrog(target_, z.state, z.p, dir * eps_, 1)) non_finite_ = true;
      ++n_leapfrog_;
      const double h = hamiltonian(z);
      sum_alpha_ += std::min(1.0, std::exp(h0_ - h));
      Subtree t;
      t.n = log_u_ <= -h ? 1 : 0;
      t.valid = log_u_ < config_.max_delta_energy - h;
      if (!t.valid) divergent_ = true;
      t.candidate = z.state;
      t.inner = z;
      t.edge = std::move(z);
      return t;
    }
    Subtree first = build(from, dir, depth - 1);
    if (!first.valid) return first;
    Subtree second = build(first.edge, dir, depth - 1);
    const long long n = first.n + second.n;
    if (second.n > 0 &&
        rng_.uniform() < static_cast<double>(second.n) / static_cast<double>(n)) {
      first.candidate = std::move(second.candidate);
    }
    first.n = n;
    first.valid = second.valid;
    first.edge = std::move(second.edge);
    if (first.valid) {
      first.valid = dir > 0 ? spans_without_u_turn(first.inner, first.edge)
                            : spans_without_u_turn(first.edge, first.inner);
    }
    return first;
  }

  LogDensity& target_;
  double eps_;
  const NutsConfig& config_;
  Philox& rng_;
  double h0_ = 0.0;
  double log_u_ = 0.0;
  int n_leapfrog_ = 0;
  double sum_alpha_ = 0.0;
  bool divergent_ = false;
  bool non_finite_ = false;
};

}  // namespace

ChainState make_state(LogDensity& target, std::vector<double> position) {
  if (position.size() != target.dim()) {
    throw std::invalid_argument("initial position has the wrong dimension");
  }
  ChainState s{std::move(position), 0.0, std::vector<double>(target.dim())};
  if (!refresh(target, s)) throw NumericError("log density is not finite at the initial state");
  return s;
}

bool leapfrog(LogDensity& target, ChainState& state, std::span<double> momentum, double eps,
              int n) {
  const std::size_t d = state.position.size();
  for (int step = 0; step < n; ++step) {
    for (std::size_t i = 0; i < d; ++i) momentum[i] += 0.5 * eps * state.gradient[i];
    for (std::size_t i = 0; i < d; ++i) state.position[i] += eps * momentum[i];
    if (!refresh(target, state)) return false;
    for (std::size_t i = 0; i < d; ++i) momentum[i] += 0.5 * eps * state.gradient[i];
  }
  return true;
}

TransitionStats nuts_step(LogDensity& target, ChainState& state, double eps,
                          const NutsConfig& config, Philox& rng) {
  if (!(eps > 0.0)) throw std::invalid_argument("NUTS step size must be positive");
  if (config.variant == NutsVariant::slice) return SliceTree(target, eps, config, rng).transition(state);
  return MultinomialTree(target, eps, config, rng).transition(state);
}

DualAveraging::DualAveraging(double initial_step, double target, double gamma, double t0,
                             double kappa)
    : mu_{std::log(10.0 * initial_step)}, target_{target}, gamma_{gamma}, t0_{t0}, kappa_{kappa},
      log_eps_{std::log(initial_step)} {}

void DualAveraging::update(double accept_stat) {
  ++count_;
  accept_stat = std::min(accept_stat, 1.0);
  const double eta = 1.0 / (count_ + t0_);
  h_bar_ = (1.0 - eta) * h_bar_ + eta * (target_ - accept_stat);
  log_eps_ = mu_ - h_bar_ * std::sqrt(static_cast<double>(count_)) / gamma_;
  const double w = std::pow(static_cast<double>(count_), -kappa_);
  log_eps_bar_ = (1.0 - w) * log_eps_bar_ + w * log_eps_;
}

double find_reasonable_step_size(LogDensity& target, const ChainState& state, Philox& rng,
                                 double initial) {
  const double log_threshold = std::log(0.8);
  double eps = initial;
  auto trial = [&] {
    Point z{state, std::vector<double>(state.position.size())};
    sample_momentum(rng, z.p);
    const double h0 = hamiltonian(z);
    leapfrog(target, z.state, z.p, eps, 1);
    return h0 - hamiltonian(z);
  };
  const int direction = trial() > log_threshold ? 1 : -1;
  for (int iter = 0; iter < 200; ++iter) {
    const double delta = trial();
    if (direction == 1 && !(delta > log_threshold)) break;
    if (direction == -1 && !(delta < log_threshold)) break;
    eps = direction == 1 ? 2.0 * eps : 0.5 * eps;
    if (eps > 1e7) throw NumericError("step-size search diverged; the target looks improper");
    if (eps == 0.0) throw NumericError("step-size search collapsed to zero");
  }
  return eps;
}

ChainResult run_chain(LogDensity& target, std::vector<double> initial, const NutsConfig& config,
                      Philox& rng) {
  config.validate();
  ChainResult result;
  ChainState state = make_state(target, std::move(initial));
  double eps = config.fixed_step_size ? *config.fixed_step_size
                                      : find_reasonable_step_size(target, state, rng);
  DualAveraging adapt(eps, config.target_accept);
  int consecutive_failures = 0;

  auto step = [&](int iteration) {
    const TransitionStats s = nuts_step(target, state, eps, config, rng);
    result.n_gradient_evals += s.n_leapfrog;
    result.max_leapfrog_used = std::max(result.max_leapfrog_used, s.n_leapfrog);
    consecutive_failures = s.non_finite ? consecutive_failures + 1 : 0;
    if (consecutive_failures > config.max_consecutive_failures) {
      std::ostringstream msg;
      msg << "aborted at iteration " << iteration << " after " << consecutive_failures
          << " consecutive non-finite evaluations";
      result.failed = true;
      result.failure = msg.str();
    }
    return s;
  };

  for (int i = 0; i < config.n_adapt && !result.failed; ++i) {
    const auto s = step(i);
    if (!config.fixed_step_size) {
      adapt.update(s.accept_stat);
      eps = adapt.step_size();
    }
  }
  if (!config.fixed_step_size && config.n_adapt > 0) eps = adapt.final_step_size();
  result.step_size = eps;
  if (eps < 1e-8) {
    result.warning = "adapted step size is tiny; the target may be pathological";
  }

  double accept_sum = 0.0, depth_sum = 0.0;
  int n_done = 0;
  for (int i = 0; i < config.n_draws && !result.failed; ++i) {
    const auto s = step(config.n_adapt + i);
    accept_sum += s.accept_stat;
    depth_sum += s.depth;
    if (s.divergent) ++result.n_divergent;
    ++n_done;
    if (config.keep == KeepPolicy::all || i + 1 == config.n_draws) {
      result.draws.push_back(state.position);
      result.log_densities.push_back(state.log_density);
      result.draw_index.push_back(i);
    }
  }
  if (n_done > 0) {
    result.mean_accept_stat = accept_sum / n_done;
    result.mean_tree_depth = depth_sum / n_done;
  }
  return result;
}

}  // namespace mucave
