#include <doctest.h>

#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "mucave/eigen_span.hpp"
#include "mucave/geometry.hpp"
#include "mucave/nuts.hpp"
#include "stat_oracles.hpp"

using namespace mucave;

namespace {

// Zero-mean Gaussian with precision P.
class Gaussian final : public LogDensity {
 public:
  explicit Gaussian(Eigen::MatrixXd precision) : p_{std::move(precision)} {}
  static Gaussian standard(int d) { return Gaussian(Eigen::MatrixXd::Identity(d, d)); }

  std::size_t dim() const override { return static_cast<std::size_t>(p_.rows()); }
  double evaluate(std::span<const double> x, std::span<double> grad) override {
    const Eigen::VectorXd xv = as_eigen(x);
    const Eigen::VectorXd g = -p_ * xv;
    std::copy(g.begin(), g.end(), grad.begin());
    return 0.5 * xv.dot(g);
  }

 private:
  Eigen::MatrixXd p_;
};

class NanDensity final : public LogDensity {
 public:
  std::size_t dim() const override { return 2; }
  double evaluate(std::span<const double> x, std::span<double> grad) override {
    grad[0] = -x[0];
    grad[1] = -x[1];
    if (std::abs(x[0]) > 0.5) return std::numeric_limits<double>::quiet_NaN();
    return -0.5 * (x[0] * x[0] + x[1] * x[1]);
  }
};

double hamiltonian(const ChainState& s, std::span<const double> p) {
  double k = 0.0;
  for (double v : p) k += 0.5 * v * v;
  return -s.log_density + k;
}

NutsConfig sampling_config(int n_adapt, int n_draws) {
  NutsConfig c;
  c.n_adapt = n_adapt;
  c.n_draws = n_draws;
  c.keep = KeepPolicy::all;
  return c;
}

std::vector<double> column(const ChainResult& r, std::size_t i) {
  std::vector<double> out;
  for (const auto& d : r.draws) out.push_back(d[i]);
  return out;
}

// Mean and variance of every coordinate within `z` Monte Carlo standard errors.
void check_moments(const ChainResult& r, std::size_t dim, double z) {
  for (std::size_t i = 0; i < dim; ++i) {
    CAPTURE(i);
    const auto x = column(r, i);
    std::vector<double> sq;
    for (double v : x) sq.push_back(v * v);
    const double se_mean = std::sqrt(testing::variance(x) / testing::effective_sample_size(x));
    const double se_var = std::sqrt(testing::variance(sq) / testing::effective_sample_size(sq));
    CHECK(std::abs(testing::mean(x)) <= z * se_mean);
    CHECK(std::abs(testing::mean(sq) - 1.0) <= z * se_var);
  }
}

}  // namespace

TEST_CASE("Philox known answer") {
  // Philox4x32-10 with zero counter and key: 6627e8d5 e169c58d bc57ac4c 9b00dbd8.
  Philox rng(0, 0);
  CHECK(rng() == ((std::uint64_t{0xe169c58d} << 32) | 0x6627e8d5));
  CHECK(rng() == ((std::uint64_t{0x9b00dbd8} << 32) | 0xbc57ac4c));
  Philox a(5, 7), b(5, 7), c(5, 8);
  for (int i = 0; i < 10; ++i) {
    const auto va = a();
    CHECK(va == b());
    CHECK(va != c());
  }
  Philox u(1, 2);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    REQUIRE(x >= 0.0);
    REQUIRE(x < 1.0);
  }
}

TEST_CASE("leapfrog on a harmonic oscillator") {
  auto target = Gaussian::standard(1);
  auto s = make_state(target, {1.0});
  std::vector<double> p{0.0};
  const double h0 = hamiltonian(s, p);
  REQUIRE(leapfrog(target, s, p, 0.1, 10));
  CHECK(std::abs(hamiltonian(s, p) - h0) <= 1e-3);
}

TEST_CASE("leapfrog is reversible") {
  auto target = Gaussian(Eigen::MatrixXd{{2.0, 0.3}, {0.3, 1.0}});
  auto s = make_state(target, {0.7, -1.2});
  std::vector<double> p{0.4, 0.9};
  const auto x0 = s.position;
  const auto p0 = p;
  REQUIRE(leapfrog(target, s, p, 0.05, 37));
  for (auto& v : p) v = -v;
  REQUIRE(leapfrog(target, s, p, 0.05, 37));
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(s.position[i] - x0[i]) <= 1e-10);
    CHECK(std::abs(-p[i] - p0[i]) <= 1e-10);
  }
}

TEST_CASE("small leapfrog step moves by eps times momentum") {
  auto target = Gaussian::standard(3);
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    auto s = make_state(target, {0.5, -0.2, 1.0});
    const auto x0 = s.position;
    std::vector<double> p{1.0, 2.0, -1.0};
    const auto p0 = p;
    leapfrog(target, s, p, eps, 1);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(s.position[i] - x0[i] - eps * p0[i]) <= eps * eps);
  }
}

TEST_CASE("energy error stays bounded over long trajectories") {
  auto target = Gaussian::standard(5);
  auto s = make_state(target, {1, -1, 0.5, 0.2, -0.3});
  std::vector<double> p{0.3, 0.1, -0.7, 1.0, 0.0};
  const double h0 = hamiltonian(s, p);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    leapfrog(target, s, p, 0.2, 1);
    worst = std::max(worst, std::abs(hamiltonian(s, p) - h0));
  }
  CHECK(worst <= 0.05);
}

TEST_CASE("depth cap follows the leapfrog budget") {
  NutsConfig c;
  CHECK(c.max_depth() == 8);
  c.max_leapfrog_steps = 1;
  CHECK(c.max_depth() == 1);
  c.max_leapfrog_steps = 1024;
  CHECK(c.max_depth() == 10);
  c.max_leapfrog_steps = 100;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("10-D standard normal") {
  auto target = Gaussian::standard(10);
  Philox rng(2024, 0);
  const auto r = run_chain(target, std::vector<double>(10, 0.5), sampling_config(1000, 20000), rng);
  REQUIRE_FALSE(r.failed);
  REQUIRE(r.draws.size() == 20000);
  check_moments(r, 10, 3.0);
  CHECK(r.mean_accept_stat >= 0.7);
  CHECK(r.mean_accept_stat <= 0.9);
  CHECK(r.max_leapfrog_used <= 256);
}

TEST_CASE("correlated 2-D normal") {
  const Eigen::Matrix2d cov{{1.0, 0.9}, {0.9, 1.0}};
  auto target = Gaussian(cov.inverse());
  Philox rng(11, 3);
  const auto r = run_chain(target, {0.0, 0.0}, sampling_config(1000, 10000), rng);
  const auto x = column(r, 0), y = column(r, 1);
  const double mx = testing::mean(x), my = testing::mean(y);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  CHECK(std::abs(sxy / std::sqrt(sxx * syy) - 0.9) <= 0.05);
}

TEST_CASE("one-step trajectories still preserve the target") {
  auto target = Gaussian::standard(4);
  Philox rng(5, 1);
  auto c = sampling_config(1000, 20000);
  c.max_leapfrog_steps = 1;
  const auto r = run_chain(target, std::vector<double>(4, 0.0), c, rng);
  CHECK(r.max_leapfrog_used == 1);
  check_moments(r, 4, 5.0);
}

TEST_CASE("slice variant preserves the target") {
  auto target = Gaussian::standard(5);
  Philox rng(6, 1);
  auto c = sampling_config(1000, 10000);
  c.variant = NutsVariant::slice;
  const auto r = run_chain(target, std::vector<double>(5, 0.0), c, rng);
  check_moments(r, 5, 3.0);
}

TEST_CASE("chi-square goodness of fit on a 1-D normal") {
  auto target = Gaussian::standard(1);
  Philox rng(77, 0);
  const auto r = run_chain(target, {0.0}, sampling_config(1000, 100000), rng);
  const int bins = 50;
  const boost::math::normal_distribution<double> n01;
  std::vector<double> observed(bins, 0.0);
  for (const auto& d : r.draws) {
    const int b = std::min(bins - 1, static_cast<int>(boost::math::cdf(n01, d[0]) * bins));
    observed[b] += 1.0;
  }
  const double expected = static_cast<double>(r.draws.size()) / bins;
  double chi2 = 0.0;
  for (double o : observed) chi2 += (o - expected) * (o - expected) / expected;
  const boost::math::chi_squared_distribution<double> dist(bins - 1);
  CHECK(boost::math::cdf(boost::math::complement(dist, chi2)) > 0.01);
}

TEST_CASE("step-size adaptation") {
  auto target = Gaussian::standard(10);
  auto adapted = [&](double delta) {
    Philox rng(3, 3);
    auto c = sampling_config(2000, 2000);
    c.target_accept = delta;
    return run_chain(target, std::vector<double>(10, 0.1), c, rng);
  };
  const auto loose = adapted(0.45);
  const auto tight = adapted(0.9);
  CHECK(tight.step_size < loose.step_size);
  CHECK(tight.mean_accept_stat > loose.mean_accept_stat);

  Philox rng(3, 4);
  auto c = sampling_config(50, 100);
  c.fixed_step_size = 0.37;
  const auto fixed = run_chain(target, std::vector<double>(10, 0.1), c, rng);
  CHECK(fixed.step_size == 0.37);
}

TEST_CASE("dual averaging moves toward the target acceptance") {
  DualAveraging da(1.0, 0.8);
  for (int i = 0; i < 50; ++i) da.update(0.2);
  CHECK(da.step_size() < 1.0);
  DualAveraging up(1.0, 0.8);
  for (int i = 0; i < 50; ++i) up.update(1.0);
  CHECK(up.step_size() > 1.0);
}

TEST_CASE("trajectory cap is honoured") {
  // A nearly flat direction makes every tree run to the cap.
  Eigen::MatrixXd p = Eigen::MatrixXd::Identity(3, 3);
  p(2, 2) = 1e-8;
  auto target = Gaussian(p);
  Philox rng(1, 1);
  auto c = sampling_config(0, 50);
  c.fixed_step_size = 0.01;
  c.max_leapfrog_steps = 64;
  const auto r = run_chain(target, {0, 0, 0}, c, rng);
  CHECK(r.max_leapfrog_used <= 64);
  CHECK(r.max_leapfrog_used >= 32);
  CHECK(r.n_gradient_evals <= 64LL * 50);
}

TEST_CASE("identical seeds give identical chains") {
  auto target = Gaussian::standard(3);
  Philox a(9, 2), b(9, 2);
  const auto ra = run_chain(target, {0.1, 0.2, 0.3}, sampling_config(100, 100), a);
  const auto rb = run_chain(target, {0.1, 0.2, 0.3}, sampling_config(100, 100), b);
  CHECK(ra.draws == rb.draws);
  CHECK(ra.step_size == rb.step_size);
}

TEST_CASE("keep-last retains one draw") {
  auto target = Gaussian::standard(2);
  Philox rng(4, 0);
  auto c = sampling_config(64, 128);
  c.keep = KeepPolicy::last;
  const auto r = run_chain(target, {0.0, 0.0}, c, rng);
  REQUIRE(r.draws.size() == 1);
  CHECK(r.draw_index[0] == 127);
}

TEST_CASE("non-finite regions") {
  NanDensity target;
  CHECK_THROWS_AS(make_state(target, {1.0, 0.0}), NumericError);
  Philox rng(8, 8);
  auto c = sampling_config(200, 200);
  const auto r = run_chain(target, {0.0, 0.0}, c, rng);
  CHECK_FALSE(r.failed);
  for (const auto& d : r.draws) REQUIRE(std::abs(d[0]) <= 0.5);
}
