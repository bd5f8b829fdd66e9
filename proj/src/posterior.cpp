#include "mucave/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "mucave/eigen_span.hpp"

namespace mucave {

std::vector<double> LatentLayout::pack(std::span<const double> z,
                                       std::span<const double> rho_raw) const {
  if (z.size() != z_size() || rho_raw.size() != static_cast<std::size_t>(n_inferred)) {
    throw std::invalid_argument("latent pack: block sizes do not match the layout");
  }
  std::vector<double> v(z.begin(), z.end());
  v.insert(v.end(), rho_raw.begin(), rho_raw.end());
  return v;
}

void LatentLayout::unpack(std::span<const double> latent, std::vector<double>& z,
                          std::vector<double>& rho_raw) const {
  if (latent.size() != dim()) throw std::invalid_argument("latent unpack: wrong dimension");
  z.assign(latent.begin(), latent.begin() + static_cast<std::ptrdiff_t>(z_size()));
  rho_raw.assign(latent.begin() + static_cast<std::ptrdiff_t>(z_size()), latent.end());
}

void CountData::validate() const {
  for (auto c : counts) {
    if (c < 0) throw ConfigError("counts must be non-negative");
  }
}

double poisson_loglik(const Eigen::VectorXd& lambda, const CountData& data,
                      bool include_factorial) {
  if (static_cast<std::size_t>(lambda.size()) != data.size()) {
    throw std::invalid_argument("poisson_loglik: lambda and counts differ in length");
  }
  double sum = 0.0;
  for (Eigen::Index p = 0; p < lambda.size(); ++p) {
    if (!(lambda[p] > 0.0)) throw std::logic_error("poisson_loglik: non-positive mean");
    const auto c = static_cast<double>(data.counts[static_cast<std::size_t>(p)]);
    sum += c * std::log(lambda[p]) - lambda[p];
    if (include_factorial) sum -= std::lgamma(c + 1.0);
  }
  return sum;
}

namespace {

void require_finite(std::span<const double> values, const char* stage) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream msg;
      msg << "non-finite value in stage '" << stage << "' at index " << i;
      throw NumericError(msg.str());
    }
  }
}

void require_finite(double value, const char* stage) { require_finite({&value, 1}, stage); }

}  // namespace

PosteriorModel::PosteriorModel(const Scenario& scenario, SensitivityMatrix sensitivity,
                               CountData counts, PosteriorOptions options)
    : layout_{scenario.n_layers - 1, scenario.layer_grid.n_cells()},
      options_{options},
      graph_{scenario.layer_grid.n_rows(), scenario.layer_grid.n_cols()},
      spectrum_{std::make_shared<const TorusSpectrum>(scenario.layer_grid.n_rows(),
                                                      scenario.layer_grid.n_cols())},
      transform_{scenario.top_surface, scenario.n_layers - 1, scenario.t_min},
      mapper_{scenario, options.gamma, options.reference},
      sensitivity_{std::move(sensitivity)},
      counts_{std::move(counts)} {
  scenario.validate();
  transform_.validate();
  counts_.validate();
  if (sensitivity_.g.cols() != static_cast<Eigen::Index>(scenario.voxel_grid.size()) ||
      sensitivity_.r0.size() != sensitivity_.g.cols() ||
      sensitivity_.lambda0.size() != sensitivity_.g.rows()) {
    throw ConfigError("sensitivity matrix does not match the scenario grid");
  }
  if (counts_.size() != sensitivity_.n_pixels()) {
    std::ostringstream msg;
    msg << "count file has " << counts_.size() << " pixels, sensitivity has "
        << sensitivity_.n_pixels();
    throw ConfigError(msg.str());
  }
  if (!(options_.lambda_floor > 0.0)) throw ConfigError("lambda floor must be positive");
}

double PosteriorModel::r_of(double rho_raw) const {
  return std::min(logistic(rho_raw), kMaxSmoothness);
}

WhiteningOperator PosteriorModel::whitener(double r) const {
  return WhiteningOperator(car_precision(graph_, r), options_.whitening, spectrum_);
}

PosteriorModel::Stages PosteriorModel::forward(std::span<const double> latent) const {
  std::vector<double> z, rho;
  layout_.unpack(latent, z, rho);
  require_finite(latent, "latent");
  const int nc = layout_.n_cells;
  Stages s;
  s.log_prior = prior_logdensity_unconstrained(z, rho, options_.smoothness);
  s.x.resize(layout_.z_size());
  s.uniforms.resize(layout_.z_size());
  for (int l = 0; l < layout_.n_inferred; ++l) {
    const double r = r_of(rho[l]);
    s.smoothness.push_back(r);
    const auto w = whitener(r);
    const Eigen::VectorXd x = w.apply(as_eigen(std::span<const double>(z).subspan(layout_.z_offset(l), nc)));
    const Eigen::VectorXd u = copula_uniforms(x, w.marginal_sd());
    std::copy(x.begin(), x.end(), s.x.begin() + static_cast<std::ptrdiff_t>(layout_.z_offset(l)));
    std::copy(u.begin(), u.end(),
              s.uniforms.begin() + static_cast<std::ptrdiff_t>(layout_.z_offset(l)));
  }
  require_finite(s.x, "whitening");
  require_finite(s.uniforms, "copula");
  s.heights = heights_from_uniforms(s.uniforms, transform_);
  require_finite(s.heights.values(), "heights");
  s.density = mapper_.density(s.heights);
  require_finite(as_span(s.density), "density");
  s.lambda = linearized_counts(sensitivity_, s.density, options_.lambda_floor);
  require_finite(as_span(s.lambda), "linearized counts");
  s.log_likelihood = poisson_loglik(s.lambda, counts_, options_.include_factorial);
  require_finite(s.log_likelihood, "likelihood");
  return s;
}

double PosteriorModel::log_posterior(std::span<const double> latent) const {
  return forward(latent).log_posterior();
}

LayerModel PosteriorModel::heights(std::span<const double> latent) const {
  std::vector<double> z, rho;
  layout_.unpack(latent, z, rho);
  const int nc = layout_.n_cells;
  std::vector<double> uniforms(layout_.z_size());
  for (int l = 0; l < layout_.n_inferred; ++l) {
    const auto w = whitener(r_of(rho[l]));
    const Eigen::VectorXd x = w.apply(as_eigen(std::span<const double>(z).subspan(layout_.z_offset(l), nc)));
    const Eigen::VectorXd u = copula_uniforms(x, w.marginal_sd());
    std::copy(u.begin(), u.end(),
              uniforms.begin() + static_cast<std::ptrdiff_t>(layout_.z_offset(l)));
  }
  return heights_from_uniforms(uniforms, transform_);
}

std::vector<double> PosteriorModel::smoothness(std::span<const double> latent) const {
  if (latent.size() != layout_.dim()) throw std::invalid_argument("smoothness: wrong dimension");
  std::vector<double> r;
  for (int l = 0; l < layout_.n_inferred; ++l) r.push_back(r_of(latent[layout_.rho_offset() + l]));
  return r;
}

double PosteriorModel::log_posterior_gradient(std::span<const double> latent,
                                              std::span<double> grad) const {
  if (grad.size() != layout_.dim()) throw std::invalid_argument("gradient span has wrong size");
  std::vector<double> z, rho;
  layout_.unpack(latent, z, rho);
  require_finite(latent, "latent");
  const int nc = layout_.n_cells;
  const int nl = layout_.n_inferred;
  std::span<const double> zs(z);

  // Forward, keeping what the reverse pass needs.
  std::vector<WhiteningOperator> whiteners;
  whiteners.reserve(static_cast<std::size_t>(nl));
  std::vector<double> r(static_cast<std::size_t>(nl));
  std::vector<double> x(layout_.z_size()), uniforms(layout_.z_size());
  for (int l = 0; l < nl; ++l) {
    r[l] = r_of(rho[l]);
    whiteners.push_back(whitener(r[l]));
    const auto& w = whiteners.back();
    const Eigen::VectorXd xl = w.apply(as_eigen(zs.subspan(layout_.z_offset(l), nc)));
    const Eigen::VectorXd ul = copula_uniforms(xl, w.marginal_sd());
    std::copy(xl.begin(), xl.end(), x.begin() + static_cast<std::ptrdiff_t>(layout_.z_offset(l)));
    std::copy(ul.begin(), ul.end(),
              uniforms.begin() + static_cast<std::ptrdiff_t>(layout_.z_offset(l)));
  }
  require_finite(x, "whitening");
  const LayerModel heights = heights_from_uniforms(uniforms, transform_);
  require_finite(heights.values(), "heights");
  DensityMapper::Cache cache;
  mapper_.forward(heights, cache);
  require_finite(as_span(cache.density), "density");
  const Eigen::VectorXd raw =
      sensitivity_.lambda0 + sensitivity_.g * (cache.density - sensitivity_.r0);
  require_finite(as_span(raw), "linearized counts");
  const Eigen::VectorXd lambda = raw.cwiseMax(options_.lambda_floor);
  const double loglik = poisson_loglik(lambda, counts_, options_.include_factorial);

  auto grad_z = grad.first(layout_.z_size());
  auto grad_rho = grad.subspan(layout_.rho_offset());
  const double log_prior =
      prior_logdensity_unconstrained(z, rho, options_.smoothness, grad_z, grad_rho);
  const double total = log_prior + loglik;
  require_finite(total, "likelihood");

  // Reverse pass.
  Eigen::VectorXd g_lambda(lambda.size());
  for (Eigen::Index p = 0; p < lambda.size(); ++p) {
    g_lambda[p] = raw[p] > options_.lambda_floor
                      ? static_cast<double>(counts_.counts[static_cast<std::size_t>(p)]) / lambda[p] - 1.0
                      : 0.0;
  }
  const Eigen::VectorXd g_density = sensitivity_.g.transpose() * g_lambda;
  LayerModel g_heights(nl + 1, nc);
  mapper_.backward(heights, cache, g_density, g_heights);
  std::vector<double> g_u(layout_.z_size(), 0.0);
  heights_backward(uniforms, transform_, g_heights, g_u);

  for (int l = 0; l < nl; ++l) {
    const auto& w = whiteners[l];
    const Eigen::VectorXd& sd = w.marginal_sd();
    const std::size_t off = layout_.z_offset(l);
    Eigen::VectorXd g_x(nc);
    double g_r = 0.0;
    for (int c = 0; c < nc; ++c) {
      const double u = uniforms[off + c];
      if (u <= kUniformClamp || u >= 1.0 - kUniformClamp) {
        g_x[c] = 0.0;
        continue;
      }
      const double t = x[off + c] / sd[c];
      const double dens = g_u[off + c] * normal_pdf(t);
      g_x[c] = dens / sd[c];
      g_r -= dens * t / sd[c] * w.marginal_sd_dr()[c];
    }
    const auto zl = as_eigen(zs.subspan(off, nc));
    const Eigen::VectorXd gz = w.apply_transpose(g_x);
    for (int c = 0; c < nc; ++c) grad_z[off + c] += gz[c];
    if (r[l] < kMaxSmoothness) {
      g_r += g_x.dot(w.apply_dr(zl));
      grad_rho[l] += g_r * r[l] * (1.0 - r[l]);
    }
  }
  require_finite(std::span<const double>(grad.data(), grad.size()), "gradient");
  return total;
}

std::vector<double> PosteriorModel::sample_prior(Philox& rng) const {
  std::vector<double> v(layout_.dim());
  for (std::size_t i = 0; i < layout_.z_size(); ++i) v[i] = standard_normal(rng);
  const auto& prior = options_.smoothness;
  for (int l = 0; l < layout_.n_inferred; ++l) {
    double r;
    if (prior.alpha == 1.0 && prior.beta == 1.0) {
      r = rng.uniform();
    } else {
      std::gamma_distribution<double> ga(prior.alpha, 1.0), gb(prior.beta, 1.0);
      const double a = ga(rng);
      r = a / (a + gb(rng));
    }
    r = std::clamp(r, 1e-12, 1.0 - 1e-12);
    v[layout_.rho_offset() + l] = std::log(r) - std::log1p(-r);
  }
  return v;
}

}  // namespace mucave
