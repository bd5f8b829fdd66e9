#include "mucave/car_prior.hpp"

#include "mucave/eigen_span.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace mucave {

GridGraph::GridGraph(int n_rows, int n_cols) : n_rows_{n_rows}, n_cols_{n_cols} {
  if (n_rows < 3 || n_cols < 3) {
    throw std::invalid_argument("periodic grid graph needs at least 3 rows and 3 columns");
  }
  neighbors_.resize(static_cast<std::size_t>(n_nodes()));
  for (int a = 0; a < n_rows; ++a) {
    for (int b = 0; b < n_cols; ++b) {
      neighbors_[a * n_cols + b] = {((a + n_rows - 1) % n_rows) * n_cols + b,
                                    ((a + 1) % n_rows) * n_cols + b,
                                    a * n_cols + (b + n_cols - 1) % n_cols,
                                    a * n_cols + (b + 1) % n_cols};
    }
  }
}

Eigen::SparseMatrix<double> GridGraph::adjacency() const {
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < n_nodes(); ++i) {
    for (int j : neighbors_[i]) t.emplace_back(i, j, 1.0);
  }
  Eigen::SparseMatrix<double> a(n_nodes(), n_nodes());
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

Eigen::VectorXd GridGraph::degree() const {
  return adjacency() * Eigen::VectorXd::Ones(n_nodes());
}

GridGraph build_graph(int n_rows, int n_cols) { return GridGraph(n_rows, n_cols); }

CarPrecision car_precision(const GridGraph& graph, double r) {
  if (!(r >= 0.0 && r < 1.0)) {
    std::ostringstream msg;
    msg << "CAR dependence r = " << r << " outside [0, 1)";
    throw std::domain_error(msg.str());
  }
  const Eigen::SparseMatrix<double> a = graph.adjacency();
  Eigen::SparseMatrix<double> d(graph.n_nodes(), graph.n_nodes());
  const Eigen::VectorXd deg = graph.degree();
  std::vector<Eigen::Triplet<double>> diag;
  for (int i = 0; i < graph.n_nodes(); ++i) diag.emplace_back(i, i, deg[i]);
  d.setFromTriplets(diag.begin(), diag.end());
  CarPrecision p;
  p.r = r;
  p.n_rows = graph.n_rows();
  p.n_cols = graph.n_cols();
  p.q = d - r * a;
  p.q.makeCompressed();
  return p;
}

namespace {

// Columns: real orthonormal eigenvectors of the n-cycle adjacency; freq[k] is
// the integer frequency whose adjacency eigenvalue is 2 cos(2 pi freq / n).
Eigen::MatrixXd cycle_basis(int n, std::vector<int>& freq) {
  Eigen::MatrixXd f(n, n);
  freq.clear();
  int col = 0;
  for (int j = 0; j < n; ++j) f(j, col) = 1.0 / std::sqrt(n);
  freq.push_back(0);
  ++col;
  for (int k = 1; 2 * k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      const double angle = 2.0 * std::numbers::pi * k * j / n;
      f(j, col) = std::sqrt(2.0 / n) * std::cos(angle);
      f(j, col + 1) = std::sqrt(2.0 / n) * std::sin(angle);
    }
    freq.push_back(k);
    freq.push_back(k);
    col += 2;
  }
  if (n % 2 == 0) {
    for (int j = 0; j < n; ++j) f(j, col) = (j % 2 == 0 ? 1.0 : -1.0) / std::sqrt(n);
    freq.push_back(n / 2);
  }
  return f;
}

}  // namespace

TorusSpectrum::TorusSpectrum(int n_rows, int n_cols) : n_rows_{n_rows}, n_cols_{n_cols} {
  std::vector<int> fr, fc;
  row_basis_ = cycle_basis(n_rows, fr);
  col_basis_ = cycle_basis(n_cols, fc);
  adj_eig_.resize(n_rows * n_cols);
  for (int a = 0; a < n_rows; ++a) {
    for (int b = 0; b < n_cols; ++b) {
      adj_eig_[a * n_cols + b] = 2.0 * std::cos(2.0 * std::numbers::pi * fr[a] / n_rows) +
                                 2.0 * std::cos(2.0 * std::numbers::pi * fc[b] / n_cols);
    }
  }
}

void TorusSpectrum::analyze(std::span<const double> x, std::span<double> coeff) const {
  // Node index is row-major, so a RowMajor map gives the n_rows x n_cols field.
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> xm(x.data(), n_rows_, n_cols_);
  Eigen::Map<RowMat> cm(coeff.data(), n_rows_, n_cols_);
  cm.noalias() = row_basis_.transpose() * xm * col_basis_;
}

void TorusSpectrum::synthesize(std::span<const double> coeff, std::span<double> x) const {
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> cm(coeff.data(), n_rows_, n_cols_);
  Eigen::Map<RowMat> xm(x.data(), n_rows_, n_cols_);
  xm.noalias() = row_basis_ * cm * col_basis_.transpose();
}

WhiteningOperator::WhiteningOperator(const CarPrecision& precision, WhiteningMethod method,
                                     std::shared_ptr<const TorusSpectrum> spectrum)
    : method_{method}, r_{precision.r}, n_{static_cast<int>(precision.q.rows())} {
  if (method == WhiteningMethod::cholesky) {
    const Eigen::MatrixXd q = Eigen::MatrixXd(precision.q);
    Eigen::LLT<Eigen::MatrixXd> llt(q);
    if (llt.info() != Eigen::Success) throw NumericError("whitening: Cholesky factorization failed");
    l_ = llt.matrixL();
    l_inv_ = l_.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n_, n_));
    const Eigen::MatrixXd cov = l_inv_.transpose() * l_inv_;
    sd_ = cov.diagonal().cwiseSqrt();
    const Eigen::MatrixXd dq = -Eigen::MatrixXd(GridGraph(precision.n_rows, precision.n_cols).adjacency());
    Eigen::MatrixXd m = l_inv_ * dq * l_inv_.transpose();
    Eigen::MatrixXd phi = m.triangularView<Eigen::StrictlyLower>();
    phi.diagonal() = 0.5 * m.diagonal();
    dl_ = l_ * phi;
    const Eigen::MatrixXd dcov = -cov * dq * cov;
    sd_dr_ = dcov.diagonal().cwiseQuotient(2.0 * sd_);
    return;
  }
  spectrum_ = spectrum ? std::move(spectrum)
                       : std::make_shared<const TorusSpectrum>(precision.n_rows, precision.n_cols);
  if (spectrum_->n_rows() * spectrum_->n_cols() != n_) {
    throw std::invalid_argument("whitening: spectrum does not match the precision size");
  }
  const Eigen::VectorXd& c = spectrum_->adjacency_eigenvalues();
  const Eigen::VectorXd eig = (4.0 - r_ * c.array()).matrix();
  inv_sqrt_eig_ = eig.array().rsqrt();
  inv_sqrt_eig_dr_ = 0.5 * c.array() * eig.array().pow(-1.5);
  const double var = eig.cwiseInverse().mean();
  const double var_dr = (c.array() / eig.array().square()).mean();
  sd_ = Eigen::VectorXd::Constant(n_, std::sqrt(var));
  sd_dr_ = Eigen::VectorXd::Constant(n_, var_dr / (2.0 * std::sqrt(var)));
}

WhiteningOperator whitening(const CarPrecision& precision, WhiteningMethod method) {
  return WhiteningOperator(precision, method);
}

Eigen::VectorXd WhiteningOperator::apply(const Eigen::VectorXd& z) const {
  if (method_ == WhiteningMethod::cholesky) {
    return l_.transpose().triangularView<Eigen::Upper>().solve(z);
  }
  Eigen::VectorXd coeff(n_), x(n_);
  spectrum_->analyze(as_span(z), as_span(coeff));
  coeff.array() *= inv_sqrt_eig_.array();
  spectrum_->synthesize(as_span(coeff), as_span(x));
  return x;
}

Eigen::VectorXd WhiteningOperator::apply_transpose(const Eigen::VectorXd& g) const {
  if (method_ == WhiteningMethod::cholesky) {
    return l_.triangularView<Eigen::Lower>().solve(g);
  }
  return apply(g);
}

Eigen::VectorXd WhiteningOperator::apply_dr(const Eigen::VectorXd& z) const {
  if (method_ == WhiteningMethod::cholesky) {
    // L^T x = z  =>  dx = -L^{-T} dL^T x
    const Eigen::VectorXd x = apply(z);
    return -(l_inv_.transpose() * (dl_.transpose() * x));
  }
  Eigen::VectorXd coeff(n_), x(n_);
  spectrum_->analyze(as_span(z), as_span(coeff));
  coeff.array() *= inv_sqrt_eig_dr_.array();
  spectrum_->synthesize(as_span(coeff), as_span(x));
  return x;
}

Eigen::MatrixXd WhiteningOperator::dense_u() const {
  Eigen::MatrixXd u(n_, n_);
  for (int j = 0; j < n_; ++j) u.col(j) = apply(Eigen::VectorXd::Unit(n_, j));
  return u;
}

Eigen::MatrixXd WhiteningOperator::covariance() const {
  const Eigen::MatrixXd u = dense_u();
  return u * u.transpose();
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

Eigen::VectorXd copula_uniforms(const Eigen::VectorXd& x, const Eigen::VectorXd& sigma) {
  if (x.size() != sigma.size()) throw std::invalid_argument("copula: size mismatch");
  Eigen::VectorXd u(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(sigma[i] > 0.0)) throw std::invalid_argument("copula: sigma must be positive");
    u[i] = std::clamp(normal_cdf(x[i] / sigma[i]), kUniformClamp, 1.0 - kUniformClamp);
  }
  return u;
}

void HeightTransform::validate() const {
  if (n_inferred < 1) throw ConfigError("height transform: need at least one inferred layer");
  if (t_min < 0.0) throw ConfigError("height transform: t_min must be non-negative");
  for (double t : top) {
    if (!(t - (n_inferred + 1) * t_min > 0.0)) {
      throw ConfigError("height transform: top surface too low for the thickness floor");
    }
  }
}

LayerModel heights_from_uniforms(std::span<const double> uniforms,
                                 const HeightTransform& transform) {
  const int nc = transform.n_cells();
  const int nl = transform.n_inferred;
  if (uniforms.size() != static_cast<std::size_t>(nl) * nc) {
    throw std::invalid_argument("heights_from_uniforms: wrong number of uniforms");
  }
  LayerModel h(nl + 1, nc);
  for (int c = 0; c < nc; ++c) {
    const double span = transform.top[c] - (nl + 1) * transform.t_min;
    double below = 0.0;
    for (int l = 0; l < nl; ++l) {
      const double u = uniforms[static_cast<std::size_t>(l) * nc + c];
      below = (1.0 - u) * below + u * span;
      h(l, c) = below + (l + 1) * transform.t_min;
    }
    h(nl, c) = transform.top[c];
  }
  return h;
}

void heights_backward(std::span<const double> uniforms, const HeightTransform& transform,
                      const LayerModel& grad_heights, std::span<double> grad_uniforms) {
  const int nc = transform.n_cells();
  const int nl = transform.n_inferred;
  std::vector<double> h(static_cast<std::size_t>(nl));
  for (int c = 0; c < nc; ++c) {
    const double span = transform.top[c] - (nl + 1) * transform.t_min;
    double below = 0.0;
    for (int l = 0; l < nl; ++l) {
      const double u = uniforms[static_cast<std::size_t>(l) * nc + c];
      below = (1.0 - u) * below + u * span;
      h[l] = below;
    }
    double g = 0.0;
    for (int l = nl - 1; l >= 0; --l) {
      g += grad_heights(l, c);
      const double u = uniforms[static_cast<std::size_t>(l) * nc + c];
      const double prev = l > 0 ? h[l - 1] : 0.0;
      grad_uniforms[static_cast<std::size_t>(l) * nc + c] += g * (span - prev);
      g *= (1.0 - u);
    }
  }
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

double prior_logdensity_unconstrained(std::span<const double> z, std::span<const double> rho_raw,
                                      const SmoothnessPrior& prior, std::span<double> grad_z,
                                      std::span<double> grad_rho) {
  double lp = -0.5 * static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi);
  for (std::size_t i = 0; i < z.size(); ++i) {
    lp -= 0.5 * z[i] * z[i];
    if (!grad_z.empty()) grad_z[i] = -z[i];
  }
  const double log_beta = std::lgamma(prior.alpha) + std::lgamma(prior.beta) -
                          std::lgamma(prior.alpha + prior.beta);
  for (std::size_t l = 0; l < rho_raw.size(); ++l) {
    const double x = rho_raw[l];
    // log r = -softplus(-x), log(1 - r) = -softplus(x); the Jacobian adds one of each.
    lp += -prior.alpha * softplus(-x) - prior.beta * softplus(x) - log_beta;
    if (!grad_rho.empty()) {
      const double r = logistic(x);
      grad_rho[l] = prior.alpha * (1.0 - r) - prior.beta * r;
    }
  }
  return lp;
}

}  // namespace mucave
