// Layer-height prior: periodic nearest-neighbour graph, CAR precision
// Q = diag(A 1) - r A, whitening x = U z with U U^T = Q^{-1}, Gaussian-copula
// uniforms and the sequential stick-breaking height construction.

#pragma once

#include <array>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "mucave/geometry.hpp"

namespace mucave {

/// 4-regular torus graph on an n_rows x n_cols layer grid; node = row * n_cols + col.
class GridGraph {
 public:
  GridGraph(int n_rows, int n_cols);

  int n_rows() const { return n_rows_; }
  int n_cols() const { return n_cols_; }
  int n_nodes() const { return n_rows_ * n_cols_; }
  int n_edges() const { return 2 * n_nodes(); }
  /// Up, down, left, right (wrapping).
  const std::array<int, 4>& neighbors(int node) const { return neighbors_[node]; }

  Eigen::SparseMatrix<double> adjacency() const;
  Eigen::VectorXd degree() const;

 private:
  int n_rows_, n_cols_;
  std::vector<std::array<int, 4>> neighbors_;
};

/// Rejects sizes below 3, where wrap-around would duplicate edges.
GridGraph build_graph(int n_rows, int n_cols);

struct CarPrecision {
  double r = 0.0;
  int n_rows = 0;
  int n_cols = 0;
  Eigen::SparseMatrix<double> q;
};

/// Requires 0 <= r < 1 (positive definite range).
CarPrecision car_precision(const GridGraph& graph, double r);

/// Real orthonormal eigenbasis of the torus adjacency, shared by every r.
/// Eigenvector (a, b) is row_basis.col(a) (x) col_basis.col(b) with adjacency
/// eigenvalue 2 cos(2 pi a / n_rows) + 2 cos(2 pi b / n_cols) (in the
/// frequency order recorded by row_frequency / col_frequency).
class TorusSpectrum {
 public:
  TorusSpectrum(int n_rows, int n_cols);

  int n_rows() const { return n_rows_; }
  int n_cols() const { return n_cols_; }
  /// Adjacency eigenvalues, index a * n_cols + b.
  const Eigen::VectorXd& adjacency_eigenvalues() const { return adj_eig_; }

  /// Basis coefficients F^T x.
  void analyze(std::span<const double> x, std::span<double> coeff) const;
  /// F c.
  void synthesize(std::span<const double> coeff, std::span<double> x) const;

  const Eigen::MatrixXd& row_basis() const { return row_basis_; }
  const Eigen::MatrixXd& col_basis() const { return col_basis_; }

 private:
  int n_rows_, n_cols_;
  Eigen::MatrixXd row_basis_, col_basis_;
  Eigen::VectorXd adj_eig_;
};

enum class WhiteningMethod { cholesky, spectral };

/// x = U z with U U^T = Q^{-1}. Cholesky: U = (L^{-1})^T for Q = L L^T.
/// Spectral: U = F diag(eig(Q))^{-1/2} F^T (symmetric).
/// Also exposes the r-derivatives needed by the posterior gradient.
class WhiteningOperator {
 public:
  WhiteningOperator(const CarPrecision& precision, WhiteningMethod method,
                    std::shared_ptr<const TorusSpectrum> spectrum = nullptr);

  WhiteningMethod method() const { return method_; }
  double r() const { return r_; }
  int size() const { return n_; }

  Eigen::VectorXd apply(const Eigen::VectorXd& z) const;
  /// U^T g.
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& g) const;
  /// (dU/dr) z.
  Eigen::VectorXd apply_dr(const Eigen::VectorXd& z) const;

  /// sqrt((U U^T)_{ii}).
  const Eigen::VectorXd& marginal_sd() const { return sd_; }
  const Eigen::VectorXd& marginal_sd_dr() const { return sd_dr_; }

  Eigen::MatrixXd covariance() const;
  Eigen::MatrixXd dense_u() const;

 private:
  WhiteningMethod method_;
  double r_;
  int n_;
  Eigen::VectorXd sd_, sd_dr_;
  // cholesky
  Eigen::MatrixXd l_, l_inv_, dl_;
  // spectral
  std::shared_ptr<const TorusSpectrum> spectrum_;
  Eigen::VectorXd inv_sqrt_eig_, inv_sqrt_eig_dr_;
};

WhiteningOperator whitening(const CarPrecision& precision, WhiteningMethod method);

inline constexpr double kUniformClamp = 1e-12;

/// Standard normal c.d.f.
double normal_cdf(double x);
double normal_pdf(double x);

/// Phi(x_i / sigma_i), clamped to [kUniformClamp, 1 - kUniformClamp].
Eigen::VectorXd copula_uniforms(const Eigen::VectorXd& x, const Eigen::VectorXd& sigma);

/// Sequential-uniform heights with a thickness floor: with span
/// s = top - n_layers * t_min, h_0 = u_0 s, h_l = (1 - u_l) h_{l-1} + u_l s and
/// H_l = h_l + (l + 1) t_min; the top layer is the known surface.
/// With t_min = 0 this is the plain stick-breaking construction.
struct HeightTransform {
  std::vector<double> top;
  int n_inferred = 2;
  double t_min = 0.01;

  int n_cells() const { return static_cast<int>(top.size()); }
  void validate() const;
};

/// uniforms laid out [inferred layer][cell].
LayerModel heights_from_uniforms(std::span<const double> uniforms,
                                 const HeightTransform& transform);

/// Reverse pass: accumulates dL/du into grad_uniforms from dL/dH of the
/// inferred layers.
void heights_backward(std::span<const double> uniforms, const HeightTransform& transform,
                      const LayerModel& grad_heights, std::span<double> grad_uniforms);

/// Prior on each r_l: Beta(alpha, beta); (1, 1) is uniform.
struct SmoothnessPrior {
  double alpha = 1.0;
  double beta = 1.0;
};

double logistic(double x);

/// Standard-normal log density of z plus log p(r) + log|dr/d rho| with
/// r = logistic(rho_raw). Gradients are written when the spans are non-empty.
double prior_logdensity_unconstrained(std::span<const double> z, std::span<const double> rho_raw,
                                      const SmoothnessPrior& prior = {},
                                      std::span<double> grad_z = {},
                                      std::span<double> grad_rho = {});

}  // namespace mucave
