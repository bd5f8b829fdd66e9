// Unnormalised log posterior over the unconstrained latent vector and its
// gradient, through the chain
//   (z, rho_raw) -> x = U(r) z -> u = Phi(x / sigma) -> H -> R_hat -> lambda_hat.

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "mucave/car_prior.hpp"
#include "mucave/density.hpp"
#include "mucave/geometry.hpp"
#include "mucave/log_density.hpp"
#include "mucave/rng.hpp"
#include "mucave/sensitivity.hpp"

namespace mucave {

/// [z of layer 0 | z of layer 1 | ... | rho_raw per layer].
struct LatentLayout {
  int n_inferred = 0;
  int n_cells = 0;

  std::size_t dim() const { return static_cast<std::size_t>(n_inferred) * n_cells + n_inferred; }
  std::size_t z_size() const { return static_cast<std::size_t>(n_inferred) * n_cells; }
  std::size_t z_offset(int layer) const { return static_cast<std::size_t>(layer) * n_cells; }
  std::size_t rho_offset() const { return z_size(); }

  std::vector<double> pack(std::span<const double> z, std::span<const double> rho_raw) const;
  void unpack(std::span<const double> latent, std::vector<double>& z,
              std::vector<double>& rho_raw) const;
};

struct CountData {
  std::vector<std::int64_t> counts;

  std::size_t size() const { return counts.size(); }
  void validate() const;
};

/// sum_p C_p log lambda_p - lambda_p [- log C_p!].
double poisson_loglik(const Eigen::VectorXd& lambda, const CountData& data,
                      bool include_factorial = false);

struct PosteriorOptions {
  double gamma = 1.0;
  HeightReference reference = HeightReference::center;
  WhiteningMethod whitening = WhiteningMethod::spectral;
  SmoothnessPrior smoothness;
  double lambda_floor = kLambdaFloor;
  bool include_factorial = false;
};

/// Upper clamp on r = logistic(rho_raw) keeping Q positive definite.
inline constexpr double kMaxSmoothness = 1.0 - 1e-12;

class PosteriorModel {
 public:
  PosteriorModel(const Scenario& scenario, SensitivityMatrix sensitivity, CountData counts,
                 PosteriorOptions options = {});

  const LatentLayout& layout() const { return layout_; }
  std::size_t dim() const { return layout_.dim(); }
  const PosteriorOptions& options() const { return options_; }
  const DensityMapper& mapper() const { return mapper_; }
  const HeightTransform& height_transform() const { return transform_; }
  const SensitivityMatrix& sensitivity() const { return sensitivity_; }
  const CountData& counts() const { return counts_; }
  const GridGraph& graph() const { return graph_; }

  /// Every intermediate of one forward evaluation.
  struct Stages {
    double log_prior = 0.0;
    double log_likelihood = 0.0;
    std::vector<double> smoothness;  // r per inferred layer
    std::vector<double> x;           // CAR field, [layer][cell]
    std::vector<double> uniforms;    // copula uniforms, [layer][cell]
    LayerModel heights;
    DensityArray density;
    Eigen::VectorXd lambda;          // floored linearised counts

    double log_posterior() const { return log_prior + log_likelihood; }
  };

  Stages forward(std::span<const double> latent) const;
  double log_posterior(std::span<const double> latent) const;
  /// Log posterior with its exact gradient (reverse pass through every stage).
  double log_posterior_gradient(std::span<const double> latent, std::span<double> grad) const;

  LayerModel heights(std::span<const double> latent) const;
  std::vector<double> smoothness(std::span<const double> latent) const;

  /// z ~ N(0, I) and r from its prior, mapped to rho_raw.
  std::vector<double> sample_prior(Philox& rng) const;

 private:
  WhiteningOperator whitener(double r) const;
  double r_of(double rho_raw) const;

  LatentLayout layout_;
  PosteriorOptions options_;
  GridGraph graph_;
  std::shared_ptr<const TorusSpectrum> spectrum_;
  HeightTransform transform_;
  DensityMapper mapper_;
  SensitivityMatrix sensitivity_;
  CountData counts_;
};

/// LogDensity adapter; one per chain.
class PosteriorDensity final : public LogDensity {
 public:
  explicit PosteriorDensity(const PosteriorModel& model) : model_{&model} {}
  std::size_t dim() const override { return model_->dim(); }
  double evaluate(std::span<const double> x, std::span<double> grad) override {
    return model_->log_posterior_gradient(x, grad);
  }

 private:
  const PosteriorModel* model_;
};

}  // namespace mucave
