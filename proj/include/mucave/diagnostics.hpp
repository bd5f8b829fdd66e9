// Between/within variance diagnostics for grouped draws.

#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "mucave/runner.hpp"

namespace mucave {

struct RhatReport {
  std::vector<double> rhat;  // per coordinate
  double worst = 1.0;
  std::size_t worst_index = 0;
  /// Group means, [group][coordinate].
  std::vector<std::vector<double>> group_means;
  /// Coordinates where every group is internally constant but groups differ.
  std::vector<std::size_t> stuck;

  std::vector<std::string> warnings() const;
};

/// super_chains[k]: rows are the draws of every chain in super-chain k.
/// B = unbiased variance of the K super-chain means, W = mean of the unbiased
/// variances pooled within each super-chain, nested R-hat = sqrt(1 + B / W).
/// W = B = 0 gives 1; W = 0 < B gives +inf.
RhatReport nested_rhat(const std::vector<Eigen::MatrixXd>& super_chains);
RhatReport nested_rhat(const DrawSet& draws);

/// Same decomposition over individual chains (each needs >= 2 draws).
RhatReport classic_rhat(const std::vector<Eigen::MatrixXd>& chains);

nlohmann::json rhat_to_json(const RhatReport& report);

}  // namespace mucave
