#include "mucave/diagnostics.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mucave {

namespace {

double unbiased_variance(const Eigen::VectorXd& v) {
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
}

RhatReport decompose(const std::vector<Eigen::MatrixXd>& groups, const char* what) {
  if (groups.size() < 2) {
    throw std::invalid_argument(std::string(what) + ": need at least 2 groups");
  }
  const Eigen::Index dim = groups.front().cols();
  for (const auto& g : groups) {
    if (g.cols() != dim) throw std::invalid_argument(std::string(what) + ": ragged coordinates");
    if (g.rows() < 2) {
      throw std::invalid_argument(std::string(what) +
                                  ": each group needs at least 2 values per coordinate");
    }
  }
  const auto k = static_cast<Eigen::Index>(groups.size());
  RhatReport report;
  report.rhat.resize(static_cast<std::size_t>(dim));
  Eigen::MatrixXd means(k, dim);
  for (Eigen::Index g = 0; g < k; ++g) means.row(g) = groups[g].colwise().mean();
  for (Eigen::Index g = 0; g < k; ++g) {
    report.group_means.emplace_back(means.row(g).begin(), means.row(g).end());
  }
  for (Eigen::Index j = 0; j < dim; ++j) {
    const double b = unbiased_variance(means.col(j));
    double w = 0.0;
    for (Eigen::Index g = 0; g < k; ++g) w += unbiased_variance(groups[g].col(j));
    w /= static_cast<double>(k);
    double r;
    if (w > 0.0) {
      r = std::sqrt(1.0 + b / w);
    } else if (b > 0.0) {
      r = std::numeric_limits<double>::infinity();
      report.stuck.push_back(static_cast<std::size_t>(j));
    } else {
      r = 1.0;
    }
    report.rhat[j] = r;
    if (j == 0 || r > report.worst) {
      report.worst = r;
      report.worst_index = static_cast<std::size_t>(j);
    }
  }
  return report;
}

}  // namespace

std::vector<std::string> RhatReport::warnings() const {
  std::vector<std::string> out;
  if (!stuck.empty()) {
    std::ostringstream msg;
    msg << stuck.size() << " coordinate(s) have zero within-group variance but distinct "
        << "group means (stuck chains?), first at index " << stuck.front();
    out.push_back(msg.str());
  }
  return out;
}

RhatReport nested_rhat(const std::vector<Eigen::MatrixXd>& super_chains) {
  return decompose(super_chains, "nested_rhat");
}

RhatReport nested_rhat(const DrawSet& draws) {
  std::vector<Eigen::MatrixXd> groups;
  for (int k = 0; k < draws.n_super; ++k) groups.push_back(draws.super_chain_matrix(k));
  return nested_rhat(groups);
}

RhatReport classic_rhat(const std::vector<Eigen::MatrixXd>& chains) {
  if (chains.size() < 2) throw std::invalid_argument("classic_rhat: need at least 2 chains");
  const Eigen::Index dim = chains.front().cols();
  for (const auto& c : chains) {
    if (c.cols() != dim || c.rows() < 2) {
      throw std::invalid_argument("classic_rhat: chains need >= 2 draws and equal dimension");
    }
  }
  // Scalar two-pass loops, kept independent of the nested path so the two
  // can be checked against each other.
  const double m = static_cast<double>(chains.size());
  RhatReport report;
  report.group_means.assign(chains.size(), std::vector<double>(static_cast<std::size_t>(dim)));
  for (Eigen::Index j = 0; j < dim; ++j) {
    double grand = 0.0;
    double w = 0.0;
    for (std::size_t c = 0; c < chains.size(); ++c) {
      const auto& x = chains[c];
      double mean = 0.0;
      for (Eigen::Index i = 0; i < x.rows(); ++i) mean += x(i, j);
      mean /= static_cast<double>(x.rows());
      double ss = 0.0;
      for (Eigen::Index i = 0; i < x.rows(); ++i) ss += (x(i, j) - mean) * (x(i, j) - mean);
      w += ss / static_cast<double>(x.rows() - 1);
      report.group_means[c][j] = mean;
      grand += mean;
    }
    grand /= m;
    w /= m;
    double b = 0.0;
    for (std::size_t c = 0; c < chains.size(); ++c) {
      const double d = report.group_means[c][j] - grand;
      b += d * d;
    }
    b /= m - 1.0;
    double r = 1.0;
    if (w > 0.0) {
      r = std::sqrt(1.0 + b / w);
    } else if (b > 0.0) {
      r = std::numeric_limits<double>::infinity();
      report.stuck.push_back(static_cast<std::size_t>(j));
    }
    report.rhat.push_back(r);
    if (j == 0 || r > report.worst) {
      report.worst = r;
      report.worst_index = static_cast<std::size_t>(j);
    }
  }
  return report;
}

nlohmann::json rhat_to_json(const RhatReport& r) {
  auto finite_or_string = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return "inf";
  };
  nlohmann::json values = nlohmann::json::array();
  for (double v : r.rhat) values.push_back(finite_or_string(v));
  return {{"worst", finite_or_string(r.worst)},
          {"worst_index", r.worst_index},
          {"rhat", std::move(values)},
          {"group_means", r.group_means},
          {"warnings", r.warnings()}};
}

}  // namespace mucave
