#pragma once

#include <cstddef>
#include <span>

#include <Eigen/Core>

namespace mucave {

inline std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

inline std::span<double> as_span(Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

inline Eigen::Map<const Eigen::VectorXd> as_eigen(std::span<const double> s) {
  return {s.data(), static_cast<Eigen::Index>(s.size())};
}

inline Eigen::Map<Eigen::VectorXd> as_eigen(std::span<double> s) {
  return {s.data(), static_cast<Eigen::Index>(s.size())};
}

}  // namespace mucave
