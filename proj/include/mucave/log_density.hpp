#pragma once

#include <cstddef>
#include <span>

namespace mucave {

/// Target density for the gradient-based samplers. Implementations may keep
/// scratch state, so each chain owns its own instance.
class LogDensity {
 public:
  virtual ~LogDensity() = default;
  virtual std::size_t dim() const = 0;
  /// Unnormalised log density at x; writes the gradient into grad.
  virtual double evaluate(std::span<const double> x, std::span<double> grad) = 0;
};

}  // namespace mucave
