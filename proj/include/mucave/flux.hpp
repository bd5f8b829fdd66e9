// Muon intensity as a function of opacity, detector efficiency and exposure.

#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

namespace mucave {

struct UnsupportedModel : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class FluxModel {
 public:
  enum class Kind { exponential, tabulated, custom };

  /// I(O) = i0 * exp(-O / attenuation_length); efficiency cos^m(zenith).
  static FluxModel exponential(double i0, double attenuation_length,
                               double efficiency_exponent = 2.0, double exposure = 1.0);

  /// Log-linear interpolation of a strictly decreasing positive table,
  /// extrapolated with the end-segment slopes.
  static FluxModel tabulated(std::vector<double> opacity, std::vector<double> intensity,
                             double efficiency_exponent = 2.0, double exposure = 1.0);

  /// Arbitrary intensity; sensitivities need `derivative`.
  static FluxModel custom(std::function<double(double)> intensity,
                          std::function<double(double)> derivative,
                          double efficiency_exponent = 2.0, double exposure = 1.0);

  Kind kind() const { return kind_; }
  double intensity(double opacity) const;
  double intensity_derivative(double opacity) const;
  bool has_derivative() const;
  double efficiency(double cos_zenith) const;
  double exposure() const { return exposure_; }

  double i0() const { return i0_; }
  double attenuation_length() const { return attenuation_length_; }
  double efficiency_exponent() const { return efficiency_exponent_; }
  const std::vector<double>& table_opacity() const { return table_opacity_; }
  const std::vector<double>& table_intensity() const { return table_intensity_; }

 private:
  FluxModel() = default;
  std::size_t segment(double opacity) const;

  Kind kind_ = Kind::exponential;
  double i0_ = 1.0;
  double attenuation_length_ = 1.0;
  double efficiency_exponent_ = 2.0;
  double exposure_ = 1.0;
  std::vector<double> table_opacity_;
  std::vector<double> table_intensity_;
  std::vector<double> log_slope_;
  std::function<double(double)> custom_intensity_;
  std::function<double(double)> custom_derivative_;
};

}  // namespace mucave
