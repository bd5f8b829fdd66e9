#include "mucave/flux.hpp"

#include <algorithm>
#include <cmath>

#include "mucave/geometry.hpp"

namespace mucave {

FluxModel FluxModel::exponential(double i0, double attenuation_length,
                                 double efficiency_exponent, double exposure) {
  if (!(i0 > 0.0) || !(attenuation_length > 0.0) || !(exposure > 0.0) ||
      efficiency_exponent < 0.0) {
    throw ConfigError("flux: i0, attenuation length and exposure must be positive");
  }
  FluxModel f;
  f.kind_ = Kind::exponential;
  f.i0_ = i0;
  f.attenuation_length_ = attenuation_length;
  f.efficiency_exponent_ = efficiency_exponent;
  f.exposure_ = exposure;
  return f;
}

FluxModel FluxModel::tabulated(std::vector<double> opacity, std::vector<double> intensity,
                               double efficiency_exponent, double exposure) {
  if (opacity.size() < 2 || opacity.size() != intensity.size()) {
    throw ConfigError("flux table needs at least two (opacity, intensity) pairs");
  }
  if (!(exposure > 0.0) || efficiency_exponent < 0.0) {
    throw ConfigError("flux: exposure must be positive");
  }
  FluxModel f;
  f.kind_ = Kind::tabulated;
  for (std::size_t i = 0; i < opacity.size(); ++i) {
    if (!(intensity[i] > 0.0)) throw ConfigError("flux table intensities must be positive");
    if (i > 0 && !(opacity[i] > opacity[i - 1] && intensity[i] < intensity[i - 1])) {
      throw ConfigError("flux table must be strictly decreasing in increasing opacity");
    }
  }
  for (std::size_t i = 0; i + 1 < opacity.size(); ++i) {
    f.log_slope_.push_back((std::log(intensity[i + 1]) - std::log(intensity[i])) /
                           (opacity[i + 1] - opacity[i]));
  }
  f.table_opacity_ = std::move(opacity);
  f.table_intensity_ = std::move(intensity);
  f.i0_ = f.table_intensity_.front();
  f.efficiency_exponent_ = efficiency_exponent;
  f.exposure_ = exposure;
  return f;
}

FluxModel FluxModel::custom(std::function<double(double)> intensity,
                            std::function<double(double)> derivative,
                            double efficiency_exponent, double exposure) {
  if (!intensity) throw ConfigError("flux: custom model needs an intensity function");
  FluxModel f;
  f.kind_ = Kind::custom;
  f.custom_intensity_ = std::move(intensity);
  f.custom_derivative_ = std::move(derivative);
  f.efficiency_exponent_ = efficiency_exponent;
  f.exposure_ = exposure;
  return f;
}

std::size_t FluxModel::segment(double opacity) const {
  const auto it = std::upper_bound(table_opacity_.begin(), table_opacity_.end(), opacity);
  const auto idx = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - table_opacity_.begin() - 1, 0));
  return std::min(idx, log_slope_.size() - 1);
}

double FluxModel::intensity(double opacity) const {
  switch (kind_) {
    case Kind::exponential:
      return i0_ * std::exp(-opacity / attenuation_length_);
    case Kind::tabulated: {
      const auto s = segment(opacity);
      return table_intensity_[s] * std::exp(log_slope_[s] * (opacity - table_opacity_[s]));
    }
    case Kind::custom:
      return custom_intensity_(opacity);
  }
  return 0.0;
}

double FluxModel::intensity_derivative(double opacity) const {
  switch (kind_) {
    case Kind::exponential:
      return -intensity(opacity) / attenuation_length_;
    case Kind::tabulated:
      return intensity(opacity) * log_slope_[segment(opacity)];
    case Kind::custom:
      if (!custom_derivative_) {
        throw UnsupportedModel("flux model has no intensity derivative");
      }
      return custom_derivative_(opacity);
  }
  return 0.0;
}

bool FluxModel::has_derivative() const {
  return kind_ != Kind::custom || static_cast<bool>(custom_derivative_);
}

double FluxModel::efficiency(double cos_zenith) const {
  return std::pow(std::clamp(cos_zenith, 0.0, 1.0), efficiency_exponent_);
}

}  // namespace mucave
