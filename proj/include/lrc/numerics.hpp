#pragma once

#include <cmath>
#include <numbers>

namespace lrc {

inline constexpr double kLn2 = std::numbers::ln2;
/// Bin probabilities are floored here before taking logs.
inline constexpr double kProbabilityFloor = 1e-9;
/// Lower bound on conditional Gaussian scales.
inline constexpr double kScaleMin = 1e-3;

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double inverse_softplus(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
inline double sigmoid_derivative(double x) { return sigmoid(x) * sigmoid(-x); }

/// Standard normal CDF.
inline double normal_cdf(double t) { return 0.5 * std::erfc(-t / std::numbers::sqrt2); }
inline double normal_pdf(double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace lrc
