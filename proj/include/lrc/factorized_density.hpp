#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

namespace lrc {

/// Learned univariate CDF per dimension, built from a stack of four
/// monotone layers (widths 1 -> 3 -> 3 -> 3 -> 1):
///
///   u_k = softplus(H_k) h_{k-1} + b_k
///   h_k = u_k + tanh(a_k) * tanh(u_k)        (k < 4)
///   c(v) = sigmoid(u_4)
///
/// softplus keeps the matrices positive and tanh keeps the gates inside
/// (-1, 1), so c is strictly increasing from 0 to 1.
class FactorizedDensity {
 public:
  static constexpr int kLayers = 4;
  static constexpr std::array<int, kLayers + 1> kWidths{1, 3, 3, 3, 1};

  FactorizedDensity() = default;
  /// Initialized so that c(v) = sigmoid(v / init_scale) exactly; the
  /// zero-mean bias offsets only exist to break unit symmetry.
  explicit FactorizedDensity(int dims, double init_scale = 10.0);

  int dims() const { return dims_; }

  /// Parameters pushed through their positivity / boundedness maps, for
  /// repeated evaluation. Stale once the raw parameters change.
  struct Prepared {
    std::array<std::vector<double>, kLayers> weights;       // softplus(matrix)
    std::array<std::vector<double>, kLayers> weight_slope;  // sigmoid(matrix)
    std::array<std::vector<double>, kLayers - 1> gates;     // tanh(factor)
  };
  Prepared prepare() const;

  /// Logit of the CDF at v for dimension d.
  double logit(int d, double v) const;
  double cdf(int d, double v) const;

  /// Probability mass of the unit bin centred at v, i.e. c(v + 1/2) - c(v - 1/2),
  /// evaluated in the numerically stable tail-flipped form.
  double bin_probability(int d, double v) const;

  /// Rate in bits of the unit bin at v (probability floored at 1e-9).
  /// Accumulates grad_scale * d(bits)/d(params) into grad when non-null and
  /// stores d(bits)/dv in dbits_dv when non-null.
  double bits(int d, double v, FactorizedDensity* grad = nullptr, double grad_scale = 1.0,
              double* dbits_dv = nullptr) const;
  double bits(const Prepared& prep, int d, double v, FactorizedDensity* grad = nullptr, double grad_scale = 1.0,
              double* dbits_dv = nullptr) const;

  /// Solves c(v) = p by bisection.
  double quantile(int d, double p) const;

  // Raw parameter storage (pre-softplus matrices, pre-tanh gates).
  std::array<std::vector<double>, kLayers> matrices;
  std::array<std::vector<double>, kLayers> biases;
  std::array<std::vector<double>, kLayers - 1> factors;

  /// Zero-filled copy with identical layout (gradient / optimizer buffers).
  FactorizedDensity zeros_like() const;

  static constexpr std::size_t matrix_size(int k) { return static_cast<std::size_t>(kWidths[k + 1]) * kWidths[k]; }

 private:
  struct Trace;
  double forward(const Prepared& prep, int d, double v, Trace* trace) const;
  double backward(const Prepared& prep, int d, const Trace& trace, double g_out, FactorizedDensity* grad,
                  double grad_scale) const;
  Prepared prepare_dim(int d) const;

  int dims_ = 0;
};

}  // namespace lrc
