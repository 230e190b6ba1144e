#include "lrc/factorized_density.hpp"

#include <algorithm>
#include <cmath>

#include "lrc/error.hpp"
#include "lrc/numerics.hpp"

namespace lrc {

struct FactorizedDensity::Trace {
  // Layer inputs h_{k-1} (h_0 = v) and tanh of the pre-activations u_k.
  std::array<std::array<double, 3>, kLayers> in{};
  std::array<std::array<double, 3>, kLayers> tanh_u{};
};

FactorizedDensity::FactorizedDensity(int dims, double init_scale) : dims_(dims) {
  require(dims > 0, ErrorCode::kInvalidArgument, "density needs at least one dimension");
  require(init_scale > 0.0, ErrorCode::kInvalidArgument, "init scale must be positive");
  for (int k = 0; k < kLayers; ++k) {
    const int in = kWidths[k], out = kWidths[k + 1];
    const double target = k == 0 ? 1.0 / init_scale : 1.0 / in;
    matrices[k].assign(static_cast<std::size_t>(dims) * in * out, inverse_softplus(target));
    biases[k].assign(static_cast<std::size_t>(dims) * out, 0.0);
    if (out == 3)
      for (int d = 0; d < dims; ++d) {
        biases[k][d * 3 + 0] = -0.5;
        biases[k][d * 3 + 2] = 0.5;
      }
    if (k < kLayers - 1) factors[k].assign(static_cast<std::size_t>(dims) * out, 0.0);
  }
}

FactorizedDensity FactorizedDensity::zeros_like() const {
  FactorizedDensity z = *this;
  for (auto& m : z.matrices) std::fill(m.begin(), m.end(), 0.0);
  for (auto& b : z.biases) std::fill(b.begin(), b.end(), 0.0);
  for (auto& f : z.factors) std::fill(f.begin(), f.end(), 0.0);
  return z;
}

FactorizedDensity::Prepared FactorizedDensity::prepare() const {
  Prepared p;
  for (int k = 0; k < kLayers; ++k) {
    p.weights[k].resize(matrices[k].size());
    p.weight_slope[k].resize(matrices[k].size());
    for (std::size_t i = 0; i < matrices[k].size(); ++i) {
      p.weights[k][i] = softplus(matrices[k][i]);
      p.weight_slope[k][i] = sigmoid(matrices[k][i]);
    }
    if (k < kLayers - 1) {
      p.gates[k].resize(factors[k].size());
      for (std::size_t i = 0; i < factors[k].size(); ++i) p.gates[k][i] = std::tanh(factors[k][i]);
    }
  }
  return p;
}

// Prepared parameters for dimension d only, laid out as if d were 0.
FactorizedDensity::Prepared FactorizedDensity::prepare_dim(int d) const {
  Prepared p;
  for (int k = 0; k < kLayers; ++k) {
    const std::size_t n = matrix_size(k), off = static_cast<std::size_t>(d) * n;
    p.weights[k].resize(n);
    p.weight_slope[k].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      p.weights[k][i] = softplus(matrices[k][off + i]);
      p.weight_slope[k][i] = sigmoid(matrices[k][off + i]);
    }
    if (k < kLayers - 1) {
      const int w = kWidths[k + 1];
      p.gates[k].resize(w);
      for (int i = 0; i < w; ++i) p.gates[k][i] = std::tanh(factors[k][static_cast<std::size_t>(d) * w + i]);
    }
  }
  return p;
}

namespace {
// Offset of dimension d inside a prepared array that may hold all dims or
// just one.
inline std::size_t prep_offset(const std::vector<double>& arr, std::size_t per_dim, int d) {
  return arr.size() == per_dim ? 0 : static_cast<std::size_t>(d) * per_dim;
}
}  // namespace

double FactorizedDensity::forward(const Prepared& prep, int d, double v, Trace* trace) const {
  std::array<double, 3> h{v, 0.0, 0.0};
  for (int k = 0; k < kLayers; ++k) {
    const int in = kWidths[k], out = kWidths[k + 1];
    const double* m = prep.weights[k].data() + prep_offset(prep.weights[k], matrix_size(k), d);
    const double* b = biases[k].data() + static_cast<std::size_t>(d) * out;
    std::array<double, 3> u{};
    for (int r = 0; r < out; ++r) {
      double acc = b[r];
      for (int c = 0; c < in; ++c) acc += m[r * in + c] * h[c];
      u[r] = acc;
    }
    if (trace) trace->in[k] = h;
    if (k == kLayers - 1) return u[0];
    const double* a = prep.gates[k].data() + prep_offset(prep.gates[k], out, d);
    for (int r = 0; r < out; ++r) {
      const double tu = std::tanh(u[r]);
      if (trace) trace->tanh_u[k][r] = tu;
      h[r] = u[r] + a[r] * tu;
    }
  }
  return 0.0;  // unreachable
}

double FactorizedDensity::backward(const Prepared& prep, int d, const Trace& t, double g_out,
                                   FactorizedDensity* grad, double grad_scale) const {
  std::array<double, 3> g_u{g_out, 0.0, 0.0};
  for (int k = kLayers - 1; k >= 0; --k) {
    const int in = kWidths[k], out = kWidths[k + 1];
    const std::size_t poff = prep_offset(prep.weights[k], matrix_size(k), d);
    const double* m = prep.weights[k].data() + poff;
    if (grad) {
      const double* slope = prep.weight_slope[k].data() + poff;
      double* gm = grad->matrices[k].data() + static_cast<std::size_t>(d) * matrix_size(k);
      double* gb = grad->biases[k].data() + static_cast<std::size_t>(d) * out;
      for (int r = 0; r < out; ++r) {
        gb[r] += grad_scale * g_u[r];
        for (int c = 0; c < in; ++c) gm[r * in + c] += grad_scale * g_u[r] * t.in[k][c] * slope[r * in + c];
      }
    }
    std::array<double, 3> g_h{};
    for (int c = 0; c < in; ++c) {
      double acc = 0.0;
      for (int r = 0; r < out; ++r) acc += m[r * in + c] * g_u[r];
      g_h[c] = acc;
    }
    if (k == 0) return g_h[0];
    // Through the gate of layer k-1: h = u + tanh(a) tanh(u).
    const int prev = kWidths[k];
    const double* a = prep.gates[k - 1].data() + prep_offset(prep.gates[k - 1], prev, d);
    for (int r = 0; r < prev; ++r) {
      const double tu = t.tanh_u[k - 1][r];
      if (grad)
        grad->factors[k - 1][static_cast<std::size_t>(d) * prev + r] += grad_scale * g_h[r] * tu * (1.0 - a[r] * a[r]);
      g_u[r] = g_h[r] * (1.0 + a[r] * (1.0 - tu * tu));
    }
  }
  return 0.0;  // unreachable
}

double FactorizedDensity::logit(int d, double v) const { return forward(prepare_dim(d), d, v, nullptr); }

double FactorizedDensity::cdf(int d, double v) const { return sigmoid(logit(d, v)); }

namespace {
// sigmoid(hi) - sigmoid(lo) without cancellation in the centre or the tails.
double bin_mass(double lo, double hi) { return -sigmoid(hi) * sigmoid(-lo) * std::expm1(lo - hi); }
}  // namespace

double FactorizedDensity::bin_probability(int d, double v) const {
  const Prepared prep = prepare_dim(d);
  const double lo = forward(prep, d, v - 0.5, nullptr);
  const double hi = forward(prep, d, v + 0.5, nullptr);
  return bin_mass(lo, hi);
}

double FactorizedDensity::bits(int d, double v, FactorizedDensity* grad, double grad_scale, double* dbits_dv) const {
  return bits(prepare_dim(d), d, v, grad, grad_scale, dbits_dv);
}

double FactorizedDensity::bits(const Prepared& prep, int d, double v, FactorizedDensity* grad, double grad_scale,
                               double* dbits_dv) const {
  Trace t_lo, t_hi;
  const bool need_grad = grad || dbits_dv;
  const double lo = forward(prep, d, v - 0.5, need_grad ? &t_lo : nullptr);
  const double hi = forward(prep, d, v + 0.5, need_grad ? &t_hi : nullptr);
  const double p = bin_mass(lo, hi);
  if (p <= kProbabilityFloor) {
    if (dbits_dv) *dbits_dv = 0.0;
    return -std::log2(kProbabilityFloor);
  }
  if (need_grad) {
    const double dbits_dp = -1.0 / (p * kLn2);
    const double g_hi = dbits_dp * sigmoid_derivative(hi);
    const double g_lo = -dbits_dp * sigmoid_derivative(lo);
    const double dv =
        backward(prep, d, t_hi, g_hi, grad, grad_scale) + backward(prep, d, t_lo, g_lo, grad, grad_scale);
    if (dbits_dv) *dbits_dv = dv;
  }
  return -std::log2(p);
}

double FactorizedDensity::quantile(int d, double p) const {
  const Prepared prep = prepare_dim(d);
  const double target = std::log(p) - std::log1p(-p);
  double lo = -1.0, hi = 1.0;
  while (forward(prep, d, lo, nullptr) > target && lo > -1e9) lo *= 2.0;
  while (forward(prep, d, hi, nullptr) < target && hi < 1e9) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-9; ++it) {
    const double mid = 0.5 * (lo + hi);
    (forward(prep, d, mid, nullptr) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace lrc
