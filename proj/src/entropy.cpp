#include "lrc/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lrc/error.hpp"
#include "lrc/numerics.hpp"

namespace lrc {

LatentTensor dither(const LatentTensor& y, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  LatentTensor out = y;
  for (auto& v : out.values) v += u(rng);
  return out;
}

LatentTensor quantize(const LatentTensor& y) {
  LatentTensor out = y;
  for (auto& v : out.values) v = quantize_value(v);
  return out;
}

double gaussian_bits(double v, double scale, double* d_v, double* d_scale) {
  const double a = std::abs(v);
  const double t_hi = (0.5 - a) / scale;
  const double t_lo = (-0.5 - a) / scale;
  // Near the centre both CDF values sit close to 1/2 and their difference
  // cancels; the erf form keeps full relative precision there.
  const double p = t_lo > -1.0 ? 0.5 * (std::erf(t_hi * M_SQRT1_2) - std::erf(t_lo * M_SQRT1_2))
                               : normal_cdf(t_hi) - normal_cdf(t_lo);
  if (p <= kProbabilityFloor) {
    if (d_v) *d_v = 0.0;
    if (d_scale) *d_scale = 0.0;
    return -std::log2(kProbabilityFloor);
  }
  const double dbits_dp = -1.0 / (p * kLn2);
  if (d_v) {
    const double dp_da = (normal_pdf(t_lo) - normal_pdf(t_hi)) / scale;
    *d_v = dbits_dp * dp_da * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
  }
  if (d_scale) {
    const double dp_ds = (t_lo * normal_pdf(t_lo) - t_hi * normal_pdf(t_hi)) / scale;
    *d_scale = dbits_dp * dp_ds;
  }
  return -std::log2(p);
}

double rate_conditional(const LatentTensor& y_hat, const ScaleField& phi) {
  require(y_hat.size() == phi.size(), ErrorCode::kShapeMismatch, "scale field does not match latent length");
  double bits = 0.0;
  for (std::size_t i = 0; i < y_hat.size(); ++i) bits += gaussian_bits(y_hat.values[i], phi.scales[i]);
  return bits;
}

double rate_factorized(const LatentTensor& z_hat, const FactorizedDensity& psi) {
  require(z_hat.density_dims() == psi.dims(), ErrorCode::kShapeMismatch,
          "factorized density dimension does not match latent");
  const auto prep = psi.prepare();
  double bits = 0.0;
  for (std::size_t i = 0; i < z_hat.size(); ++i) bits += psi.bits(prep, z_hat.density_dim_of(i), z_hat.values[i]);
  return bits;
}

namespace {
const double kLogScaleMin = std::log(kScaleGridMin);
const double kLogScaleStep = (std::log(kScaleGridMax) - std::log(kScaleGridMin)) / (kScaleLevels - 1);
}  // namespace

double scale_representative(int index) {
  require(index >= 0 && index < kScaleLevels, ErrorCode::kInvalidArgument, "scale index out of range");
  return std::exp(kLogScaleMin + kLogScaleStep * index);
}

QuantizedScale quantize_scale(double phi) {
  require(phi >= kScaleGridMin * (1.0 - 1e-12) && std::isfinite(phi), ErrorCode::kInvalidArgument,
          "scale below the grid minimum");
  const double pos = (std::log(phi) - kLogScaleMin) / kLogScaleStep;
  const int idx = std::clamp(static_cast<int>(std::lround(pos)), 0, kScaleLevels - 1);
  return {idx, scale_representative(idx)};
}

int quantize_log_scale_index(float log_phi) {
  // Log-domain midpoints between adjacent levels.
  static const std::array<float, kScaleLevels - 1> kThresholds = [] {
    std::array<float, kScaleLevels - 1> t{};
    for (int i = 0; i + 1 < kScaleLevels; ++i) t[i] = static_cast<float>(kLogScaleMin + kLogScaleStep * (i + 0.5));
    return t;
  }();
  return static_cast<int>(std::upper_bound(kThresholds.begin(), kThresholds.end(), log_phi) - kThresholds.begin());
}

std::vector<std::uint32_t> quantize_pmf(std::span<const double> probs) {
  const std::size_t n = probs.size();
  require(n >= 2 && n <= kFreqTotal, ErrorCode::kInvalidArgument, "alphabet size out of range");
  std::vector<std::uint32_t> freq(n);
  std::int64_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = std::max(0.0, probs[i]) * kFreqTotal;
    freq[i] = static_cast<std::uint32_t>(std::max<long long>(1, std::llround(f)));
    total += freq[i];
  }
  std::int64_t diff = static_cast<std::int64_t>(kFreqTotal) - total;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return freq[a] > freq[b]; });
  if (diff > 0) {
    freq[order[0]] += static_cast<std::uint32_t>(diff);
  } else {
    for (std::size_t k = 0; diff < 0 && k < n; ++k) {
      const std::int64_t take = std::min<std::int64_t>(-diff, static_cast<std::int64_t>(freq[order[k]]) - 1);
      freq[order[k]] -= static_cast<std::uint32_t>(take);
      diff += take;
    }
  }
  return freq;
}

namespace {
LatentTable make_table(int lo, int hi, std::vector<double> probs) {
  LatentTable t;
  t.min_value = lo;
  t.max_value = hi;
  const auto freqs = quantize_pmf(probs);
  t.cdf = DiscreteCdf::from_frequencies(freqs);
  return t;
}
}  // namespace

LatentTable build_gaussian_cdf_table(double scale) {
  require(scale >= kScaleMin * (1.0 - 1e-12), ErrorCode::kInvalidArgument, "scale below 1e-3");
  const int support = std::min(kMaxTableSupport, static_cast<int>(std::ceil(6.0 * scale)));
  std::vector<double> probs;
  probs.reserve(2 * support + 2);
  for (int k = -support; k <= support; ++k) {
    const double a = std::abs(k);
    probs.push_back(normal_cdf((0.5 - a) / scale) - normal_cdf((-0.5 - a) / scale));
  }
  probs.push_back(2.0 * normal_cdf(-(support + 0.5) / scale));
  return make_table(-support, support, std::move(probs));
}

LatentTable build_factorized_table(const FactorizedDensity& density, int dim) {
  constexpr double kTail = 1e-7;
  int lo = static_cast<int>(std::floor(density.quantile(dim, kTail)));
  int hi = static_cast<int>(std::ceil(density.quantile(dim, 1.0 - kTail)));
  lo = std::clamp(lo, -kMaxTableSupport, kMaxTableSupport);
  hi = std::clamp(hi, lo, kMaxTableSupport);
  std::vector<double> probs;
  probs.reserve(hi - lo + 2);
  for (int k = lo; k <= hi; ++k) probs.push_back(density.bin_probability(dim, k));
  probs.push_back(density.cdf(dim, lo - 0.5) + (1.0 - density.cdf(dim, hi + 0.5)));
  return make_table(lo, hi, std::move(probs));
}

const std::array<LatentTable, kScaleLevels>& gaussian_tables() {
  static const std::array<LatentTable, kScaleLevels> tables = [] {
    std::array<LatentTable, kScaleLevels> t;
    for (int i = 0; i < kScaleLevels; ++i) t[i] = build_gaussian_cdf_table(scale_representative(i));
    return t;
  }();
  return tables;
}

}  // namespace lrc
