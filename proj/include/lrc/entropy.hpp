#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "lrc/factorized_density.hpp"
#include "lrc/latent.hpp"
#include "lrc/range_coder.hpp"

namespace lrc {

/// y + u with u ~ U(-1/2, 1/2) i.i.d.
LatentTensor dither(const LatentTensor& y, std::mt19937_64& rng);

/// Round half away from zero.
inline double quantize_value(double v) { return std::round(v); }
LatentTensor quantize(const LatentTensor& y);

/// -log2 of the zero-mean Gaussian mass of the unit bin around v, floored
/// at 1e-9. Optional partial derivatives with respect to v and scale.
double gaussian_bits(double v, double scale, double* d_v = nullptr, double* d_scale = nullptr);

double rate_conditional(const LatentTensor& y_hat, const ScaleField& phi);
double rate_factorized(const LatentTensor& z_hat, const FactorizedDensity& psi);

// Scale quantization: 64 log-spaced levels spanning [1e-3, 256].
inline constexpr int kScaleLevels = 64;
inline constexpr double kScaleGridMin = 1e-3;
inline constexpr double kScaleGridMax = 256.0;

struct QuantizedScale {
  int index = 0;
  double representative = 0.0;
};
double scale_representative(int index);
QuantizedScale quantize_scale(double phi);
/// Grid index for a scale given by its natural log, in single precision.
/// Only comparisons are involved, so encoder and decoder agree on every
/// IEEE-754 platform.
int quantize_log_scale_index(float log_phi);

/// Largest table half-width.
inline constexpr int kMaxTableSupport = 255;

/// Converts bin probabilities plus an escape probability into 16-bit
/// frequencies: every bin at least 1, total exactly 65536, rounding
/// residue absorbed by the most probable bins.
std::vector<std::uint32_t> quantize_pmf(std::span<const double> probs);

/// Support [-T, T] with T = min(255, ceil(6 scale)) plus escape.
LatentTable build_gaussian_cdf_table(double scale);
/// Table for one dimension of a factorized density, support covering its
/// central 1 - 2e-7 mass (clipped to +-255) plus escape.
LatentTable build_factorized_table(const FactorizedDensity& density, int dim);

/// The 64 Gaussian tables of the scale grid, built once.
const std::array<LatentTable, kScaleLevels>& gaussian_tables();

}  // namespace lrc
