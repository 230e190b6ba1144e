#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "lrc/error.hpp"

namespace lrc {

/// Flat coefficient array with a (channels, height, width) or (length)
/// shape. Used for y, y-hat, z and z-hat.
struct LatentTensor {
  std::vector<double> values;
  std::vector<int> shape;

  LatentTensor() = default;
  LatentTensor(std::vector<double> v, std::vector<int> s) : values(std::move(v)), shape(std::move(s)) {
    require(element_count(shape) == values.size(), ErrorCode::kShapeMismatch,
            "latent shape does not match value count");
  }
  static LatentTensor flat(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return LatentTensor(std::move(v), {n});
  }

  static std::size_t element_count(const std::vector<int>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1},
                           [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
  }
  std::size_t size() const { return values.size(); }

  /// Number of independently modelled dimensions for a factorized density:
  /// one per channel for (C, H, W) tensors, one per element for flat ones.
  int density_dims() const { return shape.size() == 3 ? shape[0] : static_cast<int>(values.size()); }
  int density_dim_of(std::size_t i) const {
    if (shape.size() != 3) return static_cast<int>(i);
    return static_cast<int>(i / (static_cast<std::size_t>(shape[1]) * shape[2]));
  }

  bool all_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

/// Per-coefficient positive scales of the zero-mean conditional Gaussian.
struct ScaleField {
  std::vector<double> scales;
  std::size_t size() const { return scales.size(); }
};

}  // namespace lrc
