#include "lrc/dct.hpp"

#include <cmath>
#include <numbers>

#include "lrc/error.hpp"

namespace lrc {

Eigen::MatrixXd dct_matrix(int n) {
  require(n >= 2, ErrorCode::kInvalidArgument, "DCT size must be at least 2");
  Eigen::MatrixXd c(n, n);
  for (int k = 0; k < n; ++k) {
    const double alpha = std::sqrt((k == 0 ? 1.0 : 2.0) / n);
    for (int i = 0; i < n; ++i) c(k, i) = alpha * std::cos(std::numbers::pi * (2 * i + 1) * k / (2.0 * n));
  }
  return c;
}

Eigen::MatrixXd dct2(const Eigen::MatrixXd& block) {
  require(block.rows() == block.cols(), ErrorCode::kShapeMismatch, "dct2 expects a square block");
  const Eigen::MatrixXd c = dct_matrix(static_cast<int>(block.rows()));
  return c * block * c.transpose();
}

Eigen::MatrixXd idct2(const Eigen::MatrixXd& coeffs) {
  require(coeffs.rows() == coeffs.cols(), ErrorCode::kShapeMismatch, "idct2 expects a square block");
  const Eigen::MatrixXd c = dct_matrix(static_cast<int>(coeffs.rows()));
  return c.transpose() * coeffs * c;
}

Eigen::MatrixXd dct2_operator(int n) {
  const Eigen::MatrixXd c = dct_matrix(n);
  Eigen::MatrixXd k(n * n, n * n);
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v)
      for (int r = 0; r < n; ++r)
        for (int s = 0; s < n; ++s) k(u * n + v, r * n + s) = c(u, r) * c(v, s);
  return k;
}

}  // namespace lrc
