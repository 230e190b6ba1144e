#pragma once

#include <Eigen/Dense>

namespace lrc {

/// Orthonormal type-II DCT matrix; row k holds basis function k.
Eigen::MatrixXd dct_matrix(int n);

/// Separable orthonormal 2D DCT-II and its inverse.
Eigen::MatrixXd dct2(const Eigen::MatrixXd& block);
Eigen::MatrixXd idct2(const Eigen::MatrixXd& coeffs);

/// dct2 as a single (n*n) x (n*n) operator on row-major flattened blocks.
Eigen::MatrixXd dct2_operator(int n);

}  // namespace lrc
