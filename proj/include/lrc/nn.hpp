#pragma once

#include <Eigen/Dense>

namespace lrc {

// Layer primitives for the trainable transforms. Activations are stored
// column-per-sample for dense layers and channel x (height*width) for
// convolutional ones. Every backward routine accumulates parameter
// gradients into `grad` and returns the gradient with respect to its input.

struct DenseParams {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

Eigen::MatrixXd dense_forward(const DenseParams& p, const Eigen::MatrixXd& in);
Eigen::MatrixXd dense_backward(const DenseParams& p, const Eigen::MatrixXd& in, const Eigen::MatrixXd& g_out,
                               DenseParams& grad);

inline Eigen::MatrixXd relu(const Eigen::MatrixXd& x) { return x.cwiseMax(0.0); }
inline Eigen::MatrixXd relu_backward(const Eigen::MatrixXd& pre, const Eigen::MatrixXd& g) {
  return (pre.array() > 0.0).select(g, 0.0);
}

/// Square "same"-padded convolution geometry: out = ceil(in / stride),
/// padding split with the smaller half before.
struct ConvGeometry {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  int in_size = 0;
  int out_size = 0;
  int pad = 0;

  static ConvGeometry same(int in_channels, int out_channels, int kernel, int stride, int in_size);
};

struct ConvParams {
  Eigen::MatrixXd weight;  // out_channels x (in_channels * kernel * kernel)
  Eigen::VectorXd bias;
};

Eigen::MatrixXd im2col(const Eigen::MatrixXd& x, const ConvGeometry& g);
/// Adjoint of im2col.
Eigen::MatrixXd col2im(const Eigen::MatrixXd& cols, const ConvGeometry& g);

Eigen::MatrixXd conv_forward(const ConvParams& p, const Eigen::MatrixXd& x, const ConvGeometry& g);
Eigen::MatrixXd conv_backward(const ConvParams& p, const Eigen::MatrixXd& x, const Eigen::MatrixXd& g_out,
                              const ConvGeometry& g, ConvParams& grad);

/// Transposed convolution: the adjoint of the convolution described by `g`
/// (maps g.out_channels x out_size^2 back to g.in_channels x in_size^2),
/// plus one bias per produced channel.
Eigen::MatrixXd tconv_forward(const ConvParams& p, const Eigen::MatrixXd& u, const ConvGeometry& g);
Eigen::MatrixXd tconv_backward(const ConvParams& p, const Eigen::MatrixXd& u, const Eigen::MatrixXd& g_out,
                               const ConvGeometry& g, ConvParams& grad);

inline constexpr double kGdnBetaFloor = 1e-6;

/// GDN parameters in reparametrized form: beta = beta_raw^2 + 1e-6,
/// gamma = gamma_raw^2 (element-wise), so beta > 0 and gamma >= 0.
struct GdnParams {
  Eigen::VectorXd beta_raw;
  Eigen::MatrixXd gamma_raw;

  Eigen::VectorXd beta() const { return beta_raw.array().square() + kGdnBetaFloor; }
  Eigen::MatrixXd gamma() const { return gamma_raw.array().square(); }
  static GdnParams init(int channels);
};

/// y_i = x_i / sqrt(beta_i + sum_j gamma_ij x_j^2)   (inverse = false)
/// y_i = x_i * sqrt(beta_i + sum_j gamma_ij x_j^2)   (inverse = true)
Eigen::MatrixXd gdn_apply(const Eigen::VectorXd& beta, const Eigen::MatrixXd& gamma, const Eigen::MatrixXd& x,
                          bool inverse);
Eigen::MatrixXd gdn_forward(const GdnParams& p, const Eigen::MatrixXd& x, bool inverse);
Eigen::MatrixXd gdn_backward(const GdnParams& p, const Eigen::MatrixXd& x, const Eigen::MatrixXd& g_out, bool inverse,
                             GdnParams& grad);

}  // namespace lrc
