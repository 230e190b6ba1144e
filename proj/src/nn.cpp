#include "lrc/nn.hpp"

#include <algorithm>

#include "lrc/error.hpp"

namespace lrc {

Eigen::MatrixXd dense_forward(const DenseParams& p, const Eigen::MatrixXd& in) {
  Eigen::MatrixXd out = p.weight * in;
  out.colwise() += p.bias;
  return out;
}

Eigen::MatrixXd dense_backward(const DenseParams& p, const Eigen::MatrixXd& in, const Eigen::MatrixXd& g_out,
                               DenseParams& grad) {
  grad.weight.noalias() += g_out * in.transpose();
  grad.bias += g_out.rowwise().sum();
  return p.weight.transpose() * g_out;
}

ConvGeometry ConvGeometry::same(int in_channels, int out_channels, int kernel, int stride, int in_size) {
  ConvGeometry g;
  g.in_channels = in_channels;
  g.out_channels = out_channels;
  g.kernel = kernel;
  g.stride = stride;
  g.in_size = in_size;
  g.out_size = (in_size + stride - 1) / stride;
  g.pad = std::max((g.out_size - 1) * stride + kernel - in_size, 0) / 2;
  return g;
}

Eigen::MatrixXd im2col(const Eigen::MatrixXd& x, const ConvGeometry& g) {
  const int k = g.kernel, n = g.in_size, m = g.out_size;
  Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(g.in_channels) * k * k, m * m);
  for (int c = 0; c < g.in_channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const int row = (c * k + ky) * k + kx;
        for (int oy = 0; oy < m; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= n) continue;
          for (int ox = 0; ox < m; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= n) continue;
            cols(row, oy * m + ox) = x(c, iy * n + ix);
          }
        }
      }
  return cols;
}

Eigen::MatrixXd col2im(const Eigen::MatrixXd& cols, const ConvGeometry& g) {
  const int k = g.kernel, n = g.in_size, m = g.out_size;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(g.in_channels, n * n);
  for (int c = 0; c < g.in_channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const int row = (c * k + ky) * k + kx;
        for (int oy = 0; oy < m; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= n) continue;
          for (int ox = 0; ox < m; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= n) continue;
            x(c, iy * n + ix) += cols(row, oy * m + ox);
          }
        }
      }
  return x;
}

Eigen::MatrixXd conv_forward(const ConvParams& p, const Eigen::MatrixXd& x, const ConvGeometry& g) {
  Eigen::MatrixXd out = p.weight * im2col(x, g);
  out.colwise() += p.bias;
  return out;
}

Eigen::MatrixXd conv_backward(const ConvParams& p, const Eigen::MatrixXd& x, const Eigen::MatrixXd& g_out,
                              const ConvGeometry& g, ConvParams& grad) {
  grad.weight.noalias() += g_out * im2col(x, g).transpose();
  grad.bias += g_out.rowwise().sum();
  return col2im(p.weight.transpose() * g_out, g);
}

Eigen::MatrixXd tconv_forward(const ConvParams& p, const Eigen::MatrixXd& u, const ConvGeometry& g) {
  Eigen::MatrixXd out = col2im(p.weight.transpose() * u, g);
  out.colwise() += p.bias;
  return out;
}

Eigen::MatrixXd tconv_backward(const ConvParams& p, const Eigen::MatrixXd& u, const Eigen::MatrixXd& g_out,
                               const ConvGeometry& g, ConvParams& grad) {
  const Eigen::MatrixXd g_cols = im2col(g_out, g);
  grad.weight.noalias() += u * g_cols.transpose();
  grad.bias += g_out.rowwise().sum();
  return p.weight * g_cols;
}

GdnParams GdnParams::init(int channels) {
  GdnParams p;
  p.beta_raw = Eigen::VectorXd::Ones(channels);
  p.gamma_raw = Eigen::MatrixXd::Constant(channels, channels, 0.01);
  p.gamma_raw.diagonal().setConstant(std::sqrt(0.1));
  return p;
}

namespace {
Eigen::ArrayXXd gdn_norm(const Eigen::VectorXd& beta, const Eigen::MatrixXd& gamma, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd n = gamma * x.array().square().matrix();
  n.colwise() += beta;
  return n.array();
}
}  // namespace

Eigen::MatrixXd gdn_apply(const Eigen::VectorXd& beta, const Eigen::MatrixXd& gamma, const Eigen::MatrixXd& x,
                          bool inverse) {
  require(beta.size() == x.rows() && gamma.rows() == x.rows() && gamma.cols() == x.rows(), ErrorCode::kShapeMismatch,
          "GDN parameter shape does not match channel count");
  require((beta.array() > 0.0).all(), ErrorCode::kInvalidArgument, "GDN beta must be positive");
  require((gamma.array() >= 0.0).all(), ErrorCode::kInvalidArgument, "GDN gamma must be non-negative");
  const Eigen::ArrayXXd n = gdn_norm(beta, gamma, x);
  if (inverse) return (x.array() * n.sqrt()).matrix();
  return (x.array() * n.rsqrt()).matrix();
}

Eigen::MatrixXd gdn_forward(const GdnParams& p, const Eigen::MatrixXd& x, bool inverse) {
  const Eigen::ArrayXXd n = gdn_norm(p.beta(), p.gamma(), x);
  if (inverse) return (x.array() * n.sqrt()).matrix();
  return (x.array() * n.rsqrt()).matrix();
}

Eigen::MatrixXd gdn_backward(const GdnParams& p, const Eigen::MatrixXd& x, const Eigen::MatrixXd& g_out, bool inverse,
                             GdnParams& grad) {
  const Eigen::MatrixXd gamma = p.gamma();
  const Eigen::ArrayXXd n = gdn_norm(p.beta(), gamma, x);
  Eigen::MatrixXd g_x;
  Eigen::MatrixXd g_n;
  if (inverse) {
    g_x = (g_out.array() * n.sqrt()).matrix();
    g_n = (g_out.array() * x.array() * 0.5 * n.rsqrt()).matrix();
  } else {
    g_x = (g_out.array() * n.rsqrt()).matrix();
    g_n = (g_out.array() * x.array() * -0.5 * n.rsqrt() / n).matrix();
  }
  g_x.array() += 2.0 * x.array() * (gamma.transpose() * g_n).array();
  const Eigen::MatrixXd g_gamma = g_n * x.array().square().matrix().transpose();
  const Eigen::VectorXd g_beta = g_n.rowwise().sum();
  grad.gamma_raw.array() += 2.0 * p.gamma_raw.array() * g_gamma.array();
  grad.beta_raw.array() += 2.0 * p.beta_raw.array() * g_beta.array();
  return g_x;
}

}  // namespace lrc
