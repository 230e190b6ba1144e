#include "lrc/inference.hpp"

#include <cmath>

#include "lrc/dct.hpp"
#include "lrc/entropy.hpp"
#include "lrc/error.hpp"

namespace lrc {

namespace {

std::vector<float> to_float(const Eigen::VectorXd& v) {
  std::vector<float> out(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v(i));
  return out;
}

std::vector<float> to_float_rowmajor(const Eigen::MatrixXd& m) {
  std::vector<float> out(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[r * m.cols() + c] = static_cast<float>(m(r, c));
  return out;
}

std::vector<float> exp_gains(const Eigen::VectorXd& log_gain) {
  std::vector<float> out(static_cast<std::size_t>(log_gain.size()));
  for (Eigen::Index i = 0; i < log_gain.size(); ++i) out[i] = static_cast<float>(std::exp(log_gain(i)));
  return out;
}

}  // namespace

FrozenModel::Dense FrozenModel::freeze(const DenseParams& p) {
  Dense d;
  d.in = static_cast<int>(p.weight.cols());
  d.out = static_cast<int>(p.weight.rows());
  d.w = to_float_rowmajor(p.weight);
  d.b = to_float(p.bias);
  return d;
}

FrozenModel::Gdn FrozenModel::freeze(const GdnParams& p) {
  Gdn g;
  g.ch = static_cast<int>(p.beta_raw.size());
  g.beta = to_float(p.beta());
  g.gamma = to_float_rowmajor(p.gamma());
  return g;
}

FrozenModel::FrozenModel(const ModelParams& source, double lam)
    : params_(source), config_(source.config), lambda_(lam), latent_size_(source.config.latent_size()) {
  config_.validate();
  // Rounded first so a model in memory codes exactly like its saved file.
  round_to_float(params_);
  const ModelParams& params = params_;
  const GainSet gains = gains_for_lambda(params.gains, lam);
  for (const auto& g : gains.analysis) gain_a_.push_back(exp_gains(g));
  for (const auto& g : gains.synthesis) gain_s_.push_back(exp_gains(g));

  if (config_.kind == TransformKind::kLinearDct) {
    dct_ = to_float_rowmajor(dct_matrix(config_.block_size));
  } else {
    const auto sizes = config_.ae_sizes();
    const std::array<int, 5> ch{1, config_.ae_channels[0], config_.ae_channels[1], config_.ae_channels[2],
                                config_.ae_channels[3]};
    for (int l = 0; l < 4; ++l) {
      const auto geo = ConvGeometry::same(ch[l], ch[l + 1], config_.ae_kernels[l], config_.ae_strides[l], sizes[l]);
      Conv c;
      c.in_ch = geo.in_channels;
      c.out_ch = geo.out_channels;
      c.k = geo.kernel;
      c.stride = geo.stride;
      c.in_size = geo.in_size;
      c.out_size = geo.out_size;
      c.pad = geo.pad;
      conv_a_[l] = c;
      conv_a_[l].w = to_float_rowmajor(params.ae_analysis[l].weight);
      conv_a_[l].b = to_float(params.ae_analysis[l].bias);
      // Synthesis layer 3 - l is the adjoint of analysis layer l.
      conv_s_[3 - l] = c;
      conv_s_[3 - l].w = to_float_rowmajor(params.ae_synthesis[3 - l].weight);
      conv_s_[3 - l].b = to_float(params.ae_synthesis[3 - l].bias);
      gdn_a_[l] = freeze(params.ae_gdn[l]);
      gdn_s_[l] = freeze(params.ae_igdn[l]);
    }
  }

  if (config_.has_hyperprior()) {
    for (int l = 0; l < 3; ++l) {
      ha_[l] = freeze(params.hyper_analysis[l]);
      hs_[l] = freeze(params.hyper_synthesis[l]);
    }
    for (int d = 0; d < params.z_density.dims(); ++d) tables_.push_back(build_factorized_table(params.z_density, d));
  } else {
    for (int d = 0; d < params.y_density.dims(); ++d) tables_.push_back(build_factorized_table(params.y_density, d));
  }
}

int FrozenModel::main_density_dim(int i) const {
  if (config_.kind == TransformKind::kLinearDct) return i;
  const int s = config_.ae_sizes()[4];
  return i / (s * s);
}

void FrozenModel::dense(const Dense& d, const float* in, float* out, bool relu) {
  for (int o = 0; o < d.out; ++o) {
    const float* w = &d.w[static_cast<std::size_t>(o) * d.in];
    float acc = 0.0f;
    for (int i = 0; i < d.in; ++i) acc += w[i] * in[i];
    acc += d.b[o];
    out[o] = (relu && acc < 0.0f) ? 0.0f : acc;
  }
}

std::vector<float> FrozenModel::conv(const Conv& c, const std::vector<float>& x) {
  const int k = c.k, n = c.in_size, m = c.out_size;
  std::vector<float> out(static_cast<std::size_t>(c.out_ch) * m * m);
  const std::size_t row = static_cast<std::size_t>(c.in_ch) * k * k;
  for (int o = 0; o < c.out_ch; ++o)
    for (int oy = 0; oy < m; ++oy)
      for (int ox = 0; ox < m; ++ox) {
        float acc = 0.0f;
        for (int ch = 0; ch < c.in_ch; ++ch)
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * c.stride - c.pad + ky;
            if (iy < 0 || iy >= n) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * c.stride - c.pad + kx;
              if (ix < 0 || ix >= n) continue;
              acc += c.w[o * row + (ch * k + ky) * k + kx] * x[(static_cast<std::size_t>(ch) * n + iy) * n + ix];
            }
          }
        out[(static_cast<std::size_t>(o) * m + oy) * m + ox] = acc + c.b[o];
      }
  return out;
}

std::vector<float> FrozenModel::tconv(const Conv& c, const std::vector<float>& u) {
  const int k = c.k, n = c.in_size, m = c.out_size;
  std::vector<float> out(static_cast<std::size_t>(c.in_ch) * n * n, 0.0f);
  const std::size_t row = static_cast<std::size_t>(c.in_ch) * k * k;
  for (int o = 0; o < c.out_ch; ++o)
    for (int oy = 0; oy < m; ++oy)
      for (int ox = 0; ox < m; ++ox) {
        const float v = u[(static_cast<std::size_t>(o) * m + oy) * m + ox];
        for (int ch = 0; ch < c.in_ch; ++ch)
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * c.stride - c.pad + ky;
            if (iy < 0 || iy >= n) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * c.stride - c.pad + kx;
              if (ix < 0 || ix >= n) continue;
              out[(static_cast<std::size_t>(ch) * n + iy) * n + ix] += c.w[o * row + (ch * k + ky) * k + kx] * v;
            }
          }
      }
  for (int ch = 0; ch < c.in_ch; ++ch)
    for (int p = 0; p < n * n; ++p) out[static_cast<std::size_t>(ch) * n * n + p] += c.b[ch];
  return out;
}

void FrozenModel::gdn(const Gdn& g, std::vector<float>& x, int spatial, bool inverse) {
  std::vector<float> norm(static_cast<std::size_t>(g.ch));
  for (int p = 0; p < spatial; ++p) {
    for (int i = 0; i < g.ch; ++i) {
      float acc = g.beta[i];
      for (int j = 0; j < g.ch; ++j) {
        const float xj = x[static_cast<std::size_t>(j) * spatial + p];
        acc += g.gamma[static_cast<std::size_t>(i) * g.ch + j] * (xj * xj);
      }
      norm[i] = std::sqrt(acc);
    }
    for (int i = 0; i < g.ch; ++i) {
      float& xi = x[static_cast<std::size_t>(i) * spatial + p];
      xi = inverse ? xi * norm[i] : xi / norm[i];
    }
  }
}

std::vector<float> FrozenModel::analysis(std::span<const float> x) const {
  require(static_cast<int>(x.size()) == pixels(), ErrorCode::kShapeMismatch, "block size does not match the model");
  if (config_.kind == TransformKind::kLinearDct) {
    const int b = config_.block_size;
    std::vector<float> t(static_cast<std::size_t>(b) * b), y(t.size());
    for (int u = 0; u < b; ++u)
      for (int s = 0; s < b; ++s) {
        float acc = 0.0f;
        for (int r = 0; r < b; ++r) acc += dct_[u * b + r] * x[r * b + s];
        t[u * b + s] = acc;
      }
    for (int u = 0; u < b; ++u)
      for (int v = 0; v < b; ++v) {
        float acc = 0.0f;
        for (int s = 0; s < b; ++s) acc += t[u * b + s] * dct_[v * b + s];
        y[u * b + v] = acc * gain_a_[0][u * b + v];
      }
    return y;
  }
  std::vector<float> a(x.begin(), x.end());
  for (int l = 0; l < 4; ++l) {
    a = conv(conv_a_[l], a);
    const int spatial = conv_a_[l].out_size * conv_a_[l].out_size;
    gdn(gdn_a_[l], a, spatial, false);
    for (int ch = 0; ch < conv_a_[l].out_ch; ++ch)
      for (int p = 0; p < spatial; ++p) a[static_cast<std::size_t>(ch) * spatial + p] *= gain_a_[l][ch];
  }
  return a;
}

std::vector<float> FrozenModel::synthesis(std::span<const float> y_hat) const {
  require(static_cast<int>(y_hat.size()) == latent_size_, ErrorCode::kShapeMismatch,
          "latent length does not match the model");
  if (config_.kind == TransformKind::kLinearDct) {
    const int b = config_.block_size;
    std::vector<float> z(static_cast<std::size_t>(b) * b), t(z.size()), x(z.size());
    for (int i = 0; i < b * b; ++i) z[i] = gain_s_[0][i] * y_hat[i];
    for (int r = 0; r < b; ++r)
      for (int v = 0; v < b; ++v) {
        float acc = 0.0f;
        for (int u = 0; u < b; ++u) acc += dct_[u * b + r] * z[u * b + v];
        t[r * b + v] = acc;
      }
    for (int r = 0; r < b; ++r)
      for (int s = 0; s < b; ++s) {
        float acc = 0.0f;
        for (int v = 0; v < b; ++v) acc += t[r * b + v] * dct_[v * b + s];
        x[r * b + s] = acc;
      }
    return x;
  }
  std::vector<float> a(y_hat.begin(), y_hat.end());
  for (int j = 0; j < 4; ++j) {
    const Conv& c = conv_s_[j];
    const int spatial = c.out_size * c.out_size;
    for (int ch = 0; ch < c.out_ch; ++ch)
      for (int p = 0; p < spatial; ++p) a[static_cast<std::size_t>(ch) * spatial + p] *= gain_s_[j][ch];
    gdn(gdn_s_[j], a, spatial, true);
    a = tconv(c, a);
  }
  return a;
}

std::vector<float> FrozenModel::hyper_analysis(std::span<const float> y) const {
  require(config_.has_hyperprior(), ErrorCode::kUnsupported, "model has no hyperprior");
  require(static_cast<int>(y.size()) == latent_size_, ErrorCode::kShapeMismatch, "latent length does not match");
  std::vector<float> abs_y(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) abs_y[i] = std::fabs(y[i]);
  std::vector<float> h1(ha_[0].out), h2(ha_[1].out), z(ha_[2].out);
  dense(ha_[0], abs_y.data(), h1.data(), true);
  dense(ha_[1], h1.data(), h2.data(), true);
  dense(ha_[2], h2.data(), z.data(), false);
  return z;
}

std::vector<float> FrozenModel::hyper_log_scale(std::span<const float> z_hat) const {
  require(config_.has_hyperprior(), ErrorCode::kUnsupported, "model has no hyperprior");
  require(static_cast<int>(z_hat.size()) == hs_[0].in, ErrorCode::kShapeMismatch,
          "hyper-latent length does not match");
  std::vector<float> h1(hs_[0].out), h2(hs_[1].out), out(hs_[2].out);
  dense(hs_[0], z_hat.data(), h1.data(), true);
  dense(hs_[1], h1.data(), h2.data(), true);
  dense(hs_[2], h2.data(), out.data(), false);
  return out;
}

}  // namespace lrc
