#include "lrc/transforms.hpp"

#include <map>
#include <mutex>

#include "lrc/dct.hpp"
#include "lrc/entropy.hpp"
#include "lrc/error.hpp"
#include "lrc/numerics.hpp"

namespace lrc {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

const Eigen::MatrixXd& dct_operator_cached(int n) {
  static std::mutex mu;
  static std::map<int, Eigen::MatrixXd> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, dct2_operator(n)).first;
  return it->second;
}

std::array<ConvGeometry, 4> ae_geometry(const ModelConfig& c) {
  const auto sizes = c.ae_sizes();
  const std::array<int, 5> ch{1, c.ae_channels[0], c.ae_channels[1], c.ae_channels[2], c.ae_channels[3]};
  std::array<ConvGeometry, 4> g;
  for (int l = 0; l < 4; ++l) g[l] = ConvGeometry::same(ch[l], ch[l + 1], c.ae_kernels[l], c.ae_strides[l], sizes[l]);
  return g;
}

// (C x S) activation <-> channel-major flat column.
Eigen::VectorXd flatten(const Eigen::MatrixXd& a) {
  RowMajorMatrix r = a;
  return Eigen::Map<const Eigen::VectorXd>(r.data(), r.size());
}
Eigen::MatrixXd unflatten(const Eigen::VectorXd& v, int channels) {
  const Eigen::Index spatial = v.size() / channels;
  return Eigen::Map<const RowMajorMatrix>(v.data(), channels, spatial);
}

Eigen::VectorXd gain_vector(const Eigen::VectorXd& log_gain) { return log_gain.array().exp().matrix(); }

void ae_analysis(const ModelParams& p, const GainSet& gains, const Eigen::VectorXd& x, AeTrace& t,
                 Eigen::Ref<Eigen::VectorXd> y) {
  const auto geo = ae_geometry(p.config);
  Eigen::MatrixXd a = Eigen::Map<const Eigen::MatrixXd>(x.data(), 1, x.size());
  for (int l = 0; l < 4; ++l) {
    t.conv_in[l] = a;
    t.conv_out[l] = conv_forward(p.ae_analysis[l], a, geo[l]);
    t.gdn_out[l] = gdn_forward(p.ae_gdn[l], t.conv_out[l], false);
    a = gain_vector(gains.analysis[l]).asDiagonal() * t.gdn_out[l];
  }
  y = flatten(a);
}

void ae_synthesis(const ModelParams& p, const GainSet& gains, const Eigen::VectorXd& y_tilde, AeTrace& t,
                  Eigen::Ref<Eigen::VectorXd> x_hat) {
  const auto geo = ae_geometry(p.config);
  t.syn_in[0] = unflatten(y_tilde, p.config.ae_channels[3]);
  for (int j = 0; j < 4; ++j) {
    t.gained[j] = gain_vector(gains.synthesis[j]).asDiagonal() * t.syn_in[j];
    t.igdn_out[j] = gdn_forward(p.ae_igdn[j], t.gained[j], true);
    t.syn_in[j + 1] = tconv_forward(p.ae_synthesis[j], t.igdn_out[j], geo[3 - j]);
  }
  x_hat = Eigen::Map<const Eigen::VectorXd>(t.syn_in[4].data(), t.syn_in[4].size());
}

Eigen::MatrixXd analysis_batch(const ModelParams& p, const GainSet& gains, const Eigen::MatrixXd& x,
                               std::vector<AeTrace>* traces) {
  const auto& c = p.config;
  if (c.kind == TransformKind::kLinearDct)
    return gain_vector(gains.analysis[0]).asDiagonal() * (dct_operator_cached(c.block_size) * x);
  Eigen::MatrixXd y(c.latent_size(), x.cols());
  std::vector<AeTrace> local;
  auto& tr = traces ? *traces : local;
  tr.resize(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index b = 0; b < x.cols(); ++b) ae_analysis(p, gains, x.col(b), tr[b], y.col(b));
  return y;
}

Eigen::MatrixXd synthesis_batch(const ModelParams& p, const GainSet& gains, const Eigen::MatrixXd& y_tilde,
                                std::vector<AeTrace>* traces) {
  const auto& c = p.config;
  if (c.kind == TransformKind::kLinearDct)
    return dct_operator_cached(c.block_size).transpose() * (gain_vector(gains.synthesis[0]).asDiagonal() * y_tilde);
  Eigen::MatrixXd x_hat(c.block_size * c.block_size, y_tilde.cols());
  std::vector<AeTrace> local;
  auto& tr = traces ? *traces : local;
  tr.resize(static_cast<std::size_t>(y_tilde.cols()));
  for (Eigen::Index b = 0; b < y_tilde.cols(); ++b) ae_synthesis(p, gains, y_tilde.col(b), tr[b], x_hat.col(b));
  return x_hat;
}

struct HyperAnalysisOut {
  Eigen::MatrixXd abs_y, pre1, pre2, z;
};
HyperAnalysisOut hyper_analysis_batch(const ModelParams& p, const Eigen::MatrixXd& y) {
  HyperAnalysisOut o;
  o.abs_y = y.cwiseAbs();
  o.pre1 = dense_forward(p.hyper_analysis[0], o.abs_y);
  o.pre2 = dense_forward(p.hyper_analysis[1], relu(o.pre1));
  o.z = dense_forward(p.hyper_analysis[2], relu(o.pre2));
  return o;
}

struct HyperSynthesisOut {
  Eigen::MatrixXd pre1, pre2, log_scale, scale;
};
HyperSynthesisOut hyper_synthesis_batch(const ModelParams& p, const Eigen::MatrixXd& z_tilde) {
  HyperSynthesisOut o;
  o.pre1 = dense_forward(p.hyper_synthesis[0], z_tilde);
  o.pre2 = dense_forward(p.hyper_synthesis[1], relu(o.pre1));
  o.log_scale = dense_forward(p.hyper_synthesis[2], relu(o.pre2));
  o.scale = o.log_scale.array().exp().max(kScaleMin).matrix();
  return o;
}

void require_hyperprior(const ModelParams& p) {
  if (!p.config.has_hyperprior()) fail(ErrorCode::kUnsupported, "model has no hyperprior");
}

Eigen::MatrixXd apply_quantization(const Eigen::MatrixXd& v, QuantMode mode, const Eigen::MatrixXd* fixed,
                                   std::mt19937_64* rng, Eigen::MatrixXd& noise) {
  switch (mode) {
    case QuantMode::kNone:
      return v;
    case QuantMode::kHard:
      return v.unaryExpr([](double t) { return quantize_value(t); });
    case QuantMode::kDither:
      if (fixed) {
        require(fixed->rows() == v.rows() && fixed->cols() == v.cols(), ErrorCode::kShapeMismatch,
                "supplied dither noise has the wrong shape");
        noise = *fixed;
      } else {
        require(rng != nullptr, ErrorCode::kInvalidArgument, "dithering requires a generator");
        std::uniform_real_distribution<double> u(-0.5, 0.5);
        noise.resize(v.rows(), v.cols());
        for (Eigen::Index j = 0; j < v.cols(); ++j)
          for (Eigen::Index i = 0; i < v.rows(); ++i) noise(i, j) = u(*rng);
      }
      return v + noise;
  }
  return v;
}

}  // namespace

Eigen::MatrixXd blocks_to_matrix(const BlockDataset& ds, std::size_t begin, std::size_t end) {
  const Eigen::Index pixels = static_cast<Eigen::Index>(ds.block_size) * ds.block_size;
  Eigen::MatrixXd x(pixels, static_cast<Eigen::Index>(end - begin));
  for (std::size_t b = begin; b < end; ++b)
    for (Eigen::Index i = 0; i < pixels; ++i) x(i, static_cast<Eigen::Index>(b - begin)) = ds.blocks[b].data[i];
  return x;
}

Eigen::MatrixXd blocks_to_matrix(const BlockDataset& ds) { return blocks_to_matrix(ds, 0, ds.size()); }

LatentTensor analysis(const ModelParams& params, const ResidualBlock& x, double lam) {
  require(x.size == params.config.block_size, ErrorCode::kShapeMismatch, "block size does not match the model");
  const GainSet gains = gains_for_lambda(params.gains, lam);
  Eigen::MatrixXd col(x.data.size(), 1);
  for (std::size_t i = 0; i < x.data.size(); ++i) col(static_cast<Eigen::Index>(i), 0) = x.data[i];
  const Eigen::MatrixXd y = analysis_batch(params, gains, col, nullptr);
  return LatentTensor(std::vector<double>(y.data(), y.data() + y.size()), params.config.latent_shape());
}

ResidualBlock synthesis(const ModelParams& params, const LatentTensor& y_hat, double lam) {
  require(y_hat.shape == params.config.latent_shape(), ErrorCode::kShapeMismatch,
          "latent shape does not match the analysis output");
  const GainSet gains = gains_for_lambda(params.gains, lam);
  const Eigen::MatrixXd y = Eigen::Map<const Eigen::MatrixXd>(y_hat.values.data(), y_hat.values.size(), 1);
  const Eigen::MatrixXd x = synthesis_batch(params, gains, y, nullptr);
  ResidualBlock out;
  out.size = params.config.block_size;
  out.source_tag = "reconstruction";
  out.data.resize(static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) out.data[i] = static_cast<float>(x(i, 0));
  return out;
}

LatentTensor hyper_analysis(const ModelParams& params, const LatentTensor& y) {
  require_hyperprior(params);
  require(static_cast<int>(y.size()) == params.config.latent_size(), ErrorCode::kShapeMismatch,
          "latent length does not match the hyper-analysis input");
  const Eigen::MatrixXd col = Eigen::Map<const Eigen::MatrixXd>(y.values.data(), y.values.size(), 1);
  const auto o = hyper_analysis_batch(params, col);
  return LatentTensor::flat(std::vector<double>(o.z.data(), o.z.data() + o.z.size()));
}

ScaleField hyper_synthesis(const ModelParams& params, const LatentTensor& z_hat) {
  require_hyperprior(params);
  require(static_cast<int>(z_hat.size()) == params.config.hyper_latent_size(), ErrorCode::kShapeMismatch,
          "hyper-latent length does not match the hyper-synthesis input");
  const Eigen::MatrixXd col = Eigen::Map<const Eigen::MatrixXd>(z_hat.values.data(), z_hat.values.size(), 1);
  const auto o = hyper_synthesis_batch(params, col);
  return ScaleField{std::vector<double>(o.scale.data(), o.scale.data() + o.scale.size())};
}

namespace {
LatentTensor gdn_tensor(const LatentTensor& x, const Eigen::VectorXd& beta, const Eigen::MatrixXd& gamma,
                        bool inverse) {
  require(x.shape.size() == 3, ErrorCode::kShapeMismatch, "GDN expects a (C, H, W) tensor");
  require(beta.size() == x.shape[0] && gamma.rows() == x.shape[0] && gamma.cols() == x.shape[0],
          ErrorCode::kShapeMismatch, "GDN parameters do not match the channel count");
  require(beta.minCoeff() > 0.0, ErrorCode::kInvalidArgument, "GDN beta must be positive");
  require(gamma.minCoeff() >= 0.0, ErrorCode::kInvalidArgument, "GDN gamma must be non-negative");
  const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(x.values.data(), x.values.size());
  const Eigen::VectorXd out = flatten(gdn_apply(beta, gamma, unflatten(v, x.shape[0]), inverse));
  return LatentTensor(std::vector<double>(out.data(), out.data() + out.size()), x.shape);
}
}  // namespace

LatentTensor gdn(const LatentTensor& x, const Eigen::VectorXd& beta, const Eigen::MatrixXd& gamma) {
  return gdn_tensor(x, beta, gamma, false);
}

LatentTensor igdn(const LatentTensor& x, const Eigen::VectorXd& beta, const Eigen::MatrixXd& gamma) {
  return gdn_tensor(x, beta, gamma, true);
}

Tape forward_with_tape(const ModelParams& params, const Eigen::MatrixXd& x, double lam, const Quantization& q) {
  const auto& c = params.config;
  require(x.rows() == static_cast<Eigen::Index>(c.block_size) * c.block_size, ErrorCode::kShapeMismatch,
          "input rows do not match the model block size");
  Tape t;
  t.params = &params;
  t.revision = params.revision;
  t.lambda = lam;
  t.bracket = bracket(params.gains.grid, lam);
  t.gains = gains_for_lambda(params.gains, lam);
  t.mode = q.mode;
  t.x = x;
  const Eigen::Index n = x.cols();

  t.y = analysis_batch(params, t.gains, x, &t.ae);
  t.y_tilde = apply_quantization(t.y, q.mode, q.noise_y, q.rng, t.noise_y);

  t.rate_main = Eigen::VectorXd::Zero(n);
  t.rate_hyper = Eigen::VectorXd::Zero(n);
  if (c.has_hyperprior()) {
    auto ha = hyper_analysis_batch(params, t.y);
    t.abs_y = std::move(ha.abs_y);
    t.ha_pre1 = std::move(ha.pre1);
    t.ha_pre2 = std::move(ha.pre2);
    t.z = std::move(ha.z);
    t.z_tilde = apply_quantization(t.z, q.mode, q.noise_z, q.rng, t.noise_z);
    auto hs = hyper_synthesis_batch(params, t.z_tilde);
    t.hs_pre1 = std::move(hs.pre1);
    t.hs_pre2 = std::move(hs.pre2);
    t.log_scale = std::move(hs.log_scale);
    t.scale = std::move(hs.scale);

    const auto prep = params.z_density.prepare();
    for (Eigen::Index b = 0; b < n; ++b) {
      double rh = 0.0;
      for (Eigen::Index d = 0; d < t.z_tilde.rows(); ++d)
        rh += params.z_density.bits(prep, static_cast<int>(d), t.z_tilde(d, b));
      t.rate_hyper(b) = rh;
      double rm = 0.0;
      for (Eigen::Index i = 0; i < t.y_tilde.rows(); ++i) rm += gaussian_bits(t.y_tilde(i, b), t.scale(i, b));
      t.rate_main(b) = rm;
    }
  } else {
    const LatentTensor probe(std::vector<double>(static_cast<std::size_t>(c.latent_size())), c.latent_shape());
    const auto prep = params.y_density.prepare();
    for (Eigen::Index b = 0; b < n; ++b) {
      double rm = 0.0;
      for (Eigen::Index i = 0; i < t.y_tilde.rows(); ++i)
        rm += params.y_density.bits(prep, probe.density_dim_of(static_cast<std::size_t>(i)), t.y_tilde(i, b));
      t.rate_main(b) = rm;
    }
  }

  t.x_hat = synthesis_batch(params, t.gains, t.y_tilde, &t.ae);
  t.mse = (t.x_hat - x).array().square().colwise().mean().transpose();
  t.loss = t.rate_main + t.rate_hyper + lam * t.mse;
  return t;
}

ModelParams backward(const Tape& tape, const ModelParams& params, const LossWeights& weights) {
  if (tape.params != &params || tape.revision != params.revision)
    fail(ErrorCode::kStaleTape, "tape was recorded against different parameters");
  if (tape.mode == QuantMode::kHard) fail(ErrorCode::kUnsupported, "hard quantization has no useful gradient");

  const auto& c = params.config;
  const Eigen::Index n = tape.batch();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double w_main = weights.rate_main * inv_n;
  const double w_hyper = weights.rate_hyper * inv_n;
  const double w_dist = (weights.distortion < 0.0 ? tape.lambda : weights.distortion) * inv_n;
  const double pixels = static_cast<double>(tape.x.rows());

  ModelParams grad = params.zeros_like();
  GainSet g_gains = tape.gains.zeros_like();

  // Distortion -> synthesis.
  const Eigen::MatrixXd g_xhat = (w_dist * 2.0 / pixels) * (tape.x_hat - tape.x);
  Eigen::MatrixXd g_ytilde(tape.y_tilde.rows(), n);
  if (c.kind == TransformKind::kLinearDct) {
    const Eigen::MatrixXd g_scaled = dct_operator_cached(c.block_size) * g_xhat;
    const Eigen::VectorXd gain = gain_vector(tape.gains.synthesis[0]);
    g_gains.synthesis[0] = (g_scaled.array() * tape.y_tilde.array()).rowwise().sum().matrix().cwiseProduct(gain);
    g_ytilde = gain.asDiagonal() * g_scaled;
  } else {
    const auto geo = ae_geometry(c);
    for (Eigen::Index b = 0; b < n; ++b) {
      const AeTrace& t = tape.ae[b];
      Eigen::MatrixXd g = Eigen::Map<const Eigen::MatrixXd>(g_xhat.col(b).data(), 1, g_xhat.rows());
      for (int j = 3; j >= 0; --j) {
        g = tconv_backward(params.ae_synthesis[j], t.igdn_out[j], g, geo[3 - j], grad.ae_synthesis[j]);
        g = gdn_backward(params.ae_igdn[j], t.gained[j], g, true, grad.ae_igdn[j]);
        g_gains.synthesis[j] += (g.array() * t.gained[j].array()).rowwise().sum().matrix();
        g = gain_vector(tape.gains.synthesis[j]).asDiagonal() * g;
      }
      g_ytilde.col(b) = flatten(g);
    }
  }

  // Main-latent rate.
  Eigen::MatrixXd g_scale;
  if (c.has_hyperprior()) {
    g_scale.resize(tape.scale.rows(), n);
    for (Eigen::Index b = 0; b < n; ++b)
      for (Eigen::Index i = 0; i < tape.y_tilde.rows(); ++i) {
        double dv = 0.0, ds = 0.0;
        gaussian_bits(tape.y_tilde(i, b), tape.scale(i, b), &dv, &ds);
        g_ytilde(i, b) += w_main * dv;
        g_scale(i, b) = w_main * ds;
      }
  } else {
    const LatentTensor probe(std::vector<double>(static_cast<std::size_t>(c.latent_size())), c.latent_shape());
    const auto prep = params.y_density.prepare();
    for (Eigen::Index b = 0; b < n; ++b)
      for (Eigen::Index i = 0; i < tape.y_tilde.rows(); ++i) {
        double dv = 0.0;
        params.y_density.bits(prep, probe.density_dim_of(static_cast<std::size_t>(i)), tape.y_tilde(i, b),
                              &grad.y_density, w_main, &dv);
        g_ytilde(i, b) += w_main * dv;
      }
  }

  // Additive noise and identity pass-through have unit Jacobian.
  Eigen::MatrixXd g_y = g_ytilde;

  if (c.has_hyperprior()) {
    const Eigen::MatrixXd g_log_scale =
        (tape.log_scale.array().exp() > kScaleMin).select(g_scale.cwiseProduct(tape.scale), 0.0);
    Eigen::MatrixXd g = dense_backward(params.hyper_synthesis[2], relu(tape.hs_pre2), g_log_scale,
                                       grad.hyper_synthesis[2]);
    g = relu_backward(tape.hs_pre2, g);
    g = dense_backward(params.hyper_synthesis[1], relu(tape.hs_pre1), g, grad.hyper_synthesis[1]);
    g = relu_backward(tape.hs_pre1, g);
    Eigen::MatrixXd g_ztilde = dense_backward(params.hyper_synthesis[0], tape.z_tilde, g, grad.hyper_synthesis[0]);

    const auto prep = params.z_density.prepare();
    for (Eigen::Index b = 0; b < n; ++b)
      for (Eigen::Index d = 0; d < tape.z_tilde.rows(); ++d) {
        double dv = 0.0;
        params.z_density.bits(prep, static_cast<int>(d), tape.z_tilde(d, b), &grad.z_density, w_hyper, &dv);
        g_ztilde(d, b) += w_hyper * dv;
      }

    g = dense_backward(params.hyper_analysis[2], relu(tape.ha_pre2), g_ztilde, grad.hyper_analysis[2]);
    g = relu_backward(tape.ha_pre2, g);
    g = dense_backward(params.hyper_analysis[1], relu(tape.ha_pre1), g, grad.hyper_analysis[1]);
    g = relu_backward(tape.ha_pre1, g);
    const Eigen::MatrixXd g_abs = dense_backward(params.hyper_analysis[0], tape.abs_y, g, grad.hyper_analysis[0]);
    g_y.array() += tape.y.array().sign() * g_abs.array();
  }

  // Analysis.
  if (c.kind == TransformKind::kLinearDct) {
    g_gains.analysis[0] = (g_y.array() * tape.y.array()).rowwise().sum().matrix();
  } else {
    const auto geo = ae_geometry(c);
    for (Eigen::Index b = 0; b < n; ++b) {
      const AeTrace& t = tape.ae[b];
      Eigen::MatrixXd g = unflatten(g_y.col(b), c.ae_channels[3]);
      for (int l = 3; l >= 0; --l) {
        const Eigen::VectorXd gain = gain_vector(tape.gains.analysis[l]);
        g_gains.analysis[l] +=
            (g.array() * t.gdn_out[l].array()).rowwise().sum().matrix().cwiseProduct(gain);
        g = gain.asDiagonal() * g;
        g = gdn_backward(params.ae_gdn[l], t.conv_out[l], g, false, grad.ae_gdn[l]);
        g = conv_backward(params.ae_analysis[l], t.conv_in[l], g, geo[l], grad.ae_analysis[l]);
      }
    }
  }

  const auto& br = tape.bracket;
  grad.gains.entries[br.lower].add_scaled(g_gains, 1.0 - br.upper_weight);
  if (br.upper != br.lower) grad.gains.entries[br.upper].add_scaled(g_gains, br.upper_weight);
  return grad;
}

}  // namespace lrc
