#include "lrc/model.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "lrc/byteio.hpp"
#include "lrc/error.hpp"
#include "lrc/sha256.hpp"

namespace lrc {

const char* to_string(TransformKind kind) {
  return kind == TransformKind::kLinearDct ? "linear_dct" : "nonlinear_ae";
}
const char* to_string(EntropyKind kind) { return kind == EntropyKind::kHyperprior ? "hyperprior" : "factorized"; }

std::array<int, 5> ModelConfig::ae_sizes() const {
  std::array<int, 5> s{block_size, 0, 0, 0, 0};
  for (int i = 0; i < 4; ++i) s[i + 1] = (s[i] + ae_strides[i] - 1) / ae_strides[i];
  return s;
}

std::vector<int> ModelConfig::latent_shape() const {
  if (kind == TransformKind::kLinearDct) return {block_size * block_size};
  const auto s = ae_sizes();
  return {ae_channels[3], s[4], s[4]};
}

int ModelConfig::latent_size() const {
  int n = 1;
  for (int d : latent_shape()) n *= d;
  return n;
}

std::vector<int> ModelConfig::analysis_gain_sizes() const {
  if (kind == TransformKind::kLinearDct) return {block_size * block_size};
  return {ae_channels[0], ae_channels[1], ae_channels[2], ae_channels[3]};
}

std::vector<int> ModelConfig::synthesis_gain_sizes() const {
  if (kind == TransformKind::kLinearDct) return {block_size * block_size};
  return {ae_channels[3], ae_channels[2], ae_channels[1], ae_channels[0]};
}

void ModelConfig::validate() const {
  require(block_size >= 2 && (block_size & (block_size - 1)) == 0, ErrorCode::kInvalidArgument,
          "block size must be a power of two >= 2");
  require(!lambda_grid.empty(), ErrorCode::kInvalidArgument, "lambda grid is empty");
  for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
    require(lambda_grid[i] > 0.0 && std::isfinite(lambda_grid[i]), ErrorCode::kInvalidArgument,
            "lambda values must be positive");
    if (i > 0)
      require(lambda_grid[i] > lambda_grid[i - 1], ErrorCode::kInvalidArgument, "lambda grid must be increasing");
  }
  for (int w : hyper_widths) require(w > 0, ErrorCode::kInvalidArgument, "hyper widths must be positive");
  for (int i = 0; i < 4; ++i)
    require(ae_channels[i] > 0 && ae_kernels[i] > 0 && ae_strides[i] > 0, ErrorCode::kInvalidArgument,
            "autoencoder layer sizes must be positive");
}

ModelConfig miniature_config(TransformKind kind, EntropyKind entropy, std::vector<double> grid) {
  ModelConfig c;
  c.kind = kind;
  c.entropy = entropy;
  c.block_size = 4;
  c.hyper_widths = {8, 4, 2};
  c.ae_channels = {8, 8, 4, 4};
  c.lambda_grid = std::move(grid);
  return c;
}

namespace {

template <class Params, class F>
void visit(Params& p, F&& f) {
  const auto& c = p.config;
  for (std::size_t i = 0; i < p.gains.entries.size(); ++i) {
    auto& e = p.gains.entries[i];
    for (std::size_t l = 0; l < e.analysis.size(); ++l)
      f("gain." + std::to_string(i) + ".analysis." + std::to_string(l), e.analysis[l].data(), e.analysis[l].size());
    for (std::size_t l = 0; l < e.synthesis.size(); ++l)
      f("gain." + std::to_string(i) + ".synthesis." + std::to_string(l), e.synthesis[l].data(),
        e.synthesis[l].size());
  }
  if (c.kind == TransformKind::kNonlinearAe) {
    for (int l = 0; l < 4; ++l) {
      const std::string a = "ae.analysis." + std::to_string(l);
      f(a + ".weight", p.ae_analysis[l].weight.data(), p.ae_analysis[l].weight.size());
      f(a + ".bias", p.ae_analysis[l].bias.data(), p.ae_analysis[l].bias.size());
      f(a + ".gdn.beta", p.ae_gdn[l].beta_raw.data(), p.ae_gdn[l].beta_raw.size());
      f(a + ".gdn.gamma", p.ae_gdn[l].gamma_raw.data(), p.ae_gdn[l].gamma_raw.size());
    }
    for (int l = 0; l < 4; ++l) {
      const std::string s = "ae.synthesis." + std::to_string(l);
      f(s + ".igdn.beta", p.ae_igdn[l].beta_raw.data(), p.ae_igdn[l].beta_raw.size());
      f(s + ".igdn.gamma", p.ae_igdn[l].gamma_raw.data(), p.ae_igdn[l].gamma_raw.size());
      f(s + ".weight", p.ae_synthesis[l].weight.data(), p.ae_synthesis[l].weight.size());
      f(s + ".bias", p.ae_synthesis[l].bias.data(), p.ae_synthesis[l].bias.size());
    }
  }
  if (c.has_hyperprior()) {
    for (int l = 0; l < 3; ++l) {
      f("hyper.analysis." + std::to_string(l) + ".weight", p.hyper_analysis[l].weight.data(),
        p.hyper_analysis[l].weight.size());
      f("hyper.analysis." + std::to_string(l) + ".bias", p.hyper_analysis[l].bias.data(),
        p.hyper_analysis[l].bias.size());
    }
    for (int l = 0; l < 3; ++l) {
      f("hyper.synthesis." + std::to_string(l) + ".weight", p.hyper_synthesis[l].weight.data(),
        p.hyper_synthesis[l].weight.size());
      f("hyper.synthesis." + std::to_string(l) + ".bias", p.hyper_synthesis[l].bias.data(),
        p.hyper_synthesis[l].bias.size());
    }
  }
  auto density = [&](const std::string& tag, auto& d) {
    if (d.dims() == 0) return;
    for (int k = 0; k < FactorizedDensity::kLayers; ++k) {
      f("density." + tag + ".matrix." + std::to_string(k), d.matrices[k].data(), d.matrices[k].size());
      f("density." + tag + ".bias." + std::to_string(k), d.biases[k].data(), d.biases[k].size());
      if (k < FactorizedDensity::kLayers - 1)
        f("density." + tag + ".factor." + std::to_string(k), d.factors[k].data(), d.factors[k].size());
    }
  };
  density("z", p.z_density);
  density("y", p.y_density);
}

DenseParams dense_init(int in, int out, bool relu_follows, std::mt19937_64& rng) {
  const double bound = relu_follows ? std::sqrt(6.0 / in) : std::sqrt(6.0 / (in + out));
  std::uniform_real_distribution<double> u(-bound, bound);
  DenseParams d;
  d.weight.resize(out, in);
  for (Eigen::Index j = 0; j < d.weight.cols(); ++j)
    for (Eigen::Index i = 0; i < d.weight.rows(); ++i) d.weight(i, j) = u(rng);
  d.bias = Eigen::VectorXd::Zero(out);
  return d;
}

ConvParams conv_init(int rows, int cols, int bias_size, double fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> u(-bound, bound);
  ConvParams c;
  c.weight.resize(rows, cols);
  for (Eigen::Index j = 0; j < c.weight.cols(); ++j)
    for (Eigen::Index i = 0; i < c.weight.rows(); ++i) c.weight(i, j) = u(rng);
  c.bias = Eigen::VectorXd::Zero(bias_size);
  return c;
}

}  // namespace

std::vector<ParamView> param_views(ModelParams& params) {
  std::vector<ParamView> views;
  visit(params, [&](const std::string& name, double* data, Eigen::Index n) {
    views.push_back({name, std::span<double>(data, static_cast<std::size_t>(n))});
  });
  return views;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  for (auto& v : param_views(z)) std::fill(v.values.begin(), v.values.end(), 0.0);
  z.revision = 0;
  return z;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  visit(*this, [&](const std::string&, const double*, Eigen::Index k) { n += static_cast<std::size_t>(k); });
  return n;
}

std::size_t ModelParams::shared_parameter_count() const {
  std::size_t n = 0;
  visit(*this, [&](const std::string& name, const double*, Eigen::Index k) {
    if (name.rfind("gain.", 0) != 0) n += static_cast<std::size_t>(k);
  });
  return n;
}

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.config = config;

  // Initial gains place the effective quantizer step near the high-rate
  // optimum for a per-pixel MSE weight of lambda: step^2 = 6 B^2 / (lambda ln 2).
  const double pixels = static_cast<double>(config.block_size) * config.block_size;
  p.gains.grid = config.lambda_grid;
  for (double lam : config.lambda_grid) {
    const double log_gain = -0.5 * std::log(6.0 * pixels / (lam * std::log(2.0)));
    GainSet g;
    const auto a_sizes = config.analysis_gain_sizes();
    const auto s_sizes = config.synthesis_gain_sizes();
    for (std::size_t l = 0; l < a_sizes.size(); ++l)
      g.analysis.push_back(Eigen::VectorXd::Constant(a_sizes[l], l + 1 == a_sizes.size() ? log_gain : 0.0));
    for (std::size_t l = 0; l < s_sizes.size(); ++l)
      g.synthesis.push_back(Eigen::VectorXd::Constant(s_sizes[l], l == 0 ? -log_gain : 0.0));
    p.gains.entries.push_back(std::move(g));
  }

  if (config.kind == TransformKind::kNonlinearAe) {
    std::array<int, 5> ch{1, config.ae_channels[0], config.ae_channels[1], config.ae_channels[2],
                          config.ae_channels[3]};
    for (int l = 0; l < 4; ++l) {
      const int k2 = config.ae_kernels[l] * config.ae_kernels[l];
      p.ae_analysis.push_back(conv_init(ch[l + 1], ch[l] * k2, ch[l + 1], ch[l] * k2, rng));
      p.ae_gdn.push_back(GdnParams::init(ch[l + 1]));
    }
    for (int j = 0; j < 4; ++j) {
      const int l = 3 - j;  // mirrored analysis layer
      const int k2 = config.ae_kernels[l] * config.ae_kernels[l];
      p.ae_igdn.push_back(GdnParams::init(ch[l + 1]));
      // Stored as the convolution it is the adjoint of; each output pixel of
      // the tconv sees about k^2 / stride^2 taps per input channel.
      const double taps = static_cast<double>(k2) / (config.ae_strides[l] * config.ae_strides[l]);
      p.ae_synthesis.push_back(conv_init(ch[l + 1], ch[l] * k2, ch[l], ch[l + 1] * taps, rng));
    }
  }

  if (config.has_hyperprior()) {
    const int m = config.latent_size();
    const auto& w = config.hyper_widths;
    p.hyper_analysis = {dense_init(m, w[0], true, rng), dense_init(w[0], w[1], true, rng),
                        dense_init(w[1], w[2], false, rng)};
    p.hyper_synthesis = {dense_init(w[2], w[1], true, rng), dense_init(w[1], w[0], true, rng),
                         dense_init(w[0], m, false, rng)};
    p.z_density = FactorizedDensity(w[2]);
  } else {
    p.y_density = FactorizedDensity(config.kind == TransformKind::kLinearDct ? config.latent_size()
                                                                              : config.ae_channels[3]);
  }
  return p;
}

void round_to_float(ModelParams& params) {
  for (auto& v : param_views(params))
    for (double& x : v.values) x = static_cast<double>(static_cast<float>(x));
}

namespace {
constexpr std::uint16_t kModelVersion = 1;

std::vector<std::uint8_t> serialize_payload(const ModelParams& params) {
  const auto& c = params.config;
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(c.kind));
  w.u8(static_cast<std::uint8_t>(c.entropy));
  w.u16(static_cast<std::uint16_t>(c.block_size));
  for (int v : c.ae_channels) w.u16(static_cast<std::uint16_t>(v));
  for (int v : c.ae_kernels) w.u8(static_cast<std::uint8_t>(v));
  for (int v : c.ae_strides) w.u8(static_cast<std::uint8_t>(v));
  for (int v : c.hyper_widths) w.u16(static_cast<std::uint16_t>(v));
  w.u16(static_cast<std::uint16_t>(c.lambda_grid.size()));
  for (double lam : c.lambda_grid) w.f64(lam);
  visit(params, [&](const std::string& name, const double* data, Eigen::Index n) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.tag(name);
    w.u32(static_cast<std::uint32_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) w.f32(static_cast<float>(data[i]));
  });
  return w.take();
}
}  // namespace

std::vector<std::uint8_t> serialize_model(const ModelParams& params) {
  const auto payload = serialize_payload(params);
  const auto hash = sha256(payload);
  ByteWriter w;
  w.tag("RCMP");
  w.u16(kModelVersion);
  w.bytes(hash);
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.bytes(payload);
  return w.take();
}

ModelParams parse_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 42 || r.tag(4) != "RCMP") fail(ErrorCode::kMalformedHeader, "not an RCMP model file");
  if (r.u16() != kModelVersion) fail(ErrorCode::kMalformedHeader, "unsupported RCMP version");
  ModelHash stored{};
  auto h = r.bytes(32);
  std::copy(h.begin(), h.end(), stored.begin());
  const std::uint32_t len = r.u32();
  if (r.remaining() < len) fail(ErrorCode::kTruncated, "RCMP payload truncated");
  if (r.remaining() > len) fail(ErrorCode::kSizeMismatch, "trailing bytes after RCMP payload");
  const auto payload = r.bytes(len);
  if (sha256(payload) != stored) fail(ErrorCode::kCorrupt, "RCMP payload hash mismatch");

  ByteReader pr(payload);
  ModelConfig c;
  const auto kind = pr.u8(), entropy = pr.u8();
  if (kind > 1 || entropy > 1) fail(ErrorCode::kMalformedHeader, "unknown model kind");
  c.kind = static_cast<TransformKind>(kind);
  c.entropy = static_cast<EntropyKind>(entropy);
  c.block_size = pr.u16();
  for (int& v : c.ae_channels) v = pr.u16();
  for (int& v : c.ae_kernels) v = pr.u8();
  for (int& v : c.ae_strides) v = pr.u8();
  for (int& v : c.hyper_widths) v = pr.u16();
  c.lambda_grid.resize(pr.u16());
  for (double& lam : c.lambda_grid) lam = pr.f64();
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kMalformedHeader, std::string("invalid model configuration: ") + e.what());
  }

  ModelParams p = init_model(c, 0);
  for (auto& view : param_views(p)) {
    const std::string name = pr.tag(pr.u16());
    const std::uint32_t n = pr.u32();
    if (name != view.name || n != view.values.size())
      fail(ErrorCode::kCorrupt, "unexpected parameter group '" + name + "' (expected '" + view.name + "')");
    for (double& v : view.values) v = pr.f32();
  }
  if (pr.remaining() != 0) fail(ErrorCode::kCorrupt, "extra parameter data in RCMP payload");
  return p;
}

void save_model(const ModelParams& params, const std::filesystem::path& path) {
  write_file(path, serialize_model(params));
}

ModelParams load_model(const std::filesystem::path& path) { return parse_model(read_file(path)); }

ModelHash model_hash(const ModelParams& params) { return sha256(serialize_payload(params)); }

std::string to_hex(const ModelHash& hash) {
  std::string s;
  char buf[3];
  for (auto b : hash) {
    std::snprintf(buf, sizeof buf, "%02x", b);
    s += buf;
  }
  return s;
}

}  // namespace lrc
