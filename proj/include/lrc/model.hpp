#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lrc/factorized_density.hpp"
#include "lrc/multirate.hpp"
#include "lrc/nn.hpp"

namespace lrc {

enum class TransformKind : std::uint8_t { kLinearDct = 0, kNonlinearAe = 1 };
enum class EntropyKind : std::uint8_t { kFactorized = 0, kHyperprior = 1 };

const char* to_string(TransformKind kind);
const char* to_string(EntropyKind kind);

struct ModelConfig {
  TransformKind kind = TransformKind::kLinearDct;
  EntropyKind entropy = EntropyKind::kHyperprior;
  int block_size = 32;
  std::array<int, 4> ae_channels{256, 128, 64, 64};
  std::array<int, 4> ae_kernels{5, 5, 3, 3};
  std::array<int, 4> ae_strides{2, 2, 1, 1};
  std::array<int, 3> hyper_widths{256, 128, 64};
  std::vector<double> lambda_grid = default_lambda_grid();

  bool has_hyperprior() const { return entropy == EntropyKind::kHyperprior; }
  /// (B*B) for the linear path, (C, B/4, B/4) for the autoencoder.
  std::vector<int> latent_shape() const;
  int latent_size() const;
  int hyper_latent_size() const { return hyper_widths[2]; }
  /// Spatial size of each autoencoder activation, index 0 = input.
  std::array<int, 5> ae_sizes() const;
  std::vector<int> analysis_gain_sizes() const;
  std::vector<int> synthesis_gain_sizes() const;
  void validate() const;
};

/// Small configuration used by gradient checks and quick tests:
/// B = 4, hyper widths {8, 4, 2}, autoencoder widths {8, 8, 4, 4}.
ModelConfig miniature_config(TransformKind kind, EntropyKind entropy, std::vector<double> grid);

/// Every trainable parameter. The lambda-independent part is shared by the
/// whole grid; `gains` holds one GainSet per grid lambda.
struct ModelParams {
  ModelConfig config;
  GainTable gains;
  std::vector<ConvParams> ae_analysis;   // conv layers
  std::vector<GdnParams> ae_gdn;         // after each analysis conv
  std::vector<ConvParams> ae_synthesis;  // transposed convs, mirror order
  std::vector<GdnParams> ae_igdn;        // before each synthesis tconv
  std::array<DenseParams, 3> hyper_analysis;
  std::array<DenseParams, 3> hyper_synthesis;
  FactorizedDensity z_density;  // hyper-latents (hyperprior models)
  FactorizedDensity y_density;  // main latents (factorized models)
  /// Bumped whenever the parameters are updated in place.
  std::uint64_t revision = 0;

  ModelParams zeros_like() const;
  std::size_t parameter_count() const;
  /// Parameters that do not depend on lambda.
  std::size_t shared_parameter_count() const;
};

ModelParams init_model(const ModelConfig& config, std::uint64_t seed);

/// Named parameter view in the fixed serialization order.
struct ParamView {
  std::string name;
  std::span<double> values;
};
std::vector<ParamView> param_views(ModelParams& params);

/// Rounds every parameter to the nearest binary32 value (the precision the
/// model file stores).
void round_to_float(ModelParams& params);

std::vector<std::uint8_t> serialize_model(const ModelParams& params);
ModelParams parse_model(std::span<const std::uint8_t> bytes);
void save_model(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);

using ModelHash = std::array<std::uint8_t, 32>;
/// SHA-256 of the serialized payload, as stored in the model header.
ModelHash model_hash(const ModelParams& params);
std::string to_hex(const ModelHash& hash);

}  // namespace lrc
