#pragma once

#include <span>
#include <vector>

#include "lrc/model.hpp"
#include "lrc/range_coder.hpp"

namespace lrc {

/// Test-time model for one lambda in IEEE-754 binary32, evaluated one block
/// at a time with fixed loop order. Encoder and decoder both run this path,
/// which is what makes their reconstructions bit-identical.
class FrozenModel {
 public:
  FrozenModel(const ModelParams& params, double lam);

  const ModelConfig& config() const { return config_; }
  double lambda() const { return lambda_; }
  int pixels() const { return config_.block_size * config_.block_size; }
  int latent_size() const { return latent_size_; }

  std::vector<float> analysis(std::span<const float> x) const;
  std::vector<float> synthesis(std::span<const float> y_hat) const;
  std::vector<float> hyper_analysis(std::span<const float> y) const;
  /// Natural log of the conditional scales, before the lower clamp.
  std::vector<float> hyper_log_scale(std::span<const float> z_hat) const;

  /// Tables of the factorized model: hyper-latents for hyperprior models,
  /// main-latent dimensions otherwise.
  const LatentTable& factorized_table(int dim) const { return tables_[dim]; }
  /// Factorized dimension used by main-latent element i.
  int main_density_dim(int i) const;

  /// The parameters the frozen copy was built from, rounded to binary32 as
  /// a model file stores them.
  const ModelParams& params() const { return params_; }

 private:
  struct Dense {
    int in = 0, out = 0;
    std::vector<float> w;  // row-major out x in
    std::vector<float> b;
  };
  struct Conv {
    int in_ch = 0, out_ch = 0, k = 1, stride = 1, in_size = 0, out_size = 0, pad = 0;
    std::vector<float> w;  // out_ch x (in_ch * k * k), row-major
    std::vector<float> b;
  };
  struct Gdn {
    int ch = 0;
    std::vector<float> beta;
    std::vector<float> gamma;  // row-major ch x ch
  };

  static Dense freeze(const DenseParams& p);
  static Gdn freeze(const GdnParams& p);
  static void dense(const Dense& d, const float* in, float* out, bool relu);
  static std::vector<float> conv(const Conv& c, const std::vector<float>& x);
  static std::vector<float> tconv(const Conv& c, const std::vector<float>& u);
  static void gdn(const Gdn& g, std::vector<float>& x, int spatial, bool inverse);

  ModelParams params_;
  ModelConfig config_;
  double lambda_;
  int latent_size_;
  std::vector<float> dct_;  // row-major B x B, rows are frequencies
  std::vector<std::vector<float>> gain_a_, gain_s_;
  std::array<Dense, 3> ha_, hs_;
  std::array<Conv, 4> conv_a_, conv_s_;
  std::array<Gdn, 4> gdn_a_, gdn_s_;
  std::vector<LatentTable> tables_;
};

}  // namespace lrc
