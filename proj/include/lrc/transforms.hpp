#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "lrc/blockio.hpp"
#include "lrc/latent.hpp"
#include "lrc/model.hpp"

namespace lrc {

// Analysis / synthesis / hyper transforms in double precision, batched with
// one column per block, plus the recorded forward pass and its exact
// reverse-mode gradient.

/// Single-block transforms.
LatentTensor analysis(const ModelParams& params, const ResidualBlock& x, double lam);
ResidualBlock synthesis(const ModelParams& params, const LatentTensor& y_hat, double lam);
/// z = MLP(|y|). Throws kUnsupported on factorized-only models.
LatentTensor hyper_analysis(const ModelParams& params, const LatentTensor& y);
/// Phi = max(exp(MLP(z_hat)), 1e-3).
ScaleField hyper_synthesis(const ModelParams& params, const LatentTensor& z_hat);

/// GDN on a (C, H, W) tensor with explicit beta / gamma (and its
/// one-step multiplicative inverse).
LatentTensor gdn(const LatentTensor& x, const Eigen::VectorXd& beta, const Eigen::MatrixXd& gamma);
LatentTensor igdn(const LatentTensor& x, const Eigen::VectorXd& beta, const Eigen::MatrixXd& gamma);

/// Blocks as a (B*B) x n matrix, raster order per column.
Eigen::MatrixXd blocks_to_matrix(const BlockDataset& ds, std::size_t begin, std::size_t end);
Eigen::MatrixXd blocks_to_matrix(const BlockDataset& ds);

enum class QuantMode {
  kNone,    // latents pass through untouched
  kDither,  // additive U(-1/2, 1/2) noise (training)
  kHard,    // rounding (test time)
};

/// How latents are quantized during a recorded pass. Dither noise is
/// drawn from rng unless explicit noise matrices are supplied.
struct Quantization {
  QuantMode mode = QuantMode::kHard;
  std::mt19937_64* rng = nullptr;
  const Eigen::MatrixXd* noise_y = nullptr;
  const Eigen::MatrixXd* noise_z = nullptr;

  static Quantization none() { return {QuantMode::kNone}; }
  static Quantization hard() { return {QuantMode::kHard}; }
  static Quantization dither(std::mt19937_64& rng) { return {QuantMode::kDither, &rng}; }
  static Quantization fixed(const Eigen::MatrixXd& noise_y, const Eigen::MatrixXd& noise_z) {
    return {QuantMode::kDither, nullptr, &noise_y, &noise_z};
  }
};

/// Per-block intermediates of the autoencoder path.
struct AeTrace {
  std::array<Eigen::MatrixXd, 4> conv_in, conv_out, gdn_out;  // analysis
  std::array<Eigen::MatrixXd, 5> syn_in;                      // synthesis layer inputs + output
  std::array<Eigen::MatrixXd, 4> gained, igdn_out;
};

/// Everything the backward pass needs from one forward evaluation.
struct Tape {
  const ModelParams* params = nullptr;
  std::uint64_t revision = 0;
  double lambda = 0.0;
  GridBracket bracket;
  GainSet gains;
  QuantMode mode = QuantMode::kHard;

  Eigen::MatrixXd x;  // pixels x n
  Eigen::MatrixXd y;  // latents x n (after analysis gains)
  Eigen::MatrixXd noise_y, noise_z;
  Eigen::MatrixXd y_tilde;
  // Hyperprior path.
  Eigen::MatrixXd abs_y, ha_pre1, ha_pre2, z, z_tilde, hs_pre1, hs_pre2, log_scale, scale;
  std::vector<AeTrace> ae;
  Eigen::MatrixXd x_hat;

  Eigen::VectorXd rate_main;   // bits per block
  Eigen::VectorXd rate_hyper;  // bits per block
  Eigen::VectorXd mse;         // per block
  Eigen::VectorXd loss;        // rate_main + rate_hyper + lambda * mse

  Eigen::Index batch() const { return x.cols(); }
  double mean_loss() const { return loss.mean(); }
};

/// Full train-time (or test-time, with hard quantization) pass over a batch.
Tape forward_with_tape(const ModelParams& params, const Eigen::MatrixXd& x, double lam, const Quantization& q);

/// Weights of the scalar objective mean_b(rate_main * w_main +
/// rate_hyper * w_hyper + mse * w_distortion); a negative distortion
/// weight means "use the tape's lambda".
struct LossWeights {
  double rate_main = 1.0;
  double rate_hyper = 1.0;
  double distortion = -1.0;
};

/// Exact gradient of the weighted objective with respect to every
/// parameter. Throws kStaleTape when params changed since the tape was
/// recorded, kUnsupported for hard-quantized tapes.
ModelParams backward(const Tape& tape, const ModelParams& params, const LossWeights& weights = {});

}  // namespace lrc
