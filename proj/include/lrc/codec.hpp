#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lrc/blockio.hpp"
#include "lrc/inference.hpp"
#include "lrc/model.hpp"

namespace lrc {

// RCBS container: "RCBS", u16 version, 32-byte model hash, f64 lambda,
// u32 block count, u16 block size, u8 bitdepth; then per block
// u32 record length, u16 hyper-section bit length, hyper bytes, main bytes.
inline constexpr std::uint16_t kRcbsVersion = 1;

struct BlockPayload {
  std::vector<std::uint8_t> hyper;
  std::vector<std::uint8_t> main;
};

struct Bitstream {
  ModelHash model_hash{};
  double lambda = 0.0;
  int block_size = 0;
  int bitdepth = 8;
  std::vector<BlockPayload> blocks;

  /// Range-coded bits (hyper + main sections), framing excluded.
  std::uint64_t coded_bits() const;
};

std::vector<std::uint8_t> serialize_bitstream(const Bitstream& stream);
/// Header and framing only; sections are not entropy-decoded.
Bitstream parse_bitstream(std::span<const std::uint8_t> bytes);

struct EncodeResult {
  Bitstream stream;
  /// Encoder-side reconstructions; the decoder reproduces them exactly.
  BlockDataset reconstruction;
  /// Model rate estimate of the coded latents in bits, per block.
  std::vector<double> estimated_bits;
  std::vector<double> estimated_hyper_bits;

  double total_estimated_bits() const;
};

/// Codes one block. Exposed for tests; `encode` runs it over a dataset.
BlockPayload encode_block(const FrozenModel& model, std::span<const float> x, std::vector<float>* x_hat = nullptr,
                          double* estimated_bits = nullptr, double* estimated_hyper_bits = nullptr);
std::vector<float> decode_block(const FrozenModel& model, const BlockPayload& payload);

/// threads <= 0 means one worker. Output does not depend on the count.
EncodeResult encode(const ModelParams& params, const BlockDataset& dataset, double lam, int threads = 1);
/// Throws kHashMismatch before touching any block when the stream was made
/// with a different model.
BlockDataset decode(const ModelParams& params, const Bitstream& stream, int threads = 1);
BlockDataset decode(const ModelParams& params, std::span<const std::uint8_t> bytes, int threads = 1);

}  // namespace lrc
