#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lrc {

/// One B x B prediction-residual block, raster order.
struct ResidualBlock {
  int size = 0;
  std::vector<float> data;
  std::int64_t block_id = 0;
  std::string source_tag;

  float at(int row, int col) const { return data[static_cast<std::size_t>(row) * size + col]; }
  float& at(int row, int col) { return data[static_cast<std::size_t>(row) * size + col]; }

  /// Pixel content equality; ids and tags are bookkeeping only.
  friend bool operator==(const ResidualBlock& a, const ResidualBlock& b) {
    return a.size == b.size && a.data == b.data;
  }
};

enum class Provenance : std::uint8_t { kFile, kSynthetic };

struct BlockDataset {
  std::vector<ResidualBlock> blocks;
  int block_size = 32;
  int bitdepth = 8;
  Provenance provenance = Provenance::kFile;

  std::size_t size() const { return blocks.size(); }
  bool empty() const { return blocks.empty(); }

  /// Throws kInvalidArgument when blocks disagree on size, the block size
  /// is not a power of two, or an entry is non-finite.
  void validate(bool allow_empty = false) const;

  friend bool operator==(const BlockDataset& a, const BlockDataset& b) {
    return a.block_size == b.block_size && a.bitdepth == b.bitdepth && a.blocks == b.blocks;
  }
};

bool is_power_of_two(int v);

// RESB container: "RESB", u16 version=1, u16 block_size, u32 count,
// u8 bitdepth, 3 reserved bytes, then count * block_size^2 float32 LE.
inline constexpr std::uint16_t kResbVersion = 1;
inline constexpr std::size_t kResbHeaderSize = 16;

BlockDataset load_blocks(const std::filesystem::path& path, int block_size);
/// block_size taken from the header.
BlockDataset load_blocks(const std::filesystem::path& path);
BlockDataset parse_blocks(std::span<const std::uint8_t> bytes, int expected_block_size);
std::vector<std::uint8_t> serialize_blocks(const BlockDataset& dataset);
void write_blocks(const BlockDataset& dataset, const std::filesystem::path& path);

/// Separable first-order autoregressive Gaussian fields, generated in
/// raster order. Entry correlation is rho^(|di| + |dj|) and the marginal
/// standard deviation is sigma.
BlockDataset synth_residuals(std::uint64_t seed, int count, int block_size, double rho,
                             double sigma);

/// Seeded random partition into (train, validation). Throws when either
/// side would be empty.
std::pair<BlockDataset, BlockDataset> split(const BlockDataset& dataset, double train_fraction,
                                            std::uint64_t seed);

}  // namespace lrc
