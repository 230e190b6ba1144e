#include "lrc/blockio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "lrc/byteio.hpp"
#include "lrc/error.hpp"

namespace lrc {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

void BlockDataset::validate(bool allow_empty) const {
  require(is_power_of_two(block_size), ErrorCode::kInvalidArgument,
          "block size must be a positive power of two");
  require(allow_empty || !blocks.empty(), ErrorCode::kInvalidArgument, "dataset is empty");
  const auto n = static_cast<std::size_t>(block_size) * block_size;
  for (const auto& b : blocks) {
    require(b.size == block_size && b.data.size() == n, ErrorCode::kSizeMismatch,
            "block " + std::to_string(b.block_id) + " does not match dataset block size");
    require(std::all_of(b.data.begin(), b.data.end(), [](float v) { return std::isfinite(v); }),
            ErrorCode::kInvalidArgument, "block " + std::to_string(b.block_id) + " has non-finite entries");
  }
}

BlockDataset parse_blocks(std::span<const std::uint8_t> bytes, int expected_block_size) {
  ByteReader in(bytes);
  if (bytes.size() < kResbHeaderSize) fail(ErrorCode::kMalformedHeader, "RESB header too short");
  if (in.tag(4) != "RESB") fail(ErrorCode::kMalformedHeader, "bad RESB magic");
  const auto version = in.u16();
  if (version != kResbVersion) fail(ErrorCode::kMalformedHeader, "unsupported RESB version " + std::to_string(version));
  const int block_size = in.u16();
  const std::uint32_t count = in.u32();
  const int bitdepth = in.u8();
  in.bytes(3);
  if (!is_power_of_two(block_size)) fail(ErrorCode::kMalformedHeader, "RESB block size is not a power of two");
  if (expected_block_size > 0 && expected_block_size != block_size)
    fail(ErrorCode::kSizeMismatch, "header declares block size " + std::to_string(block_size) + ", expected " +
                                       std::to_string(expected_block_size));

  const std::size_t per_block = static_cast<std::size_t>(block_size) * block_size;
  const std::size_t payload = static_cast<std::size_t>(count) * per_block * 4;
  if (in.remaining() < payload)
    fail(ErrorCode::kTruncated, "RESB payload truncated: " + std::to_string(in.remaining()) + " of " +
                                    std::to_string(payload) + " bytes");
  if (in.remaining() > payload)
    fail(ErrorCode::kSizeMismatch, "RESB payload holds " + std::to_string(in.remaining()) +
                                       " bytes, header implies " + std::to_string(payload));

  BlockDataset ds;
  ds.block_size = block_size;
  ds.bitdepth = bitdepth;
  ds.provenance = Provenance::kFile;
  ds.blocks.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto& b = ds.blocks[i];
    b.size = block_size;
    b.block_id = i;
    b.source_tag = "file";
    b.data.resize(per_block);
    for (auto& v : b.data) v = in.f32();
  }
  return ds;
}

BlockDataset load_blocks(const std::filesystem::path& path, int block_size) {
  return parse_blocks(read_file(path), block_size);
}

BlockDataset load_blocks(const std::filesystem::path& path) { return parse_blocks(read_file(path), 0); }

std::vector<std::uint8_t> serialize_blocks(const BlockDataset& dataset) {
  dataset.validate(/*allow_empty=*/true);
  ByteWriter out;
  out.tag("RESB");
  out.u16(kResbVersion);
  out.u16(static_cast<std::uint16_t>(dataset.block_size));
  out.u32(static_cast<std::uint32_t>(dataset.blocks.size()));
  out.u8(static_cast<std::uint8_t>(dataset.bitdepth));
  out.u8(0);
  out.u8(0);
  out.u8(0);
  for (const auto& b : dataset.blocks)
    for (float v : b.data) out.f32(v);
  return out.take();
}

void write_blocks(const BlockDataset& dataset, const std::filesystem::path& path) {
  if (path.empty()) fail(ErrorCode::kIo, "empty output path");
  write_file(path, serialize_blocks(dataset));
}

BlockDataset synth_residuals(std::uint64_t seed, int count, int block_size, double rho, double sigma) {
  require(count > 0, ErrorCode::kInvalidArgument, "count must be positive");
  require(is_power_of_two(block_size), ErrorCode::kInvalidArgument, "block size must be a power of two");
  require(rho >= 0.0 && rho < 1.0, ErrorCode::kInvalidArgument, "rho must lie in [0, 1)");
  require(sigma > 0.0, ErrorCode::kInvalidArgument, "sigma must be positive");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double edge = sigma * std::sqrt(1.0 - rho * rho);
  const double inner = sigma * (1.0 - rho * rho);
  const int n = block_size;

  BlockDataset ds;
  ds.block_size = n;
  ds.provenance = Provenance::kSynthetic;
  ds.blocks.resize(count);
  std::vector<double> f(static_cast<std::size_t>(n) * n);
  for (int k = 0; k < count; ++k) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double e = normal(rng);
        double v;
        if (i == 0 && j == 0) {
          v = sigma * e;
        } else if (i == 0) {
          v = rho * f[j - 1] + edge * e;
        } else if (j == 0) {
          v = rho * f[(i - 1) * n] + edge * e;
        } else {
          v = rho * f[(i - 1) * n + j] + rho * f[i * n + j - 1] - rho * rho * f[(i - 1) * n + j - 1] + inner * e;
        }
        f[i * n + j] = v;
      }
    }
    auto& b = ds.blocks[k];
    b.size = n;
    b.block_id = k;
    b.source_tag = "synthetic";
    b.data.assign(f.begin(), f.end());
  }
  return ds;
}

std::pair<BlockDataset, BlockDataset> split(const BlockDataset& dataset, double train_fraction,
                                            std::uint64_t seed) {
  require(!dataset.empty(), ErrorCode::kInvalidArgument, "cannot split an empty dataset");
  require(train_fraction > 0.0 && train_fraction < 1.0, ErrorCode::kInvalidArgument,
          "train fraction must lie in (0, 1)");
  const std::size_t n = dataset.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  require(n_train > 0 && n_train < n, ErrorCode::kInvalidArgument,
          "split would leave the training or validation side empty");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  BlockDataset train, val;
  for (auto* d : {&train, &val}) {
    d->block_size = dataset.block_size;
    d->bitdepth = dataset.bitdepth;
    d->provenance = dataset.provenance;
  }
  for (std::size_t i = 0; i < n; ++i) (i < n_train ? train : val).blocks.push_back(dataset.blocks[order[i]]);
  return {std::move(train), std::move(val)};
}

}  // namespace lrc
