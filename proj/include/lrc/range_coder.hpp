#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace lrc {

inline constexpr int kFreqBits = 16;
inline constexpr std::uint32_t kFreqTotal = 1u << kFreqBits;

/// Cumulative frequency table over an alphabet of size() symbols:
/// cdf[0] = 0, cdf[size()] = 65536, strictly increasing.
class DiscreteCdf {
 public:
  DiscreteCdf() = default;
  /// Validates the table; alphabets of fewer than two symbols are rejected.
  explicit DiscreteCdf(std::vector<std::uint32_t> cdf);
  static DiscreteCdf from_frequencies(std::span<const std::uint32_t> freqs);
  static DiscreteCdf uniform(int symbols);

  int size() const { return static_cast<int>(cdf_.size()) - 1; }
  std::uint32_t start(int s) const { return cdf_[s]; }
  std::uint32_t freq(int s) const { return cdf_[s + 1] - cdf_[s]; }
  /// Symbol whose interval contains slot (0 <= slot < 65536).
  int lookup(std::uint32_t slot) const;
  const std::vector<std::uint32_t>& table() const { return cdf_; }

 private:
  std::vector<std::uint32_t> cdf_;
};

/// Byte-oriented rANS coder with a 32-bit state in [2^23, 2^31) and
/// 16-bit frequency precision. Symbols are buffered and coded in reverse
/// on finish(), so the decoder reads them in push order. A non-empty
/// stream costs its information content plus at most 32 bits.
class RangeEncoder {
 public:
  void put(const DiscreteCdf& cdf, int symbol);
  /// Up to 16 raw bits, coded at exactly one bit per bit.
  void put_raw(std::uint32_t value, int nbits);
  std::vector<std::uint8_t> finish();
  std::size_t pending() const { return ops_.size(); }

 private:
  struct Op {
    std::uint32_t start, freq;
  };
  std::vector<Op> ops_;
};

class RangeDecoder {
 public:
  /// Throws kTruncated when bytes is shorter than the 4-byte state.
  explicit RangeDecoder(std::span<const std::uint8_t> bytes, bool expect_symbols = true);
  int get(const DiscreteCdf& cdf);
  std::uint32_t get_raw(int nbits);
  /// Throws kCorrupt unless the final state and consumed length match what
  /// the encoder produced.
  void finish() const;

 private:
  void advance(std::uint32_t start, std::uint32_t freq);
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::uint32_t state_ = 0;
  bool empty_ = false;
};

/// Codes one symbol per table entry.
std::vector<std::uint8_t> range_encode(std::span<const int> symbols, std::span<const DiscreteCdf* const> cdfs);
std::vector<int> range_decode(std::span<const std::uint8_t> bytes, std::span<const DiscreteCdf* const> cdfs);

/// Integer latent alphabet [min_value, max_value] plus a trailing escape
/// symbol. Escaped values are followed by their 16-bit two's complement.
struct LatentTable {
  int min_value = 0;
  int max_value = 0;
  DiscreteCdf cdf;  // max_value - min_value + 2 symbols, escape last

  int escape_symbol() const { return max_value - min_value + 1; }
  bool in_support(int v) const { return v >= min_value && v <= max_value; }
  /// Ideal code length in bits of value v under this table (escape
  /// symbol plus 16 raw bits for out-of-support values).
  double code_length(int v) const;
};

inline constexpr int kEscapeRawBits = 16;

void encode_latent(RangeEncoder& enc, const LatentTable& table, int value);
int decode_latent(RangeDecoder& dec, const LatentTable& table);

std::vector<std::uint8_t> encode_latents(std::span<const int> values, std::span<const LatentTable* const> tables);
std::vector<int> decode_latents(std::span<const std::uint8_t> bytes, std::span<const LatentTable* const> tables);

}  // namespace lrc
