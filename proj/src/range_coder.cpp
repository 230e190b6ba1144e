#include "lrc/range_coder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lrc/error.hpp"

namespace lrc {

namespace {
constexpr std::uint32_t kStateLow = 1u << 23;
}

DiscreteCdf::DiscreteCdf(std::vector<std::uint32_t> cdf) : cdf_(std::move(cdf)) {
  require(cdf_.size() >= 3, ErrorCode::kInvalidArgument, "CDF table needs at least two symbols");
  require(cdf_.front() == 0 && cdf_.back() == kFreqTotal, ErrorCode::kInvalidArgument,
          "CDF table must span [0, 65536]");
  for (std::size_t i = 1; i < cdf_.size(); ++i)
    require(cdf_[i] > cdf_[i - 1], ErrorCode::kInvalidArgument, "CDF table is not strictly increasing");
}

DiscreteCdf DiscreteCdf::from_frequencies(std::span<const std::uint32_t> freqs) {
  std::vector<std::uint32_t> cdf(freqs.size() + 1, 0);
  for (std::size_t i = 0; i < freqs.size(); ++i) cdf[i + 1] = cdf[i] + freqs[i];
  return DiscreteCdf(std::move(cdf));
}

DiscreteCdf DiscreteCdf::uniform(int symbols) {
  require(symbols >= 2 && static_cast<std::uint32_t>(symbols) <= kFreqTotal, ErrorCode::kInvalidArgument,
          "uniform alphabet size out of range");
  std::vector<std::uint32_t> cdf(symbols + 1);
  for (int i = 0; i <= symbols; ++i)
    cdf[i] = static_cast<std::uint32_t>((static_cast<std::uint64_t>(i) * kFreqTotal) / symbols);
  return DiscreteCdf(std::move(cdf));
}

int DiscreteCdf::lookup(std::uint32_t slot) const {
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), slot);
  return static_cast<int>(it - cdf_.begin()) - 1;
}

void RangeEncoder::put(const DiscreteCdf& cdf, int symbol) {
  if (symbol < 0 || symbol >= cdf.size())
    fail(ErrorCode::kInvalidArgument, "symbol " + std::to_string(symbol) + " outside the modelled alphabet");
  ops_.push_back({cdf.start(symbol), cdf.freq(symbol)});
}

void RangeEncoder::put_raw(std::uint32_t value, int nbits) {
  require(nbits >= 1 && nbits <= kFreqBits, ErrorCode::kInvalidArgument, "raw bit count must be 1..16");
  require(value < (1u << nbits), ErrorCode::kInvalidArgument, "raw value exceeds bit count");
  const int shift = kFreqBits - nbits;
  ops_.push_back({value << shift, 1u << shift});
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  if (ops_.empty()) return {};
  std::vector<std::uint8_t> reversed;
  reversed.reserve(ops_.size() * 2);
  std::uint32_t x = kStateLow;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    const std::uint64_t x_max = static_cast<std::uint64_t>((kStateLow >> kFreqBits) << 8) * it->freq;
    while (x >= x_max) {
      reversed.push_back(static_cast<std::uint8_t>(x & 0xff));
      x >>= 8;
    }
    x = ((x / it->freq) << kFreqBits) + (x % it->freq) + it->start;
  }
  ops_.clear();
  std::vector<std::uint8_t> out;
  out.reserve(reversed.size() + 4);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
  out.insert(out.end(), reversed.rbegin(), reversed.rend());
  return out;
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> bytes, bool expect_symbols) : bytes_(bytes) {
  if (!expect_symbols && bytes.empty()) {
    empty_ = true;
    return;
  }
  if (bytes.size() < 4) fail(ErrorCode::kTruncated, "range-coded section shorter than its state");
  for (int i = 0; i < 4; ++i) state_ |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  pos_ = 4;
  if (state_ < kStateLow) fail(ErrorCode::kCorrupt, "range coder state out of bounds");
}

void RangeDecoder::advance(std::uint32_t start, std::uint32_t freq) {
  std::uint32_t x = freq * (state_ >> kFreqBits) + (state_ & (kFreqTotal - 1)) - start;
  while (x < kStateLow) {
    if (pos_ >= bytes_.size()) fail(ErrorCode::kTruncated, "range-coded section truncated");
    x = (x << 8) | bytes_[pos_++];
  }
  state_ = x;
}

int RangeDecoder::get(const DiscreteCdf& cdf) {
  if (empty_) fail(ErrorCode::kTruncated, "range-coded section is empty");
  const int s = cdf.lookup(state_ & (kFreqTotal - 1));
  advance(cdf.start(s), cdf.freq(s));
  return s;
}

std::uint32_t RangeDecoder::get_raw(int nbits) {
  if (empty_) fail(ErrorCode::kTruncated, "range-coded section is empty");
  const int shift = kFreqBits - nbits;
  const std::uint32_t v = (state_ & (kFreqTotal - 1)) >> shift;
  advance(v << shift, 1u << shift);
  return v;
}

void RangeDecoder::finish() const {
  if (empty_) return;
  if (state_ != kStateLow || pos_ != bytes_.size())
    fail(ErrorCode::kCorrupt, "range-coded section did not terminate cleanly");
}

std::vector<std::uint8_t> range_encode(std::span<const int> symbols, std::span<const DiscreteCdf* const> cdfs) {
  require(symbols.size() == cdfs.size(), ErrorCode::kShapeMismatch, "one CDF table per symbol required");
  RangeEncoder enc;
  for (std::size_t i = 0; i < symbols.size(); ++i) enc.put(*cdfs[i], symbols[i]);
  return enc.finish();
}

std::vector<int> range_decode(std::span<const std::uint8_t> bytes, std::span<const DiscreteCdf* const> cdfs) {
  RangeDecoder dec(bytes, !cdfs.empty());
  std::vector<int> out(cdfs.size());
  for (std::size_t i = 0; i < cdfs.size(); ++i) out[i] = dec.get(*cdfs[i]);
  dec.finish();
  return out;
}

double LatentTable::code_length(int v) const {
  auto bits = [&](int s) { return -std::log2(static_cast<double>(cdf.freq(s)) / kFreqTotal); };
  if (in_support(v)) return bits(v - min_value);
  return bits(escape_symbol()) + kEscapeRawBits;
}

void encode_latent(RangeEncoder& enc, const LatentTable& table, int value) {
  if (table.in_support(value)) {
    enc.put(table.cdf, value - table.min_value);
    return;
  }
  if (value < -32768 || value > 32767)
    fail(ErrorCode::kUnsupported, "latent value " + std::to_string(value) + " exceeds the 16-bit escape range");
  enc.put(table.cdf, table.escape_symbol());
  enc.put_raw(static_cast<std::uint16_t>(static_cast<std::int16_t>(value)), kEscapeRawBits);
}

int decode_latent(RangeDecoder& dec, const LatentTable& table) {
  const int s = dec.get(table.cdf);
  if (s != table.escape_symbol()) return table.min_value + s;
  const auto raw = static_cast<std::int16_t>(static_cast<std::uint16_t>(dec.get_raw(kEscapeRawBits)));
  if (table.in_support(raw)) fail(ErrorCode::kCorrupt, "escaped value lies inside the table support");
  return raw;
}

std::vector<std::uint8_t> encode_latents(std::span<const int> values, std::span<const LatentTable* const> tables) {
  require(values.size() == tables.size(), ErrorCode::kShapeMismatch, "one table per latent required");
  RangeEncoder enc;
  for (std::size_t i = 0; i < values.size(); ++i) encode_latent(enc, *tables[i], values[i]);
  return enc.finish();
}

std::vector<int> decode_latents(std::span<const std::uint8_t> bytes, std::span<const LatentTable* const> tables) {
  RangeDecoder dec(bytes, !tables.empty());
  std::vector<int> out(tables.size());
  for (std::size_t i = 0; i < tables.size(); ++i) out[i] = decode_latent(dec, *tables[i]);
  dec.finish();
  return out;
}

}  // namespace lrc
