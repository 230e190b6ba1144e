#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lrc/entropy.hpp"
#include "lrc/range_coder.hpp"

namespace lrc {
namespace {

DiscreteCdf random_cdf(std::mt19937_64& rng, int symbols) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(symbols);
  double sum = 0.0;
  for (auto& v : p) {
    // Cubing spreads the masses over several orders of magnitude.
    v = std::pow(u(rng), 3.0) + 1e-9;
    sum += v;
  }
  for (auto& v : p) v /= sum;
  return DiscreteCdf::from_frequencies(quantize_pmf(p));
}

TEST(DiscreteCdf, RejectsDegenerateTables) {
  EXPECT_THROW(DiscreteCdf({0, kFreqTotal}), Error);
  EXPECT_THROW(DiscreteCdf({0, 100, 100, kFreqTotal}), Error);
  EXPECT_THROW(DiscreteCdf({0, 100, 1000}), Error);
  EXPECT_THROW(DiscreteCdf::uniform(1), Error);
  const auto u = DiscreteCdf::uniform(3);
  EXPECT_EQ(u.size(), 3);
  EXPECT_EQ(u.table().back(), kFreqTotal);
}

TEST(DiscreteCdf, LookupFindsContainingInterval) {
  std::mt19937_64 rng(1);
  const auto cdf = random_cdf(rng, 50);
  for (std::uint32_t slot = 0; slot < kFreqTotal; slot += 7) {
    const int s = cdf.lookup(slot);
    ASSERT_LE(cdf.start(s), slot);
    ASSERT_LT(slot, cdf.start(s) + cdf.freq(s));
  }
}

TEST(RangeCoder, HundredThousandRandomRoundTrips) {
  std::mt19937_64 rng(2024);
  std::vector<DiscreteCdf> pool;
  for (int i = 0; i < 64; ++i) pool.push_back(random_cdf(rng, 2 + static_cast<int>(rng() % 300)));
  for (int trial = 0; trial < 100'000; ++trial) {
    const std::size_t len = 1 + rng() % 24;
    std::vector<const DiscreteCdf*> cdfs(len);
    std::vector<int> symbols(len);
    for (std::size_t i = 0; i < len; ++i) {
      cdfs[i] = &pool[rng() % pool.size()];
      symbols[i] = static_cast<int>(rng() % cdfs[i]->size());
    }
    const auto bytes = range_encode(symbols, cdfs);
    ASSERT_EQ(range_decode(bytes, cdfs), symbols) << "trial " << trial;
  }
}

TEST(RangeCoder, UniformSourceLengthNearEntropy) {
  std::mt19937_64 rng(7);
  const auto cdf = DiscreteCdf::uniform(256);
  std::vector<int> symbols(1000);
  for (auto& s : symbols) s = static_cast<int>(rng() % 256);
  std::vector<const DiscreteCdf*> cdfs(symbols.size(), &cdf);
  const auto bytes = range_encode(symbols, cdfs);
  const std::size_t bits = bytes.size() * 8;
  EXPECT_GE(bits, 8000u);
  EXPECT_LE(bits, 8040u);
  EXPECT_EQ(range_decode(bytes, cdfs), symbols);
}

TEST(RangeCoder, LengthWithinInformationContentPlusOverhead) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const auto cdf = random_cdf(rng, 2 + static_cast<int>(rng() % 64));
    std::vector<int> symbols(1 + rng() % 2000);
    double info = 0.0;
    // Draw symbols from the table's own distribution.
    for (auto& s : symbols) {
      s = cdf.lookup(static_cast<std::uint32_t>(rng() % kFreqTotal));
      info += -std::log2(static_cast<double>(cdf.freq(s)) / kFreqTotal);
    }
    std::vector<const DiscreteCdf*> cdfs(symbols.size(), &cdf);
    const auto bytes = range_encode(symbols, cdfs);
    EXPECT_LE(bytes.size() * 8.0, info + 32.0 + 1e-6);
  }
}

TEST(RangeCoder, RawBitsRoundTrip) {
  std::mt19937_64 rng(9);
  RangeEncoder enc;
  std::vector<std::pair<std::uint32_t, int>> raws;
  const auto cdf = DiscreteCdf::uniform(5);
  std::vector<int> syms;
  for (int i = 0; i < 500; ++i) {
    const int n = 1 + static_cast<int>(rng() % 16);
    const std::uint32_t v = static_cast<std::uint32_t>(rng()) & ((1u << n) - 1);
    enc.put_raw(v, n);
    raws.emplace_back(v, n);
    syms.push_back(static_cast<int>(rng() % 5));
    enc.put(cdf, syms.back());
  }
  const auto bytes = enc.finish();
  RangeDecoder dec(bytes);
  for (int i = 0; i < 500; ++i) {
    ASSERT_EQ(dec.get_raw(raws[i].second), raws[i].first);
    ASSERT_EQ(dec.get(cdf), syms[i]);
  }
  dec.finish();
  EXPECT_THROW(enc.put_raw(4, 2), Error);
  EXPECT_THROW(enc.put_raw(0, 17), Error);
}

TEST(RangeCoder, SymbolOutsideAlphabetIsAnError) {
  const auto cdf = DiscreteCdf::uniform(4);
  RangeEncoder enc;
  EXPECT_THROW(enc.put(cdf, 4), Error);
  EXPECT_THROW(enc.put(cdf, -1), Error);
}

TEST(RangeCoder, TruncatedStreamIsDetected) {
  std::mt19937_64 rng(10);
  const auto cdf = DiscreteCdf::uniform(256);
  std::vector<int> symbols(200);
  for (auto& s : symbols) s = static_cast<int>(rng() % 256);
  std::vector<const DiscreteCdf*> cdfs(symbols.size(), &cdf);
  const auto bytes = range_encode(symbols, cdfs);
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, bytes.size() / 2, bytes.size() - 1}) {
    const std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    try {
      range_decode(part, cdfs);
      FAIL() << "cut at " << cut;
    } catch (const Error& e) {
      EXPECT_TRUE(e.code() == ErrorCode::kTruncated || e.code() == ErrorCode::kCorrupt) << to_string(e.code());
    }
  }
}

TEST(RangeCoder, EmptyStreamRoundTrips) {
  const auto bytes = range_encode({}, {});
  EXPECT_TRUE(range_decode(bytes, {}).empty());
}

TEST(LatentCoding, EscapesRoundTripWithBoundedCost) {
  const auto table = build_gaussian_cdf_table(1.0);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<int> values;
  for (int i = 0; i < 3000; ++i) values.push_back(static_cast<int>(std::lround(n(rng))));
  for (int v : {7, -7, 300, -32768, 32767, 1000, -255}) values.push_back(v);
  std::vector<const LatentTable*> tables(values.size(), &table);
  const auto bytes = encode_latents(values, tables);
  EXPECT_EQ(decode_latents(bytes, tables), values);
  double ideal = 0.0;
  int escapes = 0;
  for (int v : values) {
    ideal += table.code_length(v);
    escapes += table.in_support(v) ? 0 : 1;
  }
  EXPECT_EQ(escapes, 7);
  EXPECT_LE(bytes.size() * 8.0, ideal + 32.0 + 2.0 * escapes);
}

TEST(LatentCoding, ValuesBeyondSixteenBitsAreRejected) {
  const auto table = build_gaussian_cdf_table(1.0);
  RangeEncoder enc;
  try {
    encode_latent(enc, table, 40000);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnsupported);
  }
}

TEST(LatentCoding, EscapeCarryingInSupportValueIsCorrupt) {
  const auto table = build_gaussian_cdf_table(1.0);
  RangeEncoder enc;
  enc.put(table.cdf, table.escape_symbol());
  enc.put_raw(3, kEscapeRawBits);
  const auto bytes = enc.finish();
  RangeDecoder dec(bytes);
  try {
    decode_latent(dec, table);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCorrupt);
  }
}

}  // namespace
}  // namespace lrc
