#include "lrc/codec.hpp"

#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "lrc/byteio.hpp"
#include "lrc/entropy.hpp"
#include "lrc/error.hpp"
#include "lrc/numerics.hpp"

namespace lrc {

namespace {

template <class Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w * n / workers; i < (w + 1) * n / workers; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

int round_to_int(float v) {
  const float r = std::round(v);
  require(std::isfinite(r) && std::fabs(r) < 2147483520.0f, ErrorCode::kNumeric, "latent is not finite");
  return static_cast<int>(r);
}

}  // namespace

std::uint64_t Bitstream::coded_bits() const {
  std::uint64_t bits = 0;
  for (const auto& b : blocks) bits += 8ull * (b.hyper.size() + b.main.size());
  return bits;
}

double EncodeResult::total_estimated_bits() const {
  return std::accumulate(estimated_bits.begin(), estimated_bits.end(), 0.0);
}

std::vector<std::uint8_t> serialize_bitstream(const Bitstream& s) {
  ByteWriter w;
  w.tag("RCBS");
  w.u16(kRcbsVersion);
  w.bytes(s.model_hash);
  w.f64(s.lambda);
  w.u32(static_cast<std::uint32_t>(s.blocks.size()));
  w.u16(static_cast<std::uint16_t>(s.block_size));
  w.u8(static_cast<std::uint8_t>(s.bitdepth));
  for (const auto& b : s.blocks) {
    require(b.hyper.size() * 8 <= 0xFFFF, ErrorCode::kUnsupported, "hyper section too long for its length field");
    w.u32(static_cast<std::uint32_t>(2 + b.hyper.size() + b.main.size()));
    w.u16(static_cast<std::uint16_t>(b.hyper.size() * 8));
    w.bytes(b.hyper);
    w.bytes(b.main);
  }
  return w.take();
}

namespace {
Bitstream parse_header(ByteReader& r) {
  if (r.tag(4) != "RCBS") fail(ErrorCode::kMalformedHeader, "not an RCBS bitstream");
  if (r.u16() != kRcbsVersion) fail(ErrorCode::kMalformedHeader, "unsupported RCBS version");
  Bitstream s;
  const auto hash = r.bytes(32);
  std::copy(hash.begin(), hash.end(), s.model_hash.begin());
  s.lambda = r.f64();
  const std::uint32_t count = r.u32();
  s.block_size = r.u16();
  s.bitdepth = r.u8();
  // Each record needs at least its 6 framing bytes.
  if (r.remaining() < static_cast<std::size_t>(count) * 6) fail(ErrorCode::kTruncated, "bitstream truncated");
  s.blocks.resize(count);
  return s;
}

void parse_records(ByteReader& r, Bitstream& s) {
  for (auto& b : s.blocks) {
    const std::uint32_t len = r.u32();
    if (len < 2) fail(ErrorCode::kCorrupt, "block record shorter than its section header");
    auto rec = r.bytes(len);
    const std::uint16_t hyper_bits = static_cast<std::uint16_t>(rec[0] | (rec[1] << 8));
    if (hyper_bits % 8 != 0 || hyper_bits / 8 > len - 2)
      fail(ErrorCode::kCorrupt, "hyper section length inconsistent with its record");
    const std::size_t hyper_bytes = hyper_bits / 8;
    b.hyper.assign(rec.begin() + 2, rec.begin() + 2 + static_cast<std::ptrdiff_t>(hyper_bytes));
    b.main.assign(rec.begin() + 2 + static_cast<std::ptrdiff_t>(hyper_bytes), rec.end());
  }
  if (r.remaining() != 0) fail(ErrorCode::kCorrupt, "trailing bytes after the last block");
}
}  // namespace

Bitstream parse_bitstream(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  Bitstream s = parse_header(r);
  parse_records(r, s);
  return s;
}

BlockPayload encode_block(const FrozenModel& model, std::span<const float> x, std::vector<float>* x_hat,
                          double* estimated_bits, double* estimated_hyper_bits) {
  const ModelParams& params = model.params();
  const std::vector<float> y = model.analysis(x);
  const int m = model.latent_size();
  std::vector<int> y_hat(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) y_hat[i] = round_to_int(y[i]);
  std::vector<const LatentTable*> main_tables(static_cast<std::size_t>(m));

  BlockPayload out;
  double est_main = 0.0, est_hyper = 0.0;
  if (model.config().has_hyperprior()) {
    const std::vector<float> z = model.hyper_analysis(y);
    std::vector<int> z_hat(z.size());
    std::vector<float> z_hat_f(z.size());
    std::vector<const LatentTable*> z_tables(z.size());
    for (std::size_t d = 0; d < z.size(); ++d) {
      z_hat[d] = round_to_int(z[d]);
      z_hat_f[d] = static_cast<float>(z_hat[d]);
      z_tables[d] = &model.factorized_table(static_cast<int>(d));
      est_hyper += params.z_density.bits(static_cast<int>(d), z_hat[d]);
    }
    out.hyper = encode_latents(z_hat, z_tables);
    const std::vector<float> log_scale = model.hyper_log_scale(z_hat_f);
    const auto& tables = gaussian_tables();
    for (int i = 0; i < m; ++i) {
      main_tables[i] = &tables[quantize_log_scale_index(log_scale[i])];
      est_main += gaussian_bits(y_hat[i], std::max(std::exp(static_cast<double>(log_scale[i])), kScaleMin));
    }
  } else {
    for (int i = 0; i < m; ++i) {
      const int d = model.main_density_dim(i);
      main_tables[i] = &model.factorized_table(d);
      est_main += params.y_density.bits(d, y_hat[i]);
    }
  }
  out.main = encode_latents(y_hat, main_tables);

  if (x_hat) {
    std::vector<float> y_hat_f(y_hat.begin(), y_hat.end());
    *x_hat = model.synthesis(y_hat_f);
  }
  if (estimated_bits) *estimated_bits = est_main + est_hyper;
  if (estimated_hyper_bits) *estimated_hyper_bits = est_hyper;
  return out;
}

std::vector<float> decode_block(const FrozenModel& model, const BlockPayload& payload) {
  const int m = model.latent_size();
  std::vector<const LatentTable*> main_tables(static_cast<std::size_t>(m));
  if (model.config().has_hyperprior()) {
    const int zdims = model.config().hyper_latent_size();
    std::vector<const LatentTable*> z_tables(static_cast<std::size_t>(zdims));
    for (int d = 0; d < zdims; ++d) z_tables[d] = &model.factorized_table(d);
    const std::vector<int> z_hat = decode_latents(payload.hyper, z_tables);
    const std::vector<float> z_hat_f(z_hat.begin(), z_hat.end());
    const std::vector<float> log_scale = model.hyper_log_scale(z_hat_f);
    const auto& tables = gaussian_tables();
    for (int i = 0; i < m; ++i) main_tables[i] = &tables[quantize_log_scale_index(log_scale[i])];
  } else {
    if (!payload.hyper.empty()) fail(ErrorCode::kCorrupt, "hyper section present for a factorized model");
    for (int i = 0; i < m; ++i) main_tables[i] = &model.factorized_table(model.main_density_dim(i));
  }
  const std::vector<int> y_hat = decode_latents(payload.main, main_tables);
  const std::vector<float> y_hat_f(y_hat.begin(), y_hat.end());
  return model.synthesis(y_hat_f);
}

EncodeResult encode(const ModelParams& params, const BlockDataset& dataset, double lam, int threads) {
  require(dataset.block_size == params.config.block_size, ErrorCode::kSizeMismatch,
          "dataset block size does not match the model");
  dataset.validate(true);
  const FrozenModel model(params, lam);

  EncodeResult res;
  res.stream.model_hash = model_hash(params);
  res.stream.lambda = lam;
  res.stream.block_size = dataset.block_size;
  res.stream.bitdepth = dataset.bitdepth;
  res.stream.blocks.resize(dataset.size());
  res.reconstruction.block_size = dataset.block_size;
  res.reconstruction.bitdepth = dataset.bitdepth;
  res.reconstruction.blocks.resize(dataset.size());
  res.estimated_bits.resize(dataset.size());
  res.estimated_hyper_bits.resize(dataset.size());

  parallel_for(dataset.size(), threads, [&](std::size_t i) {
    const ResidualBlock& x = dataset.blocks[i];
    ResidualBlock& rec = res.reconstruction.blocks[i];
    rec.size = x.size;
    rec.block_id = x.block_id;
    rec.source_tag = x.source_tag;
    res.stream.blocks[i] =
        encode_block(model, x.data, &rec.data, &res.estimated_bits[i], &res.estimated_hyper_bits[i]);
  });
  return res;
}

BlockDataset decode(const ModelParams& params, const Bitstream& stream, int threads) {
  if (stream.model_hash != model_hash(params))
    fail(ErrorCode::kHashMismatch, "bitstream was produced with a different model");
  require(stream.block_size == params.config.block_size, ErrorCode::kSizeMismatch,
          "bitstream block size does not match the model");
  const FrozenModel model(params, stream.lambda);

  BlockDataset out;
  out.block_size = stream.block_size;
  out.bitdepth = stream.bitdepth;
  out.blocks.resize(stream.blocks.size());
  parallel_for(stream.blocks.size(), threads, [&](std::size_t i) {
    ResidualBlock& b = out.blocks[i];
    b.size = stream.block_size;
    b.block_id = static_cast<std::int64_t>(i);
    b.source_tag = "decoded";
    b.data = decode_block(model, stream.blocks[i]);
  });
  return out;
}

BlockDataset decode(const ModelParams& params, std::span<const std::uint8_t> bytes, int threads) {
  ByteReader r(bytes);
  Bitstream s = parse_header(r);
  if (s.model_hash != model_hash(params))
    fail(ErrorCode::kHashMismatch, "bitstream was produced with a different model");
  parse_records(r, s);
  return decode(params, s, threads);
}

}  // namespace lrc
