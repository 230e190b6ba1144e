#include <gtest/gtest.h>

#include <functional>

#include "lrc/model.hpp"
#include "lrc/transforms.hpp"
#include "test_util.hpp"

namespace lrc {
namespace {

bool same_params(ModelParams a, ModelParams b) {
  auto va = param_views(a), vb = param_views(b);
  if (va.size() != vb.size()) return false;
  for (std::size_t k = 0; k < va.size(); ++k) {
    if (va[k].name != vb[k].name || va[k].values.size() != vb[k].values.size()) return false;
    for (std::size_t i = 0; i < va[k].values.size(); ++i)
      if (va[k].values[i] != vb[k].values[i]) return false;
  }
  return true;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kInvalidArgument;
}

class ModelRoundTrip : public testing::TestWithParam<std::pair<TransformKind, EntropyKind>> {};

TEST_P(ModelRoundTrip, SaveLoadIsExactAndForwardIdentical) {
  const auto [kind, entropy] = GetParam();
  auto cfg = miniature_config(kind, entropy, {16.0, 32.0, 64.0});
  cfg.block_size = 8;
  auto p = init_model(cfg, 5);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto& v : param_views(p))
    for (double& x : v.values) x += n(rng);
  round_to_float(p);
  test::TempDir dir;
  save_model(p, dir / "m.rcmp");
  const auto q = load_model(dir / "m.rcmp");
  EXPECT_TRUE(same_params(p, q));
  EXPECT_EQ(q.config.lambda_grid, cfg.lambda_grid);
  EXPECT_EQ(q.config.kind, kind);
  EXPECT_EQ(q.config.entropy, entropy);
  EXPECT_EQ(model_hash(p), model_hash(q));
  const auto ds = test::random_blocks(2, 4, 8, 8.0);
  const Tape a = forward_with_tape(p, blocks_to_matrix(ds), 24.0, Quantization::hard());
  const Tape b = forward_with_tape(q, blocks_to_matrix(ds), 24.0, Quantization::hard());
  EXPECT_EQ(a.x_hat, b.x_hat);
  EXPECT_EQ(a.loss, b.loss);
}

INSTANTIATE_TEST_SUITE_P(All, ModelRoundTrip,
                         testing::Values(std::pair{TransformKind::kLinearDct, EntropyKind::kFactorized},
                                         std::pair{TransformKind::kLinearDct, EntropyKind::kHyperprior},
                                         std::pair{TransformKind::kNonlinearAe, EntropyKind::kFactorized},
                                         std::pair{TransformKind::kNonlinearAe, EntropyKind::kHyperprior}));

TEST(Model, HashTracksContent) {
  const auto cfg = miniature_config(TransformKind::kLinearDct, EntropyKind::kHyperprior, {16.0, 32.0});
  auto p = init_model(cfg, 1);
  const auto h = model_hash(p);
  EXPECT_EQ(to_hex(h).size(), 64u);
  EXPECT_EQ(h, model_hash(init_model(cfg, 1)));
  p.hyper_synthesis[0].bias(0) += 0.5;
  EXPECT_NE(h, model_hash(p));
  // The header stores the digest right after magic and version.
  const auto bytes = serialize_model(p);
  const auto h2 = model_hash(p);
  EXPECT_TRUE(std::equal(h2.begin(), h2.end(), bytes.begin() + 6));
}

TEST(Model, CorruptFilesAreRejected) {
  const auto cfg = miniature_config(TransformKind::kNonlinearAe, EntropyKind::kHyperprior, {16.0, 32.0});
  const auto bytes = serialize_model(init_model(cfg, 1));
  auto magic = bytes;
  magic[1] = 'X';
  EXPECT_EQ(code_of([&] { parse_model(magic); }), ErrorCode::kMalformedHeader);
  auto flipped = bytes;
  flipped[bytes.size() - 3] ^= 0x10;
  EXPECT_EQ(code_of([&] { parse_model(flipped); }), ErrorCode::kCorrupt);
  const std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 10);
  EXPECT_EQ(code_of([&] { parse_model(cut); }), ErrorCode::kTruncated);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_EQ(code_of([&] { parse_model(extra); }), ErrorCode::kSizeMismatch);
}

TEST(Model, ParameterCountsAgreeWithViews) {
  for (auto kind : {TransformKind::kLinearDct, TransformKind::kNonlinearAe}) {
    const auto cfg = miniature_config(kind, EntropyKind::kHyperprior, {16.0, 32.0, 64.0});
    auto p = init_model(cfg, 1);
    std::size_t total = 0;
    for (const auto& v : param_views(p)) total += v.values.size();
    EXPECT_EQ(total, p.parameter_count());
    EXPECT_LT(p.shared_parameter_count(), p.parameter_count());
  }
}

TEST(Model, ArchitectureContract) {
  ModelConfig cfg;
  cfg.kind = TransformKind::kNonlinearAe;
  cfg.block_size = 32;
  const auto p = init_model(cfg, 1);
  ASSERT_EQ(p.ae_analysis.size(), 4u);
  ASSERT_EQ(p.ae_synthesis.size(), 4u);
  const std::array<int, 4> channels{256, 128, 64, 64}, kernels{5, 5, 3, 3};
  int in = 1;
  for (int l = 0; l < 4; ++l) {
    EXPECT_EQ(p.ae_analysis[l].weight.rows(), channels[l]);
    EXPECT_EQ(p.ae_analysis[l].weight.cols(), in * kernels[l] * kernels[l]);
    in = channels[l];
  }
  EXPECT_EQ(p.hyper_analysis[0].weight.cols(), cfg.latent_size());
  EXPECT_EQ(p.hyper_analysis[2].weight.rows(), 64);
  EXPECT_EQ(p.hyper_synthesis[2].weight.rows(), cfg.latent_size());
  EXPECT_EQ(p.gains.entries.size(), 14u);
  EXPECT_EQ(p.gains.entries[0].analysis.size(), 4u);

  ModelConfig lin;
  lin.block_size = 32;
  const auto q = init_model(lin, 1);
  EXPECT_EQ(q.config.latent_size(), 1024);
  EXPECT_EQ(q.gains.entries[0].analysis.size(), 1u);
  EXPECT_EQ(q.gains.entries[0].analysis[0].size(), 1024);
  EXPECT_EQ(q.hyper_synthesis[2].weight.rows(), 1024);
}

TEST(Model, MiniatureConfiguration) {
  const auto cfg = miniature_config(TransformKind::kNonlinearAe, EntropyKind::kHyperprior, {16.0});
  EXPECT_EQ(cfg.block_size, 4);
  EXPECT_EQ(cfg.hyper_widths, (std::array<int, 3>{8, 4, 2}));
  EXPECT_EQ(cfg.ae_channels, (std::array<int, 4>{8, 8, 4, 4}));
}

TEST(Model, InvalidConfigurationsRejected) {
  ModelConfig cfg;
  cfg.block_size = 12;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.block_size = 16;
  cfg.lambda_grid = {32.0, 16.0};
  EXPECT_THROW(cfg.validate(), Error);
}

}  // namespace
}  // namespace lrc
