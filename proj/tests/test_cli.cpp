#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "lrc/blockio.hpp"
#include "lrc/eval.hpp"
#include "test_util.hpp"

namespace lrc {
namespace {

struct Run {
  int status = -1;
  std::string out;
};

Run run(const test::TempDir& dir, const std::string& args) {
  const auto out_path = dir / "stdout.txt";
  const std::string cmd = std::string(LRC_CLI_PATH) + " " + args + " > " + out_path.string() + " 2> " +
                          (dir / "stderr.txt").string();
  const int raw = std::system(cmd.c_str());
  Run r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(out_path);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string p(const test::TempDir& dir, const std::string& name) { return (dir / name).string(); }

TEST(Cli, GenDataWritesRequestedBlocks) {
  test::TempDir dir;
  const auto r = run(dir, "--seed 3 gen-data --count 100 --block-size 8 --out " + p(dir, "d.resb"));
  ASSERT_EQ(r.status, 0);
  const auto ds = load_blocks(dir / "d.resb");
  EXPECT_EQ(ds.size(), 100u);
  EXPECT_EQ(ds.block_size, 8);
  // Same seed, same bytes.
  ASSERT_EQ(run(dir, "--seed 3 gen-data --count 100 --block-size 8 --out " + p(dir, "e.resb")).status, 0);
  const auto again = load_blocks(dir / "e.resb");
  for (std::size_t i = 0; i < ds.size(); ++i) ASSERT_EQ(ds.blocks[i].data, again.blocks[i].data);
}

TEST(Cli, GlobalOptionsMayFollowTheSubcommand) {
  test::TempDir dir;
  const auto r =
      run(dir, "gen-data --seed 1 --count 100 --block-size 16 --rho 0.9 --sigma 8 --out " + p(dir, "d.resb"));
  ASSERT_EQ(r.status, 0);
  EXPECT_EQ(load_blocks(dir / "d.resb").size(), 100u);
  ASSERT_EQ(run(dir, "--seed 1 gen-data --count 100 --block-size 16 --out " + p(dir, "e.resb")).status, 0);
  EXPECT_EQ(load_blocks(dir / "d.resb").blocks[7].data, load_blocks(dir / "e.resb").blocks[7].data);
}

TEST(Cli, TrainEncodeDecodeEvalPipeline) {
  test::TempDir dir;
  ASSERT_EQ(run(dir, "gen-data --count 120 --block-size 4 --out " + p(dir, "d.resb")).status, 0);
  {
    std::ofstream cfg(dir / "cfg.txt");
    cfg << "# tiny run\nkind = dct\nentropy = hyper\nminiature = true\nepochs = 2\nbatch_size = 32\n"
        << "lambda_grid = 16,32,64,128\n";
  }
  auto r = run(dir, "train --config " + p(dir, "cfg.txt") + " --data " + p(dir, "d.resb") + " --out " + p(dir, "m"));
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("model_hash"), std::string::npos);
  ASSERT_TRUE(std::filesystem::exists(dir / "m" / "best.rcmp"));

  const std::string model = p(dir, "m/best.rcmp");
  r = run(dir, "encode --model " + model + " --lambda 40 --in " + p(dir, "d.resb") + " --out " + p(dir, "s.rcbs"));
  ASSERT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("coded_bits"), std::string::npos);
  ASSERT_EQ(run(dir, "decode --model " + model + " --in " + p(dir, "s.rcbs") + " --out " + p(dir, "r.resb")).status, 0);
  EXPECT_EQ(load_blocks(dir / "r.resb").size(), 120u);

  r = run(dir, "eval --reference " + p(dir, "d.resb") + " --decoded " + p(dir, "r.resb"));
  ASSERT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("psnr"), std::string::npos);

  r = run(dir, "eval --model " + model + " --data " + p(dir, "d.resb") + " --label mini --report " + p(dir, "rep"));
  ASSERT_EQ(r.status, 0);
  EXPECT_EQ(r.out.rfind("label,lambda,rate_bpp,quality", 0), 0u);
  const auto curve = curve_from_csv(r.out);
  EXPECT_EQ(curve.points.size(), 4u);
  EXPECT_TRUE(std::filesystem::exists(dir / "rep" / "mini.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "rep" / "rd.svg"));
}

TEST(Cli, BdRateOfCurveAgainstItselfIsZero) {
  test::TempDir dir;
  {
    std::ofstream csv(dir / "a.csv");
    csv << "label,lambda,rate_bpp,quality\n"
        << "a,16,0.5,30\na,32,0.9,33\na,64,1.6,36.5\na,128,2.7,39.2\n";
  }
  const auto r = run(dir, "bdrate --ref " + p(dir, "a.csv") + " --test " + p(dir, "a.csv"));
  ASSERT_EQ(r.status, 0);
  EXPECT_EQ(r.out, "0.0\n");
}

TEST(Cli, UsageErrorsExitWithTwo) {
  test::TempDir dir;
  EXPECT_EQ(run(dir, "gen-data --count 5 --out " + p(dir, "x.resb") + " --no-such-flag").status, 2);
  EXPECT_EQ(run(dir, "").status, 2);
  EXPECT_EQ(run(dir, "frobnicate").status, 2);
  EXPECT_EQ(run(dir, "--help").status, 0);
}

TEST(Cli, LibraryErrorsMapToDistinctCodes) {
  test::TempDir dir;
  EXPECT_EQ(run(dir, "decode --model " + p(dir, "missing.rcmp") + " --in x --out y").status, 11);

  ASSERT_EQ(run(dir, "gen-data --count 40 --block-size 4 --out " + p(dir, "d.resb")).status, 0);
  for (const char* seed : {"1", "2"})
    ASSERT_EQ(run(dir, std::string("--seed ") + seed + " train --miniature true --epochs 0 --lambda-grid 16,64 --data " +
                           p(dir, "d.resb") + " --out " + p(dir, std::string("m") + seed))
                  .status,
              0);
  ASSERT_EQ(run(dir, "encode --model " + p(dir, "m1/best.rcmp") + " --lambda 20 --in " + p(dir, "d.resb") +
                         " --out " + p(dir, "s.rcbs"))
                .status,
            0);
  // Decoding with a model other than the encoder's.
  EXPECT_EQ(run(dir, "decode --model " + p(dir, "m2/best.rcmp") + " --in " + p(dir, "s.rcbs") + " --out " +
                         p(dir, "r.resb"))
                .status,
            16);
  // Outside the trained grid.
  EXPECT_EQ(run(dir, "encode --model " + p(dir, "m1/best.rcmp") + " --lambda 500 --in " + p(dir, "d.resb") +
                         " --out " + p(dir, "t.rcbs"))
                .status,
            17);
}

}  // namespace
}  // namespace lrc
