// lrc: command-line front end for data generation, training, coding and
// evaluation of learned residual transform coders.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lrc/blockio.hpp"
#include "lrc/byteio.hpp"
#include "lrc/codec.hpp"
#include "lrc/error.hpp"
#include "lrc/eval.hpp"
#include "lrc/model.hpp"
#include "lrc/training.hpp"

namespace {

using lrc::ErrorCode;
using nlohmann::json;

constexpr int kExitUsage = 2;

// Exit status per error class; 1 is reserved for unexpected failures.
int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return 10;
    case ErrorCode::kIo: return 11;
    case ErrorCode::kMalformedHeader: return 12;
    case ErrorCode::kSizeMismatch: return 13;
    case ErrorCode::kTruncated: return 14;
    case ErrorCode::kCorrupt: return 15;
    case ErrorCode::kHashMismatch: return 16;
    case ErrorCode::kLambdaOutOfRange: return 17;
    case ErrorCode::kShapeMismatch: return 18;
    case ErrorCode::kNumeric: return 19;
    case ErrorCode::kStaleTape: return 20;
    case ErrorCode::kUnsupported: return 21;
  }
  return 1;
}

const char* kExitCodeHelp =
    "Exit status:\n"
    "  0 success, 1 unexpected failure, 2 usage error,\n"
    "  10 invalid argument, 11 i/o error, 12 malformed header, 13 size mismatch,\n"
    "  14 truncated data, 15 corrupt data, 16 model hash mismatch,\n"
    "  17 lambda out of range, 18 shape mismatch, 19 numeric failure (training divergence),\n"
    "  20 stale tape, 21 unsupported.\n"
    "Machine-readable results go to stdout (JSON or CSV); progress and diagnostics go to stderr.";

const char* kTrainConfigHelp =
    "Config file (--config): one key = value per line, '#' starts a comment.\n"
    "Command-line flags override config values.\n"
    "  kind                 dct | ae                      (default dct)\n"
    "  entropy              hyper | factorized            (default hyper)\n"
    "  miniature            true | false: hyper widths {8,4,2}, AE widths {8,8,4,4} (default false)\n"
    "  epochs               int >= 0                      (default 100)\n"
    "  batch_size           int >= 1                      (default 512)\n"
    "  learning_rate        real > 0                      (default 3e-4)\n"
    "  lambda_grid          a,b,c or log2:LO:HI           (default log2:4:17)\n"
    "  lambda               single value; implies multi_rate = false\n"
    "  multi_rate           true | false                  (default true)\n"
    "  seed                 int                           (default: --seed)\n"
    "  validation_interval  int >= 1                      (default 1)\n"
    "  checkpoint_dir       path (default: --out)\n"
    "The block size always follows the training data.\n"
    "Outputs in --out: best.rcmp, best.json and epoch_NNNN.{rcmp,json} per validated epoch.";

struct Globals {
  std::uint64_t seed = 0;
  int threads = 1;
  CLI::Option* seed_option = nullptr;
};

void log(const std::string& msg) { std::cerr << msg << "\n"; }

void print_json(const json& j) { std::cout << j.dump(2) << std::endl; }

std::string format_percent(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s = buf;
  while (s.size() > 1 && s.back() == '0' && s[s.size() - 2] != '.') s.pop_back();
  if (s == "-0.0") s = "0.0";
  return s;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  lrc::fail(ErrorCode::kInvalidArgument, "expected true/false for " + key + ", got '" + v + "'");
}

lrc::TransformKind parse_kind(const std::string& v) {
  if (v == "dct" || v == "linear_dct") return lrc::TransformKind::kLinearDct;
  if (v == "ae" || v == "nonlinear_ae") return lrc::TransformKind::kNonlinearAe;
  lrc::fail(ErrorCode::kInvalidArgument, "unknown transform kind '" + v + "' (dct | ae)");
}

lrc::EntropyKind parse_entropy(const std::string& v) {
  if (v == "hyper" || v == "hyperprior") return lrc::EntropyKind::kHyperprior;
  if (v == "factorized") return lrc::EntropyKind::kFactorized;
  lrc::fail(ErrorCode::kInvalidArgument, "unknown entropy model '" + v + "' (hyper | factorized)");
}

std::string read_text(const std::string& path) {
  const auto bytes = lrc::read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_text(const std::string& path, const std::string& text) {
  lrc::write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

// ---- gen-data ------------------------------------------------------------

struct GenArgs {
  int count = 0;
  int block_size = 32;
  double rho = 0.9;
  double sigma = 8.0;
  int bitdepth = 8;
  std::string out;
};

void add_gen(CLI::App& app, GenArgs& a, const Globals& g, std::function<int()>& action) {
  auto* sub = app.add_subcommand("gen-data", "Generate synthetic AR(1) residual blocks as a RESB file");
  sub->add_option("--count", a.count, "Number of blocks")->required()->check(CLI::PositiveNumber);
  sub->add_option("--block-size", a.block_size, "Block size B (power of two)")->capture_default_str();
  sub->add_option("--rho", a.rho, "Horizontal and vertical correlation in [0, 1)")->capture_default_str();
  sub->add_option("--sigma", a.sigma, "Marginal standard deviation")->capture_default_str();
  sub->add_option("--bitdepth", a.bitdepth, "Bit depth recorded in the header")->capture_default_str();
  sub->add_option("--out", a.out, "Output RESB path")->required();
  sub->callback([&] {
    action = [&] {
      auto ds = lrc::synth_residuals(g.seed, a.count, a.block_size, a.rho, a.sigma);
      ds.bitdepth = a.bitdepth;
      lrc::write_blocks(ds, a.out);
      print_json({{"out", a.out}, {"blocks", ds.size()}, {"block_size", ds.block_size}, {"seed", g.seed}});
      return 0;
    };
  });
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  std::string config, data, val, out, init;
  std::map<std::string, std::string> flags;  // only options given on the command line
};

void add_train(CLI::App& app, TrainArgs& a, const Globals& g, std::function<int()>& action) {
  auto* sub = app.add_subcommand("train", "Train a model (rate-distortion loss, Adam)");
  sub->footer(kTrainConfigHelp);
  sub->add_option("--config", a.config, "key = value config file");
  sub->add_option("--data", a.data, "Training blocks (RESB)")->required();
  sub->add_option("--val", a.val, "Validation blocks (RESB); default: 10% split of --data using --seed");
  sub->add_option("--out", a.out, "Output directory")->required();
  sub->add_option("--init", a.init, "Start from this RCMP model instead of a fresh initialization");
  // Config-key overrides; flags win over the file.
  for (const char* key : {"kind", "entropy", "miniature", "epochs", "batch_size", "learning_rate", "lambda_grid",
                          "lambda", "multi_rate", "validation_interval", "checkpoint_dir"}) {
    std::string flag = std::string("--") + key;
    for (auto& ch : flag)
      if (ch == '_') ch = '-';
    sub->add_option_function<std::string>(
        flag, [&a, key](const std::string& v) { a.flags[key] = v; }, std::string("Override config key ") + key);
  }
  sub->callback([&] {
    action = [&] {
      std::map<std::string, std::string> kv;
      if (!a.config.empty()) kv = lrc::parse_key_values(read_text(a.config));
      for (const auto& [k, v] : a.flags) kv[k] = v;
      // The global --seed applies unless the config names one and the flag was not given.
      if (g.seed_option->count() > 0 || !kv.count("seed")) kv["seed"] = std::to_string(g.seed);

      auto take = [&](const std::string& key, const std::string& def) {
        auto it = kv.find(key);
        std::string v = it == kv.end() ? def : it->second;
        if (it != kv.end()) kv.erase(it);
        return v;
      };
      const auto kind = parse_kind(take("kind", "dct"));
      const auto entropy = parse_entropy(take("entropy", "hyper"));
      const bool miniature = parse_bool("miniature", take("miniature", "false"));

      lrc::TrainConfig tc;
      tc.checkpoint_dir = a.out;
      // lambda_grid first so a later "lambda" key can narrow it.
      if (kv.count("lambda_grid")) lrc::apply_train_option(tc, "lambda_grid", take("lambda_grid", ""));
      for (const auto& [k, v] : kv) lrc::apply_train_option(tc, k, v);
      tc.validate();

      auto train_set = lrc::load_blocks(a.data);
      lrc::BlockDataset val_set;
      if (a.val.empty()) {
        auto parts = lrc::split(train_set, 0.9, tc.seed);
        train_set = std::move(parts.first);
        val_set = std::move(parts.second);
      } else {
        val_set = lrc::load_blocks(a.val, train_set.block_size);
      }

      lrc::ModelParams model;
      if (!a.init.empty()) {
        model = lrc::load_model(a.init);
        lrc::require(model.gains.grid == tc.lambda_grid, ErrorCode::kInvalidArgument,
                     "--init model lambda grid differs from the training grid");
      } else {
        lrc::ModelConfig mc;
        if (miniature) mc = lrc::miniature_config(kind, entropy, tc.lambda_grid);
        mc.kind = kind;
        mc.entropy = entropy;
        mc.block_size = train_set.block_size;
        mc.lambda_grid = tc.lambda_grid;
        model = lrc::init_model(mc, tc.seed);
      }
      log("training " + std::string(lrc::to_string(model.config.kind)) + "/" + lrc::to_string(model.config.entropy) +
          " B=" + std::to_string(model.config.block_size) + " on " + std::to_string(train_set.size()) + " blocks, " +
          std::to_string(model.parameter_count()) + " parameters");
      const auto best = lrc::train(tc, model, train_set, val_set, [](const lrc::EpochReport& r) {
        std::ostringstream os;
        os << "epoch " << r.epoch << " train_loss " << r.train_loss;
        if (r.validated) os << " validation " << r.validation_total << (r.improved ? " *" : "");
        log(os.str());
      });
      if (best.diverged) {
        lrc::save_checkpoint(best, a.out, "best");
        log(best.message);
      }
      json j{{"best_model", (std::filesystem::path(a.out) / "best.rcmp").string()},
             {"epoch", best.epoch},
             {"validation_total", best.validation_total},
             {"diverged", best.diverged},
             {"model_hash", lrc::to_hex(lrc::model_hash(best.params))}};
      print_json(j);
      return best.diverged ? exit_code(ErrorCode::kNumeric) : 0;
    };
  });
}

// ---- encode / decode -----------------------------------------------------

struct CodeArgs {
  std::string model, in, out;
  double lambda = 0.0;
};

void add_encode(CLI::App& app, CodeArgs& a, const Globals& g, std::function<int()>& action) {
  auto* sub = app.add_subcommand("encode", "Encode a RESB dataset into an RCBS bitstream");
  sub->add_option("--model", a.model, "RCMP model file")->required();
  sub->add_option("--lambda", a.lambda, "Rate-distortion trade-off; any value inside the model grid")->required();
  sub->add_option("--in", a.in, "Input RESB file")->required();
  sub->add_option("--out", a.out, "Output RCBS file")->required();
  sub->callback([&] {
    action = [&] {
      const auto model = lrc::load_model(a.model);
      const auto ds = lrc::load_blocks(a.in);
      const auto res = lrc::encode(model, ds, a.lambda, g.threads);
      const auto bytes = lrc::serialize_bitstream(res.stream);
      lrc::write_file(a.out, bytes);
      const double pixels = static_cast<double>(ds.size()) * ds.block_size * ds.block_size;
      print_json({{"out", a.out},
                  {"blocks", ds.size()},
                  {"lambda", a.lambda},
                  {"file_bytes", bytes.size()},
                  {"coded_bits", res.stream.coded_bits()},
                  {"estimated_bits", res.total_estimated_bits()},
                  {"bpp", static_cast<double>(res.stream.coded_bits()) / pixels}});
      return 0;
    };
  });
}

void add_decode(CLI::App& app, CodeArgs& a, const Globals& g, std::function<int()>& action) {
  auto* sub = app.add_subcommand("decode", "Decode an RCBS bitstream into reconstructed RESB blocks");
  sub->add_option("--model", a.model, "RCMP model file (must match the bitstream's model hash)")->required();
  sub->add_option("--in", a.in, "Input RCBS file")->required();
  sub->add_option("--out", a.out, "Output RESB file")->required();
  sub->callback([&] {
    action = [&] {
      const auto model = lrc::load_model(a.model);
      const auto bytes = lrc::read_file(a.in);
      const auto ds = lrc::decode(model, bytes, g.threads);
      lrc::write_blocks(ds, a.out);
      print_json({{"out", a.out}, {"blocks", ds.size()}, {"lambda", lrc::parse_bitstream(bytes).lambda}});
      return 0;
    };
  });
}

// ---- eval ----------------------------------------------------------------

struct EvalArgs {
  std::string model, data, reference, decoded, lambdas, label, metric = "psnr", report, csv;
};

void add_eval(CLI::App& app, EvalArgs& a, const Globals& g, std::function<int()>& action) {
  auto* sub = app.add_subcommand(
      "eval",
      "R-D sweep of a model over a dataset (CSV to stdout), or distortion of a decoded file against its source");
  sub->add_option("--model", a.model, "RCMP model file (sweep mode)");
  sub->add_option("--data", a.data, "RESB dataset to code (sweep mode)");
  sub->add_option("--lambdas", a.lambdas, "Lambda list a,b,c or log2:LO:HI (default: the model grid)");
  sub->add_option("--label", a.label, "Curve label (default: model file stem)");
  sub->add_option("--metric", a.metric, "Quality axis: psnr | ssim | neg_mse")->capture_default_str();
  sub->add_option("--csv", a.csv, "Also write the curve CSV here");
  sub->add_option("--report", a.report, "Write CSV, SVG plot and report.json into this directory");
  sub->add_option("--reference", a.reference, "Source RESB (file mode)");
  sub->add_option("--decoded", a.decoded, "Decoded RESB (file mode)");
  sub->footer(
      "CSV columns: label,lambda,rate_bpp,quality. Rate is measured from real range-coded bitstreams;\n"
      "PSNR uses the dataset mean MSE and peak 2(2^bitdepth - 1); SSIM is the mean per block.");
  sub->callback([&] {
    action = [&] {
      const auto metric = lrc::parse_quality_metric(a.metric);
      if (!a.reference.empty() || !a.decoded.empty()) {
        lrc::require(!a.reference.empty() && !a.decoded.empty(), ErrorCode::kInvalidArgument,
                     "--reference and --decoded go together");
        const auto ref = lrc::load_blocks(a.reference);
        const auto dec = lrc::load_blocks(a.decoded, ref.block_size);
        lrc::require(ref.size() == dec.size(), ErrorCode::kSizeMismatch, "datasets differ in block count");
        const double peak = lrc::residual_peak(ref.bitdepth);
        double se = 0.0, ssim_sum = 0.0;
        for (std::size_t i = 0; i < ref.size(); ++i) {
          se += lrc::mse(ref.blocks[i], dec.blocks[i]);
          if (ref.block_size >= 11) ssim_sum += lrc::ssim(ref.blocks[i], dec.blocks[i], peak);
        }
        const double m = se / static_cast<double>(ref.size());
        json j{{"blocks", ref.size()}, {"mse", m}, {"psnr", lrc::psnr_from_mse(m, peak)}, {"peak", peak}};
        j["ssim"] = ref.block_size >= 11 ? json(ssim_sum / static_cast<double>(ref.size())) : json(nullptr);
        print_json(j);
        return 0;
      }
      lrc::require(!a.model.empty() && !a.data.empty(), ErrorCode::kInvalidArgument,
                   "eval needs --model and --data (or --reference and --decoded)");
      const auto model = lrc::load_model(a.model);
      const auto ds = lrc::load_blocks(a.data);
      const auto lams = a.lambdas.empty() ? model.gains.grid : lrc::parse_lambda_list(a.lambdas);
      const std::string label = a.label.empty() ? std::filesystem::path(a.model).stem().string() : a.label;
      std::vector<lrc::RDResult> results;
      for (double lam : lams) {
        results.push_back(lrc::rd_at_lambda(model, ds, lam, g.threads));
        const auto& r = results.back();
        log("lambda " + std::to_string(lam) + ": " + std::to_string(r.rate_bpp) + " bpp, psnr " +
            std::to_string(r.psnr));
      }
      const auto curve = lrc::curve_from_results(results, metric, label);
      for (const auto& w : curve.warnings) log("warning: " + w);
      const auto csv = lrc::curve_to_csv(curve);
      std::cout << csv;
      if (!a.csv.empty()) write_text(a.csv, csv);
      if (!a.report.empty()) lrc::emit_report({curve}, a.report);
      return 0;
    };
  });
}

// ---- bdrate / report -----------------------------------------------------

struct BdArgs {
  std::string ref, test, metric = "psnr";
};

void add_bdrate(CLI::App& app, BdArgs& a, std::function<int()>& action) {
  auto* sub = app.add_subcommand("bdrate", "Bjontegaard delta rate (percent) of --test against --ref");
  sub->add_option("--ref", a.ref, "Reference curve CSV")->required();
  sub->add_option("--test", a.test, "Test curve CSV")->required();
  sub->add_option("--metric", a.metric, "Quality axis of both curves: psnr | ssim | neg_mse")->capture_default_str();
  sub->footer("Cubic least-squares fit of log10(rate) over quality, integrated over the shared quality range.\n"
              "Negative values mean --test needs less rate. Prints one number.");
  sub->callback([&] {
    action = [&] {
      const auto metric = lrc::parse_quality_metric(a.metric);
      const double bd = lrc::bd_rate(lrc::read_curve_csv(a.ref, metric), lrc::read_curve_csv(a.test, metric));
      std::cout << format_percent(bd) << std::endl;
      return 0;
    };
  });
}

struct ReportArgs {
  std::vector<std::string> curves;
  std::string out, metric = "psnr";
};

void add_report(CLI::App& app, ReportArgs& a, std::function<int()>& action) {
  auto* sub = app.add_subcommand("report", "Combine curve CSVs into CSV files, an SVG plot and report.json");
  sub->add_option("--curves", a.curves, "Curve CSV files")->required();
  sub->add_option("--out", a.out, "Output directory")->required();
  sub->add_option("--metric", a.metric, "Quality axis: psnr | ssim | neg_mse")->capture_default_str();
  sub->callback([&] {
    action = [&] {
      const auto metric = lrc::parse_quality_metric(a.metric);
      std::vector<lrc::RDCurve> curves;
      for (const auto& path : a.curves) curves.push_back(lrc::read_curve_csv(path, metric));
      json files = json::array();
      for (const auto& f : lrc::emit_report(curves, a.out)) files.push_back(f.string());
      print_json({{"files", files}});
      return 0;
    };
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lrc: learned residual transform coding toolkit"};
  app.require_subcommand(1);
  // --seed and --threads may also follow the subcommand.
  app.fallthrough();
  app.footer(kExitCodeHelp);
  Globals g;
  g.seed_option = app.add_option("--seed", g.seed, "Seed for all randomness")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads for coding and evaluation")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  std::function<int()> action;
  GenArgs gen;
  TrainArgs tr;
  CodeArgs enc, dec;
  EvalArgs ev;
  BdArgs bd;
  ReportArgs rep;
  add_gen(app, gen, g, action);
  add_train(app, tr, g, action);
  add_encode(app, enc, g, action);
  add_decode(app, dec, g, action);
  add_eval(app, ev, g, action);
  add_bdrate(app, bd, action);
  add_report(app, rep, action);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    return action ? action() : kExitUsage;
  } catch (const lrc::Error& e) {
    std::cerr << "error (" << lrc::to_string(e.code()) << "): " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
