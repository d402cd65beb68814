// dafnet command-line interface.
//
// Exit codes: 0 success, 1 usage, 2 config error, 3 data error,
// 4 numeric failure (non-finite loss, failed gradient check).

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <CLI11.hpp>

#include "dafnet/config.hpp"
#include "dafnet/errors.hpp"
#include "dafnet/gradcheck.hpp"
#include "dafnet/harness.hpp"

namespace fs = std::filesystem;
using namespace dafnet;

namespace {

config::RunConfig load_with_overrides(const std::string& path, const std::vector<std::string>& overrides) {
  config::RunConfig c = path.empty() ? config::RunConfig{} : config::load(path);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t"), e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    config::set_value(c, trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }
  c.validate();
  return c;
}

int run_gradcheck(const config::RunConfig& c, const std::string& corrupt) {
  const auto reports = gradcheck::run_blocks(c, corrupt);
  std::vector<std::string> failed;
  fmt::print("{:<10} {:>12} {:>10} {:>8} {:>8}  {}\n", "block", "worst_rel", "tolerance", "checked", "kinks", "status");
  for (const auto& r : reports) {
    fmt::print("{:<10} {:>12.3e} {:>10.0e} {:>8} {:>8}  {}\n", r.block, r.worst, r.tolerance, r.checked, r.skipped,
               r.passed() ? "PASS" : "FAIL");
    if (!r.passed()) failed.push_back(r.block);
  }
  if (!failed.empty()) {
    std::string names;
    for (const auto& f : failed) names += (names.empty() ? "" : ", ") + f;
    throw NumericError("gradient check failed for block(s): " + names);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dafnet: RGB-D camouflaged object detection (train, evaluate, predict, ablate, gradcheck, report)"};
  app.require_subcommand(1);

  std::string config_path, ckpt, data_dir, e_variant = "mean", rgb, depth, out, suite, corrupt, runs;
  std::vector<std::string> overrides, variants;
  std::uint64_t seed = 0;
  int steps = 0;
  bool panel = false;

  auto add_overrides = [&](CLI::App* cmd) {
    cmd->add_option("--set", overrides, "Config override key=value (repeatable)");
  };

  auto* train = app.add_subcommand("train", "Train a model; writes checkpoints and a loss log");
  train->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  auto* seed_opt = train->add_option("--seed", seed, "Override the config seed");
  add_overrides(train);

  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on a dataset split");
  evaluate->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--ckpt", ckpt, "Checkpoint")->required();
  evaluate->add_option("--data", data_dir, "Split folder containing Imgs/, Depth/, GT/")->required();
  evaluate->add_option("--e-variant", e_variant, "E-measure variant")->check(CLI::IsMember({"mean", "adaptive"}));
  add_overrides(evaluate);

  auto* predict = app.add_subcommand("predict", "Predict one rgb/depth pair");
  predict->add_option("--ckpt", ckpt, "Checkpoint")->required();
  predict->add_option("--rgb", rgb, "RGB image")->required();
  predict->add_option("--depth", depth, "Depth map (from an external depth estimator)")->required();
  predict->add_option("--out", out, "Output PNG (default: <rgb stem>_pred.png)");
  predict->add_flag("--panel", panel, "Also write an rgb | depth | prediction panel");

  auto* ablate = app.add_subcommand("ablate", "Run an ablation suite at fixture scale");
  ablate->add_option("--suite", suite, "Suite")->required()->check(CLI::IsMember(harness::suite_names()));
  ablate->add_option("--config", config_path, "Base config file")->required()->check(CLI::ExistingFile);
  ablate->add_option("--variant", variants, "Only these variants (repeatable)");
  ablate->add_option("--steps", steps, "Training steps per variant before the check")->check(CLI::NonNegativeNumber);
  add_overrides(ablate);

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck_cmd->add_option("--config", config_path, "Config file (modes and flags)")->check(CLI::ExistingFile);
  gradcheck_cmd->add_option("--corrupt", corrupt, "Self-test: corrupt the analytic gradient of a block");
  add_overrides(gradcheck_cmd);

  auto* report = app.add_subcommand("report", "Aggregate metric CSVs into a table and bar plot");
  report->add_option("--runs", runs, "Directory searched recursively for CSVs")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) {
      auto c = load_with_overrides(config_path, overrides);
      if (*seed_opt) c.seed = seed;
      harness::train(c);
    } else if (*evaluate) {
      const auto c = load_with_overrides(config_path, overrides);
      harness::evaluate(c, ckpt, data_dir, metrics::parse_e_variant(e_variant));
    } else if (*predict) {
      if (out.empty()) out = (fs::path(rgb).parent_path() / (fs::path(rgb).stem().string() + "_pred.png")).string();
      for (const auto& p : harness::predict(ckpt, rgb, depth, out, panel)) fmt::print("wrote {}\n", p.string());
    } else if (*ablate) {
      const auto c = load_with_overrides(config_path, overrides);
      const auto rows = harness::ablate(suite, c, variants, steps);
      const fs::path csv = fs::path(c.output_dir) / ("ablation_" + suite + ".csv");
      fs::create_directories(csv.parent_path());
      if (std::FILE* f = std::fopen(csv.string().c_str(), "wb")) {
        const auto text = harness::ablation_csv(rows);
        std::fwrite(text.data(), 1, text.size(), f);
        std::fclose(f);
      } else {
        throw DataError("cannot write " + csv.string());
      }
      fmt::print("wrote {}\n", csv.string());
      std::string bad;
      for (const auto& r : rows)
        if (!r.finite) bad += (bad.empty() ? "" : ", ") + r.variant;
      if (!bad.empty()) throw NumericError("non-finite loss or gradient in variant(s): " + bad);
    } else if (*gradcheck_cmd) {
      return run_gradcheck(load_with_overrides(config_path, overrides), corrupt);
    } else if (*report) {
      harness::report(runs);
      fmt::print("wrote {} and {}\n", (fs::path(runs) / "comparison.csv").string(),
                 (fs::path(runs) / "comparison.png").string());
    }
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return 2;
  } catch (const DataError& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    fmt::print(stderr, "numeric error: {}\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
