#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <opencv2/core.hpp>

#include "dafnet/config.hpp"
#include "dafnet/metrics.hpp"
#include "dafnet/model.hpp"

// Command implementations behind the CLI: train, evaluate, predict, ablate,
// gradcheck and report. Every command is deterministic given its inputs.
namespace dafnet::harness {

namespace fs = std::filesystem;

struct TrainOptions {
  bool quiet = false;
  bool write_checkpoints = true;
};

struct StepRecord {
  long step = 0;
  int epoch = 0;
  double loss = 0.0;  // batch mean of the weighted total
  double lr = 0.0;
  std::array<double, 3> per_output{};  // batch means of BCE + IoU per output
};

struct TrainResult {
  std::vector<StepRecord> log;
  fs::path best_checkpoint, last_checkpoint, log_path;
  double best_epoch_loss = 0.0;
};

// AdamW with step-decayed lr over the training split. Writes
// <output_dir>/{config.txt,train_log.csv,best.ckpt,last.ckpt}. A non-finite
// loss aborts with a NumericError naming the batch and a dump file.
TrainResult train(const config::RunConfig& config, const TrainOptions& options = {});
// Same loop on an existing model (no files written unless requested).
TrainResult train_model(DafNet& model, const config::RunConfig& config, const TrainOptions& options);

// sigmoid(f_out_1) resized bilinearly to (H0, W0) and quantized to 8 bits.
cv::Mat render_prediction(const DafNet& model, const Tensor& rgb, const Tensor& depth,
                          std::array<int, 2> original_size);

// Per-sample probabilities at the ground-truth size, as a metric grid.
metrics::Grid to_grid(const cv::Mat& prediction);

struct EvaluateResult {
  metrics::MetricReport report;
  fs::path prediction_dir, csv_path;
};

// Checks `config` against the checkpoint's architecture keys, writes one PNG
// per sample of `data_dir` (a split folder with Imgs/Depth/GT) under
// <output_dir>/eval/<name>/, then scores them against data_dir/GT.
EvaluateResult evaluate(const config::RunConfig& config, const fs::path& checkpoint,
                        const fs::path& data_dir, metrics::EVariant variant, bool quiet = false);

// Writes the prediction for one rgb/depth pair to `out`; with `panel` also
// writes <out stem>_panel.png (rgb | depth | prediction). Returns the
// written paths.
std::vector<fs::path> predict(const fs::path& checkpoint, const fs::path& rgb, const fs::path& depth,
                              const fs::path& out, bool panel);

struct AblationVariant {
  std::string name;
  std::string description;
  std::vector<std::pair<std::string, std::string>> delta;  // config key -> value
};

std::vector<std::string> suite_names();
// Throws ConfigError for an unknown suite.
std::vector<AblationVariant> ablation_suite(const std::string& suite);
config::RunConfig apply_variant(const config::RunConfig& base, const AblationVariant& variant);

struct AblationRow {
  std::string suite, variant, description;
  double loss = 0.0;
  bool finite = false;
  metrics::SampleScores scores;  // mean over the fixture samples
};

// Runs each selected variant (all when `only` is empty) on up to 12 samples
// of the base training split: optional `steps` of training, then one
// forward+backward per sample with a finiteness check, then metrics on the
// rendered predictions. Unknown variant names are ConfigErrors.
std::vector<AblationRow> ablate(const std::string& suite, const config::RunConfig& base,
                                const std::vector<std::string>& only = {}, int steps = 0,
                                bool quiet = false);
std::string ablation_csv(const std::vector<AblationRow>& rows);

struct ReportRow {
  std::string label;
  double s_alpha = 0.0, e_phi = 0.0, f_w_beta = 0.0, mae = 0.0;
};

// Collects every metric or ablation CSV below `runs_dir`, writes
// comparison.csv and comparison.png there and returns the rows.
std::vector<ReportRow> report(const fs::path& runs_dir, bool quiet = false);
cv::Mat bar_plot(const std::vector<ReportRow>& rows);

}  // namespace dafnet::harness
