#include "dafnet/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dafnet/checkpoint.hpp"
#include "dafnet/data.hpp"
#include "dafnet/errors.hpp"
#include "dafnet/losses.hpp"
#include "dafnet/ops.hpp"
#include "dafnet/optim.hpp"

namespace dafnet::harness {

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void write_png(const fs::path& path, const cv::Mat& image) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), image)) throw DataError("cannot write image " + path.string());
}

void print_warnings(const std::vector<std::string>& warnings, bool quiet) {
  if (quiet) return;
  for (const auto& w : warnings) fmt::print(stderr, "warning: {}\n", w);
}

data::DatasetManifest training_manifest(const config::RunConfig& config, std::size_t cap = 0) {
  auto manifest = data::scan_dataset(config.data.train_root, config.data.train_split);
  std::size_t limit = config.data.max_samples;
  if (cap != 0) limit = limit == 0 ? cap : std::min(limit, cap);
  if (limit != 0 && limit < manifest.count()) {
    manifest.ids.resize(limit);
    manifest.rgb.resize(limit);
    manifest.depth.resize(limit);
    manifest.gt.resize(limit);
  }
  return manifest;
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

std::string join_ids(const std::vector<data::Sample>& batch) {
  std::string out;
  for (const auto& s : batch) out += (out.empty() ? "" : ",") + s.id;
  return out;
}

[[noreturn]] void numeric_abort(const config::RunConfig& config, const StepRecord& record,
                                const std::vector<data::Sample>& batch, const std::string& offender) {
  const fs::path dump = fs::path(config.output_dir) / "nan_dump.txt";
  std::string text = fmt::format("step = {}\nepoch = {}\nlr = {}\nbatch = {}\noffending_sample = {}\n",
                                 record.step, record.epoch, record.lr, join_ids(batch), offender);
  for (const auto& s : batch) {
    const auto rgb = s.rgb.values();
    const auto depth = s.depth.values();
    const auto [rlo, rhi] = std::minmax_element(rgb.begin(), rgb.end());
    const auto [dlo, dhi] = std::minmax_element(depth.begin(), depth.end());
    text += fmt::format("sample {}: rgb [{}, {}] depth [{}, {}]\n", s.id, *rlo, *rhi, *dlo, *dhi);
  }
  write_text(dump, text);
  throw NumericError(fmt::format("non-finite loss at step {} (epoch {}), batch [{}], sample {}; dump: {}",
                                 record.step, record.epoch, join_ids(batch), offender, dump.string()));
}

}  // namespace

TrainResult train(const config::RunConfig& config, const TrainOptions& options) {
  config.validate();
  DafNet model(config::to_model_config(config), config.seed);
  return train_model(model, config, options);
}

TrainResult train_model(DafNet& model, const config::RunConfig& config, const TrainOptions& options) {
  config.validate();
  const auto manifest = training_manifest(config);
  print_warnings(manifest.warnings, options.quiet);
  const fs::path out_dir = config.output_dir;
  TrainResult result;
  if (options.write_checkpoints) {
    fs::create_directories(out_dir);
    config::save(config, out_dir / "config.txt");
    result.best_checkpoint = out_dir / "best.ckpt";
    result.last_checkpoint = out_dir / "last.ckpt";
    result.log_path = out_dir / "train_log.csv";
  }

  optim::AdamW optimizer(model.parameters(),
                         {config.optim.beta1, config.optim.beta2, config.optim.adam_eps, config.optim.weight_decay});
  const auto weights = config::to_loss_weights(config);
  const auto augment = config::to_augment_options(config);
  const int size = config.data.input_size;
  const std::size_t batch_size = static_cast<std::size_t>(config.optim.batch_size);

  std::ofstream log;
  if (options.write_checkpoints) {
    log.open(result.log_path, std::ios::binary);
    if (!log) throw DataError("cannot write " + result.log_path.string());
    log << "step,epoch,loss,lr,loss_1,loss_2,loss_3\n";
  }

  double best = std::numeric_limits<double>::infinity();
  long step = 0;
  bool done = false;
  for (int epoch = 0; epoch < config.optim.epochs && !done; ++epoch) {
    const double lr = optim::step_decay(config.optim.lr, epoch, config.optim.lr_decay_every,
                                        config.optim.lr_decay_factor);
    data::BatchStream stream(manifest, size, batch_size, config.seed, static_cast<std::uint64_t>(epoch), true,
                             augment);
    double epoch_sum = 0.0;
    int epoch_steps = 0;
    while (auto batch = stream.next()) {
      if (config.optim.max_steps > 0 && step >= config.optim.max_steps) {
        done = true;
        break;
      }
      StepRecord record;
      record.step = step + 1;
      record.epoch = epoch;
      record.lr = lr;
      model.parameters().zero_grad();
      const double inv = 1.0 / static_cast<double>(batch->size());
      for (const auto& sample : *batch) {
        print_warnings(sample.warnings, options.quiet);
        const auto out = model.forward(sample.rgb, sample.depth);
        const auto loss = losses::total_loss(out.prediction, sample.gt, weights);
        const double value = loss.total.item();
        if (!std::isfinite(value)) numeric_abort(config, record, *batch, sample.id);
        backward(ops::scale(loss.total, inv));
        record.loss += value * inv;
        for (int k = 0; k < 3; ++k) record.per_output[k] += loss.per_output[k] * inv;
      }
      for (const auto& e : model.parameters().entries()) {
        if (!all_finite(e.tensor.grad())) numeric_abort(config, record, *batch, "gradient of " + e.name);
      }
      optimizer.step(lr);
      ++step;
      if (log.is_open()) {
        log << fmt::format("{},{},{},{},{},{},{}\n", record.step, record.epoch, record.loss, record.lr,
                           record.per_output[0], record.per_output[1], record.per_output[2]);
      }
      if (!options.quiet && (step % 10 == 0 || step == 1)) {
        fmt::print("step {:6d}  epoch {:4d}  loss {:.6f}  lr {:.3g}\n", record.step, epoch, record.loss, lr);
      }
      result.log.push_back(record);
      epoch_sum += record.loss;
      ++epoch_steps;
    }
    if (epoch_steps > 0) {
      const double mean = epoch_sum / epoch_steps;
      if (mean < best) {
        best = mean;
        if (options.write_checkpoints) {
          checkpoint::save(result.best_checkpoint, model, {config, static_cast<std::uint64_t>(step)});
        }
      }
    }
  }
  result.best_epoch_loss = best;
  if (options.write_checkpoints) {
    checkpoint::save(result.last_checkpoint, model, {config, static_cast<std::uint64_t>(step)});
    if (!options.quiet) fmt::print("wrote {} and {}\n", result.best_checkpoint.string(), result.last_checkpoint.string());
  }
  return result;
}

cv::Mat render_prediction(const DafNet& model, const Tensor& rgb, const Tensor& depth,
                          std::array<int, 2> original_size) {
  NoGradGuard guard;
  const auto out = model.forward(rgb, depth);
  const Tensor prob = ops::sigmoid(out.prediction.logits[0]);
  cv::Mat p(prob.dim(1), prob.dim(2), CV_64FC1, const_cast<double*>(prob.values().data()));
  cv::Mat resized;
  cv::resize(p, resized, cv::Size(original_size[1], original_size[0]), 0, 0, cv::INTER_LINEAR);
  cv::Mat out8;
  resized.convertTo(out8, CV_8UC1, 255.0);
  return out8;
}

metrics::Grid to_grid(const cv::Mat& prediction) {
  metrics::Grid g(prediction.rows, prediction.cols);
  for (int r = 0; r < prediction.rows; ++r)
    for (int c = 0; c < prediction.cols; ++c) g.at(r, c) = prediction.at<unsigned char>(r, c) / 255.0;
  return g;
}

namespace {

fs::path normalized_dir(const fs::path& dir) {
  fs::path d = dir.lexically_normal();
  if (d.filename().empty()) d = d.parent_path();
  return d;
}

}  // namespace

EvaluateResult evaluate(const config::RunConfig& config, const fs::path& checkpoint_path,
                        const fs::path& data_dir, metrics::EVariant variant, bool quiet) {
  config.validate();
  checkpoint::Metadata meta;
  const DafNet model = checkpoint::load_model(checkpoint_path, &meta);
  if (const auto key = config::first_architecture_difference(config, meta.config); !key.empty()) {
    throw ConfigError(fmt::format("config/checkpoint mismatch at '{}': config has '{}', checkpoint has '{}'", key,
                                  config::get_value(config, key), config::get_value(meta.config, key)));
  }
  const fs::path dir = normalized_dir(data_dir);
  const auto manifest = data::scan_dataset(dir.parent_path(), dir.filename().string());
  print_warnings(manifest.warnings, quiet);
  const std::string name = dir.filename().string();

  EvaluateResult result;
  result.prediction_dir = fs::path(config.output_dir) / "eval" / name;
  if (fs::exists(result.prediction_dir)) fs::remove_all(result.prediction_dir);
  const int size = meta.config.data.input_size;
  for (std::size_t i = 0; i < manifest.count(); ++i) {
    std::vector<std::string> warnings;
    const auto t = data::read_triplet(manifest.rgb[i], manifest.depth[i], manifest.gt[i], size, &warnings);
    print_warnings(warnings, quiet);
    const auto sample = data::to_sample(t, manifest.ids[i], t.original_size);
    write_png(result.prediction_dir / (manifest.ids[i] + ".png"),
              render_prediction(model, sample.rgb, sample.depth, t.original_size));
  }
  auto options = config::to_metric_options(config);
  options.e_variant = variant;
  result.report = metrics::evaluate_directory(result.prediction_dir, dir / "GT", name, options);
  result.csv_path = fs::path(config.output_dir) / "eval" / (name + "_metrics.csv");
  write_text(result.csv_path, metrics::report_csv({result.report}));
  if (!quiet) fmt::print("{}", metrics::report_table({result.report}));
  return result;
}

std::vector<fs::path> predict(const fs::path& checkpoint_path, const fs::path& rgb, const fs::path& depth,
                              const fs::path& out, bool panel) {
  checkpoint::Metadata meta;
  const DafNet model = checkpoint::load_model(checkpoint_path, &meta);
  std::vector<std::string> warnings;
  const auto t = data::read_inputs(rgb, depth, meta.config.data.input_size, &warnings);
  print_warnings(warnings, false);
  const auto sample = data::to_sample(t, rgb.stem().string(), t.original_size);
  const cv::Mat prediction = render_prediction(model, sample.rgb, sample.depth, t.original_size);
  write_png(out, prediction);
  std::vector<fs::path> written{out};
  if (panel) {
    const cv::Size target(prediction.cols, prediction.rows);
    cv::Mat rgb_img = data::read_image(rgb, cv::IMREAD_COLOR);
    cv::Mat depth_img = data::read_image(depth, cv::IMREAD_GRAYSCALE);
    cv::resize(rgb_img, rgb_img, target, 0, 0, cv::INTER_LINEAR);
    cv::resize(depth_img, depth_img, target, 0, 0, cv::INTER_LINEAR);
    cv::Mat depth_bgr, pred_bgr, figure;
    cv::cvtColor(depth_img, depth_bgr, cv::COLOR_GRAY2BGR);
    cv::cvtColor(prediction, pred_bgr, cv::COLOR_GRAY2BGR);
    cv::hconcat(std::vector<cv::Mat>{rgb_img, depth_bgr, pred_bgr}, figure);
    const fs::path panel_path = out.parent_path() / (out.stem().string() + "_panel.png");
    write_png(panel_path, figure);
    written.push_back(panel_path);
  }
  return written;
}

std::vector<std::string> suite_names() { return {"table3", "table4", "table5", "table6"}; }

std::vector<AblationVariant> ablation_suite(const std::string& suite) {
  using D = std::vector<std::pair<std::string, std::string>>;
  const D fad_off{{"model.use_geca", "false"}, {"model.use_fam", "false"}, {"model.use_rgb_residual", "false"}};
  const D resnet_both{{"model.rgb_backbone", "resnet_like"}, {"model.depth_backbone", "resnet_like"}};
  auto cat = [](std::initializer_list<D> parts) {
    D out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
  };
  if (suite == "table3") {
    return {
        {"#1", "resnet depth + vit + resnet rgb; baseline fusion; no rmfe; no fad",
         cat({resnet_both, {{"model.dcf_mode", "baseline"}, {"model.use_rmfe", "false"}}, fad_off})},
        {"#2", "#1 with fad", cat({resnet_both, {{"model.dcf_mode", "baseline"}, {"model.use_rmfe", "false"}}})},
        {"#3", "dcf; no rmfe; no fad", cat({resnet_both, {{"model.use_rmfe", "false"}}, fad_off})},
        {"#4", "dcf + fad; no rmfe", cat({resnet_both, {{"model.use_rmfe", "false"}}})},
        {"#5", "dcf + rmfe + fad", resnet_both},
        {"#6", "res2net depth and rgb", {{"model.rgb_backbone", "res2net_like"}, {"model.depth_backbone", "res2net_like"}}},
        {"#7", "resnet depth + res2net rgb (full model)",
         {{"model.rgb_backbone", "res2net_like"}, {"model.depth_backbone", "resnet_like"}}},
    };
  }
  if (suite == "table4") {
    return {
        {"baseline", "concat + 1x1 fusion", {{"model.dcf_mode", "baseline"}}},
        {"w/o DAW", "depth confidence fixed to 1", {{"model.dcf_mode", "no_daw"}}},
        {"w/o CA-SA", "no cross attention", {{"model.dcf_mode", "no_ca_sa"}}},
        {"First Layer", "every stage weighted by stage-1 depth", {{"model.daw_source_stage", "1"}}},
        {"Second Layer", "every stage weighted by stage-2 depth", {{"model.daw_source_stage", "2"}}},
        {"Third Layer", "every stage weighted by stage-3 depth", {{"model.daw_source_stage", "3"}}},
        {"All Layer", "each stage weighted by its own depth", {{"model.daw_source_stage", "0"}}},
    };
  }
  if (suite == "table5") {
    return {
        {"w/o depth", "rgb backbone only", {{"model.encoder_mode", "no_depth"}}},
        {"w/o residual addition", "no cross-stage residual in the fusion branch",
         {{"model.encoder_mode", "no_residual"}}},
        {"w/o ViT", "transformer replaced by convolution", {{"model.encoder_mode", "no_vit"}}},
        {"DAF-Net", "full model", {{"model.encoder_mode", "full"}}},
    };
  }
  if (suite == "table6") {
    return {
        {"w/o G-ECA", "no global channel gate", {{"model.use_geca", "false"}}},
        {"w/o FAM", "plain 3x3 conv instead of pooled smoothing", {{"model.use_fam", "false"}}},
        {"w/o residual addition", "no rgb multiplication in the heads", {{"model.use_rgb_residual", "false"}}},
        {"DAF-Net", "full model", {}},
    };
  }
  throw ConfigError("unknown ablation suite '" + suite + "' (expected table3, table4, table5 or table6)");
}

config::RunConfig apply_variant(const config::RunConfig& base, const AblationVariant& variant) {
  config::RunConfig c = base;
  for (const auto& [key, value] : variant.delta) config::set_value(c, key, value);
  c.validate();
  return c;
}

std::vector<AblationRow> ablate(const std::string& suite, const config::RunConfig& base,
                                const std::vector<std::string>& only, int steps, bool quiet) {
  base.validate();
  auto variants = ablation_suite(suite);
  for (const auto& name : only) {
    if (std::none_of(variants.begin(), variants.end(), [&](const auto& v) { return v.name == name; })) {
      throw ConfigError("unknown variant '" + name + "' in suite " + suite);
    }
  }
  if (!only.empty()) {
    std::erase_if(variants, [&](const auto& v) { return std::find(only.begin(), only.end(), v.name) == only.end(); });
  }
  const auto manifest = training_manifest(base, 12);
  print_warnings(manifest.warnings, quiet);

  std::vector<AblationRow> rows;
  for (const auto& variant : variants) {
    config::RunConfig cfg = apply_variant(base, variant);
    DafNet model(config::to_model_config(cfg), cfg.seed);
    if (steps > 0) {
      config::RunConfig short_run = cfg;
      short_run.optim.max_steps = steps;
      train_model(model, short_run, {.quiet = true, .write_checkpoints = false});
    }
    AblationRow row;
    row.suite = suite;
    row.variant = variant.name;
    row.description = variant.description;
    row.finite = true;
    const auto weights = config::to_loss_weights(cfg);
    std::vector<metrics::SampleScores> scores;
    Rng unused(0);
    for (std::size_t i = 0; i < manifest.count(); ++i) {
      const auto sample = data::load_sample(manifest, i, cfg.data.input_size, false, unused);
      model.parameters().zero_grad();
      const auto out = model.forward(sample.rgb, sample.depth);
      const auto loss = losses::total_loss(out.prediction, sample.gt, weights);
      backward(loss.total);
      const double value = loss.total.item();
      row.finite = row.finite && std::isfinite(value);
      for (const auto& e : model.parameters().entries()) row.finite = row.finite && all_finite(e.tensor.grad());
      row.loss += value / static_cast<double>(manifest.count());
      const auto gt = metrics::read_grayscale(manifest.gt[i], true);
      const cv::Mat pred = render_prediction(model, sample.rgb, sample.depth, {gt.rows, gt.cols});
      scores.push_back(metrics::score_sample(to_grid(pred), gt, config::to_metric_options(cfg)));
    }
    const auto mean = metrics::aggregate(variant.name, scores);
    row.scores = {mean.s_alpha, mean.e_phi, mean.f_w_beta, mean.mae};
    if (!quiet) {
      fmt::print("{:<8} {:<24} loss {:.6f}  finite {}  S {:.3f}  E {:.3f}  F {:.3f}  MAE {:.3f}\n", suite,
                 variant.name, row.loss, row.finite ? "yes" : "NO", row.scores.s_alpha, row.scores.e_phi,
                 row.scores.f_w_beta, row.scores.mae);
    }
    rows.push_back(row);
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "suite,variant,description,loss,finite,s_alpha,e_phi,f_w_beta,mae\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{:.6f},{},{:.6f},{:.6f},{:.6f},{:.6f}\n", r.suite, r.variant, r.description, r.loss,
                       r.finite ? 1 : 0, r.scores.s_alpha, r.scores.e_phi, r.scores.f_w_beta, r.scores.mae);
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& text, const fs::path& file) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw DataError("malformed number '" + text + "' in " + file.string());
}

}  // namespace

std::vector<ReportRow> report(const fs::path& runs_dir, bool quiet) {
  if (!fs::is_directory(runs_dir)) throw DataError("runs directory not found: " + runs_dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(runs_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv" && entry.path().filename() != "comparison.csv")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<ReportRow> rows;
  for (const auto& file : files) {
    std::ifstream in(file);
    std::string header;
    if (!std::getline(in, header)) continue;
    const auto columns = split_csv_line(header);
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < columns.size(); ++i) index[columns[i]] = i;
    const bool metric = index.count("dataset") != 0;
    const bool ablation = index.count("variant") != 0;
    if ((!metric && !ablation) || !index.count("s_alpha") || !index.count("mae")) continue;
    const std::string run = fs::relative(file.parent_path(), runs_dir).generic_string();
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto cells = split_csv_line(line);
      if (cells.size() != columns.size()) throw DataError("ragged row in " + file.string());
      ReportRow r;
      r.label = metric ? (run == "." ? "" : run + "/") + cells[index["dataset"]]
                       : cells[index["suite"]] + "/" + cells[index["variant"]];
      r.s_alpha = parse_cell(cells[index["s_alpha"]], file);
      r.e_phi = parse_cell(cells[index["e_phi"]], file);
      r.f_w_beta = parse_cell(cells[index["f_w_beta"]], file);
      r.mae = parse_cell(cells[index["mae"]], file);
      rows.push_back(r);
    }
  }
  if (rows.empty()) throw DataError("no metric or ablation CSVs under " + runs_dir.string());

  std::string csv = "label,s_alpha,e_phi,f_w_beta,mae\n";
  std::size_t width = 5;
  for (const auto& r : rows) width = std::max(width, r.label.size());
  std::string table = fmt::format("{:<{}}  {:>8} {:>8} {:>8} {:>8}\n", "run", width, "S_alpha", "E_phi", "F_w_beta", "MAE");
  for (const auto& r : rows) {
    csv += fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f}\n", r.label, r.s_alpha, r.e_phi, r.f_w_beta, r.mae);
    table += fmt::format("{:<{}}  {:>8.3f} {:>8.3f} {:>8.3f} {:>8.3f}\n", r.label, width, r.s_alpha, r.e_phi,
                         r.f_w_beta, r.mae);
  }
  write_text(runs_dir / "comparison.csv", csv);
  write_png(runs_dir / "comparison.png", bar_plot(rows));
  if (!quiet) fmt::print("{}", table);
  return rows;
}

cv::Mat bar_plot(const std::vector<ReportRow>& rows) {
  constexpr int kBar = 14, kGap = 24, kPlotH = 300, kTop = 40, kLeft = 50, kLabelH = 150;
  const int group = 4 * kBar + kGap;
  const int width = std::max(kLeft + static_cast<int>(rows.size()) * group + 20, 420);
  cv::Mat img(kTop + kPlotH + kLabelH, width, CV_8UC3, cv::Scalar(255, 255, 255));
  const cv::Scalar colors[4] = {{180, 119, 31}, {14, 127, 255}, {44, 160, 44}, {40, 39, 214}};
  const char* names[4] = {"S_alpha", "E_phi", "F_w_beta", "MAE"};
  const int base_y = kTop + kPlotH;
  for (int t = 0; t <= 4; ++t) {
    const int y = base_y - t * kPlotH / 4;
    cv::line(img, {kLeft - 4, y}, {width - 10, y}, cv::Scalar(220, 220, 220), 1);
    cv::putText(img, fmt::format("{:.2f}", t * 0.25), {4, y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.35,
                cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
  }
  for (int m = 0; m < 4; ++m) {
    const int x = kLeft + m * 90;
    cv::rectangle(img, {x, 10}, {x + 12, 22}, colors[m], cv::FILLED);
    cv::putText(img, names[m], {x + 16, 21}, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double values[4] = {rows[i].s_alpha, rows[i].e_phi, rows[i].f_w_beta, rows[i].mae};
    const int x0 = kLeft + static_cast<int>(i) * group;
    for (int m = 0; m < 4; ++m) {
      const int h = static_cast<int>(std::lround(std::clamp(values[m], 0.0, 1.0) * kPlotH));
      cv::rectangle(img, {x0 + m * kBar, base_y - h}, {x0 + (m + 1) * kBar - 2, base_y}, colors[m], cv::FILLED);
    }
    // Vertical label below the group.
    const std::string label = rows[i].label.substr(0, 24);
    cv::Mat text(kBar * 2, kLabelH - 10, CV_8UC3, cv::Scalar(255, 255, 255));
    cv::putText(text, label, {2, kBar + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
    cv::Mat rotated;
    cv::rotate(text, rotated, cv::ROTATE_90_CLOCKWISE);
    const int x = std::min(x0 + kBar, width - rotated.cols);
    rotated.copyTo(img(cv::Rect(x, base_y + 6, rotated.cols, rotated.rows)));
  }
  return img;
}

}  // namespace dafnet::harness
