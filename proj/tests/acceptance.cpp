// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <opencv2/imgproc.hpp>

#include "dafnet/checkpoint.hpp"
#include "dafnet/config.hpp"
#include "dafnet/data.hpp"
#include "dafnet/dcf.hpp"
#include "dafnet/errors.hpp"
#include "dafnet/gradcheck.hpp"
#include "dafnet/harness.hpp"
#include "dafnet/losses.hpp"
#include "dafnet/metrics.hpp"
#include "dafnet/model.hpp"
#include "dafnet/ops.hpp"
#include "metric_oracle.hpp"

using namespace dafnet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Collects failed sub-checks; the criterion passes when none failed.
class Checks {
 public:
  void require(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  Outcome outcome(const std::string& summary) const {
    if (failures_.empty()) return {true, summary};
    std::string d = summary + " | failed: " + failures_.front();
    if (failures_.size() > 1) d += fmt::format(" (+{} more)", failures_.size() - 1);
    return {false, d};
  }

 private:
  std::vector<std::string> failures_;
};

fs::path source_dir() { return DAFNET_SOURCE_DIR; }
fs::path fixture_dir() { return source_dir() / "data" / "fixture"; }

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("dafnet_accept_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

bool bit_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

config::RunConfig fixture_config() {
  auto c = config::load(source_dir() / "configs" / "fixture.cfg");
  c.data.train_root = fixture_dir().string();
  c.data.eval_root = fixture_dir().string();
  return c;
}

// 1. Every block's analytic gradient matches central differences.
Outcome gradient_fidelity() {
  const auto start = std::chrono::steady_clock::now();
  const auto reports = gradcheck::run_blocks(config::RunConfig{});
  const double elapsed = seconds_since(start);
  Checks c;
  std::string worst;
  for (const auto& r : reports) {
    c.require(r.passed(), fmt::format("{} error {:.3g} > {:.0e}", r.block, r.worst, r.tolerance));
    c.require(r.checked > 0, r.block + " checked no coordinates");
    worst += fmt::format("{}{}={:.2g}", worst.empty() ? "" : " ", r.block, r.worst);
  }
  c.require(reports.size() == gradcheck::block_names().size(), "block count");
  c.require(elapsed < 120.0, fmt::format("runtime {:.1f}s >= 120s", elapsed));
  return c.outcome(fmt::format("{} blocks in {:.1f}s; worst relative error: {}", reports.size(), elapsed, worst));
}

// 2. x_f = q D' + R' at q = 0, 1 and in between, over random miniature inputs.
Outcome fusion_gating() {
  Checks c;
  Rng rng(2024);
  std::uniform_int_distribution<int> channels(1, 8), side(2, 8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double affine_error = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int ch = channels(rng), h = side(rng), w = side(rng);
    ParameterSet ps;
    const auto params = dcf::DcfParams::create(ps, "dcf", ch, ch, dcf::DcfMode::full, {4, 7, 4}, rng);
    const dcf::StagePair pair{random_tensor({ch, h, w}, rng), random_tensor({ch, h, w}, rng), 1};
    const auto att = dcf::cross_attend(pair, *params.cross);
    const Tensor r = att.r_prime, d = att.d_prime;

    const Tensor x0 = dcf::fuse(att, Tensor::from({1}, {0.0}));
    c.require(bit_equal(x0.values(), r.values()), fmt::format("trial {}: q=0 differs from R'", trial));

    const Tensor x1 = dcf::fuse(att, Tensor::from({1}, {1.0}));
    std::vector<double> sum(r.numel());
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = r.values()[i] + d.values()[i];
    c.require(bit_equal(x1.values(), sum), fmt::format("trial {}: q=1 differs from R'+D'", trial));

    for (int k = 0; k < 3; ++k) {
      const double q = unit(rng);
      const Tensor xq = dcf::fuse(att, Tensor::from({1}, {q}));
      for (std::size_t i = 0; i < sum.size(); ++i) {
        const double expect = r.values()[i] + q * d.values()[i];
        affine_error = std::max(affine_error, std::abs(xq.values()[i] - expect) / (1.0 + std::abs(expect)));
      }
    }

    // The learned gate itself stays in [0,1] and the full block uses it.
    const auto out = dcf::dcf_forward(pair, params, dcf::DcfMode::full);
    const double q = out.q.values()[0];
    c.require(q >= 0.0 && q <= 1.0, fmt::format("trial {}: q={} outside [0,1]", trial, q));
    const Tensor xf = dcf::fuse(att, out.q);
    c.require(bit_equal(out.fused.values(), xf.values()), fmt::format("trial {}: block output != fuse(q)", trial));
  }
  c.require(affine_error < 1e-12, fmt::format("affine error {:.3g}", affine_error));
  return c.outcome(fmt::format("100 random inputs; q=0 and q=1 bit-exact; affine error {:.2g}", affine_error));
}

// 3. Affinity rows are probability distributions.
Outcome affinity_rows() {
  Checks c;
  Rng rng(77);
  std::uniform_int_distribution<int> channels(1, 16), side(1, 8);
  std::uniform_real_distribution<double> scale(0.01, 20.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int ch = channels(rng), h = side(rng), w = side(rng);
    ParameterSet ps;
    const auto params = dcf::DcfParams::create(ps, "dcf", ch, ch, dcf::DcfMode::full, {4, 7, 4}, rng);
    const double s = scale(rng);
    const dcf::StagePair pair{random_tensor({ch, h, w}, rng, s), random_tensor({ch, h, w}, rng, s), 1};
    const Tensor fa = dcf::affinity(pair, *params.daw).f_a;
    c.require(fa.dim(0) == ch && fa.dim(1) == ch, fmt::format("trial {}: shape", trial));
    for (int i = 0; i < ch; ++i) {
      double row = 0.0;
      for (int j = 0; j < ch; ++j) {
        const double v = fa.values()[static_cast<std::size_t>(i) * ch + j];
        c.require(v >= 0.0 && std::isfinite(v), fmt::format("trial {}: entry {}", trial, v));
        row += v;
      }
      worst = std::max(worst, std::abs(row - 1.0));
    }
  }
  c.require(worst <= 1e-6, fmt::format("row sum deviation {:.3g}", worst));
  return c.outcome(fmt::format("1000 random cases; max |row sum - 1| = {:.2g}", worst));
}

// 4. Ablation switches do what they claim; every table variant runs finite.
Outcome ablation_modes() {
  Checks c;
  config::RunConfig small;
  small.model.stage_channels = {4, 8, 16, 32};
  small.model.embed_dim = 8;
  small.model.decoder_width = 4;
  small.data.input_size = 32;
  Rng rng(5);
  const Tensor rgb = random_tensor({3, 32, 32}, rng);
  const Tensor depth_a = random_tensor({1, 32, 32}, rng), depth_b = random_tensor({1, 32, 32}, rng);

  {
    auto cfg = small;
    cfg.model.encoder_mode = "no_depth";
    const DafNet m(config::to_model_config(cfg), 1);
    const Tensor a = m.forward(rgb, depth_a).prediction.logits[0], b = m.forward(rgb, depth_b).prediction.logits[0];
    c.require(bit_equal(a.values(), b.values()), "w/o depth output depends on depth");
    const DafNet full(config::to_model_config(small), 1);
    const Tensor fa = full.forward(rgb, depth_a).prediction.logits[0], fb = full.forward(rgb, depth_b).prediction.logits[0];
    c.require(!bit_equal(fa.values(), fb.values()), "full model ignores depth");
  }

  {
    // Without the global gate the decoder equals the gated decoder with the gate path removed.
    DafNet gated(config::to_model_config(small), 3);
    auto cfg = small;
    cfg.model.use_geca = false;
    DafNet plain(config::to_model_config(cfg), 9);
    for (const auto& e : plain.parameters().entries()) {
      const Tensor src = gated.parameters().get(e.name);
      Tensor dst = e.tensor;
      std::copy(src.values().begin(), src.values().end(), dst.mutable_values().begin());
    }
    const auto features = gated.encoder().encode(rgb, depth_a);
    auto& dec = gated.decoder();
    const auto fused = dec.enhance_fused(features.fused);
    const Tensor& finest = fused.maps[0];
    const int h = finest.dim(1), w = finest.dim(2);
    const Tensor concat = ops::concat0({ops::resize_bilinear(fused.maps[2], h, w),
                                       ops::resize_bilinear(fused.maps[1], h, w), finest});
    const Tensor f_out = decoder::fam(concat, dec.config().fam_pools, dec.aggregate_weight(),
                                      gated.parameters().get("decoder.aggregate.bias"));
    const auto& r = features.rgb_stages;
    const auto manual = dec.project_outputs(f_out, dec.enhance_rgb({r[1], r[2], r[3]}), small.data.input_size);
    const auto reference = plain.forward(rgb, depth_a).prediction;
    for (int k = 0; k < 3; ++k)
      c.require(bit_equal(manual.logits[k].values(), reference.logits[k].values()),
                fmt::format("w/o G-ECA output {} differs from bypassed gate", k));
    const auto with_gate = gated.forward(rgb, depth_a).prediction;
    c.require(!bit_equal(with_gate.logits[0].values(), reference.logits[0].values()), "gate has no effect");
  }

  int variants = 0;
  const auto base = fixture_config();
  for (const auto& suite : harness::suite_names()) {
    for (const auto& row : harness::ablate(suite, base, {}, 0, true)) {
      ++variants;
      c.require(row.finite && std::isfinite(row.loss),
                fmt::format("{} '{}' not finite", suite, row.variant));
    }
  }
  c.require(variants > 0, "no ablation variants");
  return c.outcome(fmt::format(
      "depth-free output invariant; gate-free decoder equals bypassed gate; {} table variants finite", variants));
}

// 5. Metrics agree with independent reference implementations.
Outcome metric_oracles() {
  Checks c;
  double worst = 0.0;
  int cases = 0;
  const auto corpus = oracle::mask_corpus();
  for (std::size_t m = 0; m < corpus.size(); ++m) {
    const auto& g = corpus[m];
    for (const auto& p : oracle::predictions_for(g, static_cast<unsigned>(m))) {
      ++cases;
      const double diffs[4] = {
          std::abs(metrics::mae(p, g) - oracle::mae(p, g)),
          std::abs(metrics::s_measure(p, g) - oracle::s_measure(p, g)),
          std::abs(metrics::e_measure(p, g) - oracle::e_measure(p, g)),
          std::abs(metrics::weighted_f_beta(p, g) - oracle::weighted_f(p, g)),
      };
      for (double d : diffs) worst = std::max(worst, d);
    }
    const double sum = std::accumulate(g.values.begin(), g.values.end(), 0.0);
    if (sum > 0 && sum < static_cast<double>(g.size())) {
      const auto s = metrics::score_sample(g, g);
      // Regularizing epsilons leave S, E and F a few ulps below 1.
      const auto one = [](double v) { return std::abs(v - 1.0) <= 1e-12; };
      c.require(one(s.s_alpha) && one(s.e_phi) && one(s.f_w_beta) && s.mae == 0.0,
                fmt::format("mask {}: perfect prediction scores {} {} {} {}", m, s.s_alpha, s.e_phi, s.f_w_beta, s.mae));
    }
    const metrics::Grid half(g.rows, g.cols, 0.5);
    c.require(metrics::mae(half, g) == 0.5, fmt::format("mask {}: MAE(0.5) = {}", m, metrics::mae(half, g)));
  }
  c.require(worst <= 1e-6, fmt::format("oracle deviation {:.3g}", worst));
  return c.outcome(fmt::format("{} masks, {} cases; max oracle deviation {:.2g}; perfect=1/1/1/0; MAE(0.5)=0.5",
                               corpus.size(), cases, worst));
}

// 6. Loss values at known points.
Outcome loss_sanity() {
  Checks c;
  const int n = 64;
  std::vector<double> target(n);
  for (int i = 0; i < n; ++i) target[i] = i % 3 == 0 ? 1.0 : 0.0;
  const double bce0 = losses::bce_loss(Tensor::full({1, 8, 8}, 0.0), target).values()[0];
  c.require(std::abs(bce0 - std::log(2.0)) <= 1e-9, fmt::format("BCE(0) = {:.12f}", bce0));

  std::vector<double> saturated(n);
  for (int i = 0; i < n; ++i) saturated[i] = target[i] > 0.5 ? 40.0 : -40.0;
  decoder::PredictionBundle bundle;
  for (auto& l : bundle.logits) l = Tensor::from({1, 8, 8}, saturated);
  const auto perfect = losses::total_loss(bundle, target);
  c.require(perfect.total.values()[0] < 1e-5, fmt::format("saturated total {:.3g}", perfect.total.values()[0]));

  const double pinned = losses::weighted_total({1.0, 1.0, 1.0});
  c.require(pinned == 1.75, fmt::format("pinned weighted total {}", pinned));

  Rng rng(6);
  for (auto& l : bundle.logits) l = random_tensor({1, 8, 8}, rng);
  const auto mixed = losses::total_loss(bundle, target);
  c.require(std::abs(mixed.total.values()[0] - losses::weighted_total(mixed.per_output)) < 1e-12,
            "total differs from weighted per-output sum");
  return c.outcome(fmt::format("BCE(0)-ln2 = {:.1e}; saturated total {:.1e}; pinned total {}",
                               bce0 - std::log(2.0), perfect.total.values()[0], pinned));
}

// 7. A small model memorizes a handful of samples, reproducibly.
struct OverfitRun {
  std::vector<harness::StepRecord> log;
  double mae = 0.0;
  std::vector<std::vector<double>> parameters;
  double seconds = 0.0;
};

OverfitRun overfit_once(const config::RunConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  OverfitRun run;
  DafNet model(config::to_model_config(cfg), cfg.seed);
  harness::TrainOptions opts;
  opts.quiet = true;
  opts.write_checkpoints = false;
  run.log = harness::train_model(model, cfg, opts).log;

  auto manifest = data::scan_dataset(cfg.data.train_root, cfg.data.train_split);
  const std::size_t count = std::min<std::size_t>(cfg.data.max_samples, manifest.count());
  double total = 0.0;
  Rng rng(0);
  for (std::size_t i = 0; i < count; ++i) {
    const auto s = data::load_sample(manifest, i, cfg.data.input_size, false, rng);
    const auto pred = harness::to_grid(harness::render_prediction(model, s.rgb, s.depth, s.original_size));
    total += metrics::mae(pred, metrics::read_grayscale(manifest.gt[i], true));
  }
  run.mae = total / static_cast<double>(count);
  for (const auto& e : model.parameters().entries())
    run.parameters.emplace_back(e.tensor.values().begin(), e.tensor.values().end());
  run.seconds = seconds_since(start);
  return run;
}

Outcome overfit_smoke() {
  auto cfg = fixture_config();
  cfg.data.input_size = 64;
  cfg.model.stage_channels = {8, 16, 32, 64};
  cfg.data.max_samples = 8;
  cfg.data.augment = true;
  cfg.optim.batch_size = 4;
  cfg.optim.max_steps = 300;
  cfg.optim.epochs = 1000;
  cfg.optim.lr = 1e-3;
  cfg.optim.lr_decay_every = 10000;
  cfg.output_dir = (fs::temp_directory_path() / "dafnet_accept_overfit").string();
  cfg.validate();

  Checks c;
  const auto a = overfit_once(cfg);
  const auto b = overfit_once(cfg);
  c.require(a.log.size() == 300, fmt::format("{} steps run", a.log.size()));
  c.require(a.mae < 0.08, fmt::format("training MAE {:.4f} >= 0.08", a.mae));
  c.require(a.seconds < 600.0, fmt::format("runtime {:.1f}s", a.seconds));
  bool same = a.log.size() == b.log.size() && a.mae == b.mae && a.parameters == b.parameters;
  for (std::size_t i = 0; same && i < a.log.size(); ++i) same = a.log[i].loss == b.log[i].loss;
  c.require(same, "second run differs");
  const double first = a.log.empty() ? 0.0 : a.log.front().loss, last = a.log.empty() ? 0.0 : a.log.back().loss;
  return c.outcome(fmt::format("{} steps on {} samples in {:.1f}s; loss {:.3f} -> {:.3f}; training MAE {:.4f}; rerun identical",
                               a.log.size(), cfg.data.max_samples, a.seconds, first, last, a.mae));
}

// 8. Augmentation geometry, evaluate/predict parity and lossless round trips.
cv::Point2d centroid(const cv::Mat& m) {
  cv::Mat f;
  m.convertTo(f, CV_64F);
  const cv::Moments mo = cv::moments(f);
  return {mo.m10 / mo.m00, mo.m01 / mo.m00};
}

Outcome pipeline_integrity() {
  Checks c;

  // A marker drawn identically in every modality stays co-located.
  double worst_shift = 0.0;
  data::AugmentOptions aug;
  aug.crop_prob = 1.0;
  aug.crop_max = 0.2;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    data::Triplet t;
    t.gt = cv::Mat::zeros(64, 64, CV_8U);
    cv::rectangle(t.gt, cv::Rect(8, 12, 10, 21), cv::Scalar(1), cv::FILLED);
    cv::rectangle(t.gt, cv::Rect(8, 12, 32, 8), cv::Scalar(1), cv::FILLED);
    t.gt.convertTo(t.depth, CV_64F);
    cv::Mat planes[3] = {t.depth.clone(), 1.0 - t.depth, t.depth * 0.5};
    cv::merge(planes, 3, t.rgb);
    t.original_size = {64, 64};
    Rng rng(seed);
    data::augment(t, rng, aug);
    std::vector<cv::Mat> rgb;
    cv::split(t.rgb, rgb);
    const auto g = centroid(t.gt), d = centroid(t.depth), r = centroid(rgb[0]);
    worst_shift = std::max({worst_shift, cv::norm(g - d), cv::norm(r - d)});
  }
  c.require(worst_shift <= 0.75, fmt::format("marker shift {:.3f} px", worst_shift));

  TempDir dir("pipeline");
  auto cfg = fixture_config();
  cfg.model.stage_channels = {4, 8, 16, 32};
  cfg.model.embed_dim = 8;
  cfg.model.decoder_width = 4;
  cfg.data.input_size = 32;
  cfg.data.max_samples = 4;
  cfg.optim.max_steps = 4;
  cfg.optim.batch_size = 2;
  cfg.output_dir = (dir.path() / "run").string();

  // Config text survives parse/serialize unchanged.
  const std::string text = config::serialize(cfg);
  c.require(config::serialize(config::parse(text)) == text, "config round trip");
  config::save(cfg, dir.path() / "cfg.txt");
  c.require(config::serialize(config::load(dir.path() / "cfg.txt")) == text, "config file round trip");

  const auto trained = harness::train(cfg, {true, true});
  const fs::path ckpt = trained.last_checkpoint;

  // Checkpoint: values restored exactly, re-save is byte-identical.
  checkpoint::Metadata meta;
  const DafNet loaded = checkpoint::load_model(ckpt, &meta);
  c.require(config::serialize(meta.config) == text, "checkpoint config");
  checkpoint::save(dir.path() / "again.ckpt", loaded, meta);
  c.require(read_bytes(ckpt) == read_bytes(dir.path() / "again.ckpt"), "checkpoint re-save bytes");

  // The same checkpoint predicts identical bytes through both paths.
  const fs::path split = fixture_dir() / "test";
  const auto eval = harness::evaluate(cfg, ckpt, split, metrics::EVariant::mean, true);
  const auto manifest = data::scan_dataset(fixture_dir(), "test");
  for (std::size_t i = 0; i < manifest.count(); ++i) {
    const fs::path out = dir.path() / "predict" / (manifest.ids[i] + ".png");
    harness::predict(ckpt, manifest.rgb[i], manifest.depth[i], out, false);
    c.require(read_bytes(out) == read_bytes(eval.prediction_dir / (manifest.ids[i] + ".png")),
              "predict/evaluate bytes differ for " + manifest.ids[i]);
  }
  return c.outcome(fmt::format("marker shift <= {:.2f} px over 40 draws; {} evaluate/predict PNGs identical; "
                               "config and checkpoint round trips exact",
                               worst_shift, manifest.count()));
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient fidelity", gradient_fidelity},
      {"fusion gating identities", fusion_gating},
      {"affinity row normalization", affinity_rows},
      {"ablation mode equivalences", ablation_modes},
      {"metric oracle agreement", metric_oracles},
      {"loss sanity", loss_sanity},
      {"overfit smoke", overfit_smoke},
      {"pipeline integrity", pipeline_integrity},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    fmt::print("{} [{}] {}: {} ({:.1f}s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail,
               seconds_since(start));
    std::fflush(stdout);
  }
  fmt::print("{}/{} criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
