#include "dafnet/data.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dafnet/errors.hpp"

namespace dafnet::data {

namespace fs = std::filesystem;

namespace {

bool is_image(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

std::map<std::string, fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("missing dataset folder: " + dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !is_image(entry.path())) continue;
    const std::string stem = entry.path().stem().string();
    if (!out.emplace(stem, entry.path()).second) {
      throw DataError("duplicate stem '" + stem + "' in " + dir.string());
    }
  }
  return out;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace

DatasetManifest scan_dataset(const fs::path& root, const std::string& split) {
  const fs::path base = root / split;
  if (!fs::is_directory(base)) throw DataError("dataset split not found: " + base.string());
  const auto imgs = list_images(base / "Imgs");
  const auto depth = list_images(base / "Depth");
  const auto gt = list_images(base / "GT");

  DatasetManifest m;
  m.root = root;
  m.split = split;
  std::set<std::string> stems;
  for (const auto* folder : {&imgs, &depth, &gt})
    for (const auto& [stem, _] : *folder) stems.insert(stem);
  for (const auto& stem : stems) {
    const bool in_rgb = imgs.count(stem), in_depth = depth.count(stem), in_gt = gt.count(stem);
    if (in_rgb && in_depth && in_gt) {
      m.ids.push_back(stem);
      m.rgb.push_back(imgs.at(stem));
      m.depth.push_back(depth.at(stem));
      m.gt.push_back(gt.at(stem));
      continue;
    }
    std::string missing;
    if (!in_rgb) missing += " Imgs";
    if (!in_depth) missing += " Depth";
    if (!in_gt) missing += " GT";
    m.warnings.push_back("orphan '" + stem + "' missing from:" + missing);
  }
  if (m.ids.empty()) throw DataError("no complete (Imgs, Depth, GT) triplets under " + base.string());
  return m;
}

cv::Mat read_image(const fs::path& path, int flags) {
  if (!fs::exists(path)) throw DataError("file not found: " + path.string());
  cv::Mat img = cv::imread(path.string(), flags);
  if (img.empty()) throw DataError("cannot decode image: " + path.string());
  return img;
}

Triplet read_inputs(const fs::path& rgb_path, const fs::path& depth_path, int size,
                    std::vector<std::string>* warnings) {
  if (depth_path.empty() || !fs::exists(depth_path)) {
    throw DataError("depth map not found: '" + depth_path.string() +
                    "'; generate one with an external monocular depth estimator (e.g. MiDaS)");
  }
  const cv::Size target(size, size);
  Triplet t;

  cv::Mat bgr = read_image(rgb_path, cv::IMREAD_COLOR);
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  rgb.convertTo(rgb, CV_64FC3, 1.0 / 255.0);
  t.original_size = {rgb.rows, rgb.cols};
  cv::resize(rgb, t.rgb, target, 0, 0, cv::INTER_LINEAR);

  cv::Mat depth = read_image(depth_path, cv::IMREAD_UNCHANGED);
  if (depth.channels() != 1) {
    if (warnings) warnings->push_back("depth map is not single-channel, converted by luminance: " + depth_path.string());
    cv::cvtColor(depth, depth, depth.channels() == 4 ? cv::COLOR_BGRA2GRAY : cv::COLOR_BGR2GRAY);
  }
  const double depth_scale = depth.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0;
  depth.convertTo(depth, CV_64FC1, depth_scale);
  cv::resize(depth, t.depth, target, 0, 0, cv::INTER_LINEAR);
  return t;
}

Triplet read_triplet(const fs::path& rgb_path, const fs::path& depth_path, const fs::path& gt_path,
                     int size, std::vector<std::string>* warnings) {
  Triplet t = read_inputs(rgb_path, depth_path, size, warnings);
  const cv::Size target(size, size);
  cv::Mat gt = read_image(gt_path, cv::IMREAD_GRAYSCALE);
  t.original_size = {gt.rows, gt.cols};
  cv::Mat gt_resized;
  cv::resize(gt, gt_resized, target, 0, 0, cv::INTER_NEAREST_EXACT);
  cv::threshold(gt_resized, t.gt, 127, 1, cv::THRESH_BINARY);
  return t;
}

void flip_horizontal(Triplet& t) {
  cv::flip(t.rgb, t.rgb, 1);
  cv::flip(t.depth, t.depth, 1);
  if (!t.gt.empty()) cv::flip(t.gt, t.gt, 1);
}

void border_crop(Triplet& t, int margin) {
  if (margin <= 0) return;
  const int h = t.depth.rows, w = t.depth.cols;
  if (2 * margin >= h || 2 * margin >= w) throw ContractViolation("border_crop: margin too large");
  const cv::Rect roi(margin, margin, w - 2 * margin, h - 2 * margin);
  const cv::Size size(w, h);
  cv::resize(t.rgb(roi).clone(), t.rgb, size, 0, 0, cv::INTER_LINEAR);
  cv::resize(t.depth(roi).clone(), t.depth, size, 0, 0, cv::INTER_LINEAR);
  if (!t.gt.empty()) cv::resize(t.gt(roi).clone(), t.gt, size, 0, 0, cv::INTER_NEAREST_EXACT);
}

void augment(Triplet& t, Rng& rng, const AugmentOptions& options) {
  if (!options.enabled) return;
  if (uniform01(rng) < options.flip_prob) flip_horizontal(t);
  if (uniform01(rng) < options.crop_prob) {
    const int limit = static_cast<int>(options.crop_max * std::min(t.depth.rows, t.depth.cols));
    const int margin = std::uniform_int_distribution<int>(0, std::max(limit, 0))(rng);
    border_crop(t, margin);
  }
}

Sample to_sample(const Triplet& t, const std::string& id, std::array<int, 2> original_size,
                 const NormalizeOptions& norm) {
  const int h = t.depth.rows, w = t.depth.cols;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Sample s;
  s.id = id;
  s.original_size = original_size;

  std::vector<double> rgb(3 * plane);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const auto& px = t.rgb.at<cv::Vec3d>(r, c);
      for (int ch = 0; ch < 3; ++ch) {
        rgb[ch * plane + static_cast<std::size_t>(r) * w + c] = (px[ch] - norm.mean[ch]) / norm.std[ch];
      }
    }
  }
  s.rgb = Tensor::from({3, h, w}, std::move(rgb));

  double lo, hi;
  cv::minMaxLoc(t.depth, &lo, &hi);
  std::vector<double> depth(plane, 0.0);
  if (hi > lo) {
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        depth[static_cast<std::size_t>(r) * w + c] = (t.depth.at<double>(r, c) - lo) / (hi - lo);
  }
  s.depth = Tensor::from({1, h, w}, std::move(depth));

  if (t.gt.empty()) return s;
  s.gt.resize(plane);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) s.gt[static_cast<std::size_t>(r) * w + c] = t.gt.at<unsigned char>(r, c) ? 1.0 : 0.0;
  return s;
}

std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
  return splitmix(splitmix(splitmix(seed) ^ epoch) ^ index);
}

Sample load_sample(const DatasetManifest& manifest, std::size_t index, int size, bool train,
                   Rng& rng, const AugmentOptions& augment_options, const NormalizeOptions& norm) {
  if (index >= manifest.count()) {
    throw ContractViolation("load_sample: index " + std::to_string(index) + " out of range");
  }
  std::vector<std::string> warnings;
  Triplet t = read_triplet(manifest.rgb[index], manifest.depth[index], manifest.gt[index], size, &warnings);
  if (train) augment(t, rng, augment_options);
  Sample s = to_sample(t, manifest.ids[index], t.original_size, norm);
  s.warnings = std::move(warnings);
  return s;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, std::size_t batch_size,
                                                    std::uint64_t seed, std::uint64_t epoch,
                                                    bool train) {
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  if (train) {
    Rng rng(splitmix(seed) ^ splitmix(epoch + 0x5851f42d4c957f2dULL));
    // Fisher-Yates on raw engine draws.
    for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < count; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<long>(i),
                     order.begin() + static_cast<long>(std::min(count, i + batch_size)));
  }
  return out;
}

BatchStream::BatchStream(const DatasetManifest& manifest, int size, std::size_t batch_size,
                         std::uint64_t seed, std::uint64_t epoch, bool train,
                         AugmentOptions augment, NormalizeOptions norm)
    : manifest_(&manifest),
      size_(size),
      seed_(seed),
      epoch_(epoch),
      train_(train),
      augment_(augment),
      norm_(norm),
      batches_(batch_indices(manifest.count(), batch_size, seed, epoch, train)) {}

std::optional<std::vector<Sample>> BatchStream::next() {
  if (cursor_ >= batches_.size()) return std::nullopt;
  std::vector<Sample> batch;
  for (std::size_t index : batches_[cursor_++]) {
    Rng rng(sample_seed(seed_, epoch_, index));
    batch.push_back(load_sample(*manifest_, index, size_, train_, rng, augment_, norm_));
  }
  return batch;
}

}  // namespace dafnet::data
