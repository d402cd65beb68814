#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "dafnet/parameters.hpp"
#include "dafnet/tensor.hpp"

// Dataset scanning, sample loading/augmentation and batching.
//
// Layout: <root>/<split>/Imgs/*.jpg|png, <root>/<split>/Depth/*.png,
//         <root>/<split>/GT/*.png
namespace dafnet::data {

struct DatasetManifest {
  std::filesystem::path root;
  std::string split;
  std::vector<std::string> ids;  // stems present in all three folders, lexicographic
  std::vector<std::filesystem::path> rgb, depth, gt;
  std::vector<std::string> warnings;  // orphan files

  std::size_t count() const { return ids.size(); }
};

DatasetManifest scan_dataset(const std::filesystem::path& root, const std::string& split);

struct AugmentOptions {
  bool enabled = true;
  double flip_prob = 0.5;
  double crop_prob = 0.5;
  double crop_max = 0.03;  // max border fraction removed per side
};

struct NormalizeOptions {
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std{0.229, 0.224, 0.225};
};

struct Sample {
  std::string id;
  Tensor rgb;                     // (3,S,S), standardized
  Tensor depth;                   // (1,S,S), in [0,1]
  std::vector<double> gt;         // S*S, binary, row-major (empty without gt)
  std::array<int, 2> original_size{0, 0};  // (H0, W0) of the ground truth
  std::vector<std::string> warnings;
};

// Images resized to S x S before augmentation: rgb CV_64FC3 in [0,1] (RGB
// order), depth CV_64FC1 in [0,1], gt CV_8UC1 in {0,1}.
struct Triplet {
  cv::Mat rgb, depth, gt;
  std::array<int, 2> original_size{0, 0};  // ground-truth (H0, W0) before resizing
};

// Decodes and bilinear-resizes rgb and depth; gt left empty and
// original_size set to the rgb size. A missing depth file is a DataError
// pointing at an external depth estimator.
Triplet read_inputs(const std::filesystem::path& rgb, const std::filesystem::path& depth, int size,
                    std::vector<std::string>* warnings);
// read_inputs plus the nearest-resized gt thresholded at 128; original_size
// is the gt size.
Triplet read_triplet(const std::filesystem::path& rgb, const std::filesystem::path& depth,
                     const std::filesystem::path& gt, int size, std::vector<std::string>* warnings);
// Decodes an image as-is (no resize); throws DataError with the path.
cv::Mat read_image(const std::filesystem::path& path, int flags);

void flip_horizontal(Triplet& t);
// Removes `margin` pixels from every side, then resizes back.
void border_crop(Triplet& t, int margin);
void augment(Triplet& t, Rng& rng, const AugmentOptions& options);

Sample to_sample(const Triplet& t, const std::string& id, std::array<int, 2> original_size,
                 const NormalizeOptions& norm = {});

// Seed for a sample draw; depends only on (seed, epoch, index).
std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index);

Sample load_sample(const DatasetManifest& manifest, std::size_t index, int size, bool train,
                   Rng& rng, const AugmentOptions& augment_options = {},
                   const NormalizeOptions& norm = {});

// Index batches for one epoch; shuffled by (seed, epoch) when train.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, std::size_t batch_size,
                                                    std::uint64_t seed, std::uint64_t epoch,
                                                    bool train);

// Stream of loaded batches for one epoch; the last batch may be partial.
class BatchStream {
 public:
  BatchStream(const DatasetManifest& manifest, int size, std::size_t batch_size,
              std::uint64_t seed, std::uint64_t epoch, bool train, AugmentOptions augment = {},
              NormalizeOptions norm = {});

  std::optional<std::vector<Sample>> next();
  std::size_t batch_count() const { return batches_.size(); }

 private:
  const DatasetManifest* manifest_;
  int size_;
  std::uint64_t seed_, epoch_;
  bool train_;
  AugmentOptions augment_;
  NormalizeOptions norm_;
  std::vector<std::vector<std::size_t>> batches_;
  std::size_t cursor_ = 0;
};

}  // namespace dafnet::data
