// Writes the bundled synthetic fixture: camouflaged ellipses on a textured
// background, with a depth map in which the object sits closer to the camera.
//
//   make_fixture <out_root>   ->  <out_root>/{train,test}/{Imgs,Depth,GT}/*.png

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace fs = std::filesystem;

namespace {

struct Size {
  int h, w;
};

void write_sample(const fs::path& split_dir, const std::string& id, Size size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int h = size.h, w = size.w;

  const double cy = h * (0.35 + 0.3 * u(rng)), cx = w * (0.35 + 0.3 * u(rng));
  const double ry = h * (0.18 + 0.12 * u(rng)), rx = w * (0.18 + 0.12 * u(rng));
  const double angle = 180.0 * u(rng);

  cv::Mat gt(h, w, CV_8UC1, cv::Scalar(0));
  cv::ellipse(gt, cv::Point2d(cx, cy), cv::Size2d(rx, ry), angle, 0, 360, cv::Scalar(255), cv::FILLED,
              cv::LINE_8);

  // Shared texture; the object differs by a small colour shift only.
  cv::Mat noise(h, w, CV_64FC3);
  cv::randn(noise, cv::Scalar::all(0.0), cv::Scalar::all(1.0));
  cv::GaussianBlur(noise, noise, cv::Size(0, 0), 1.5);
  const cv::Vec3d base(0.35 + 0.2 * u(rng), 0.45 + 0.2 * u(rng), 0.3 + 0.2 * u(rng));
  const cv::Vec3d shift(0.06, -0.04, 0.05);
  cv::Mat rgb(h, w, CV_8UC3);
  cv::Mat depth(h, w, CV_8UC1);
  const double tilt = 0.3 * u(rng);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const bool fg = gt.at<unsigned char>(r, c) != 0;
      const cv::Vec3d& n = noise.at<cv::Vec3d>(r, c);
      cv::Vec3b px;
      for (int ch = 0; ch < 3; ++ch) {
        const double v = base[ch] + (fg ? shift[ch] : 0.0) + 0.25 * n[ch];
        px[2 - ch] = cv::saturate_cast<unsigned char>(255.0 * v);  // BGR on disk
      }
      rgb.at<cv::Vec3b>(r, c) = px;
      const double background = 0.2 + tilt * r / h;
      depth.at<unsigned char>(r, c) = cv::saturate_cast<unsigned char>(255.0 * (fg ? 0.8 : background));
    }
  }
  cv::GaussianBlur(depth, depth, cv::Size(5, 5), 1.0);

  cv::imwrite((split_dir / "Imgs" / (id + ".png")).string(), rgb);
  cv::imwrite((split_dir / "Depth" / (id + ".png")).string(), depth);
  cv::imwrite((split_dir / "GT" / (id + ".png")).string(), gt);
}

void write_split(const fs::path& root, const std::string& split, int count, std::uint64_t seed) {
  static const Size sizes[] = {{96, 128}, {120, 88}, {80, 112}, {104, 104}, {72, 136}, {128, 96}};
  const fs::path dir = root / split;
  for (const char* sub : {"Imgs", "Depth", "GT"}) fs::create_directories(dir / sub);
  std::mt19937_64 rng(seed);
  cv::setRNGSeed(static_cast<int>(seed));
  for (int i = 0; i < count; ++i) {
    write_sample(dir, fmt::format("{}_{:03d}", split, i + 1), sizes[i % 6], rng);
  }
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: make_fixture <out_root>\n");
    return 2;
  }
  const fs::path root = argv[1];
  write_split(root, "train", 12, 7);
  write_split(root, "test", 4, 11);
  fmt::print("fixture written to {}\n", root.string());
  return 0;
}
