#include "dafnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <thread>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dafnet/errors.hpp"

namespace dafnet::metrics {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

void expect_pair(const Grid& p, const Grid& g, const char* op) {
  if (p.rows != g.rows || p.cols != g.cols || p.size() != g.size()) {
    throw ContractViolation(fmt::format("{}: prediction {}x{} vs ground truth {}x{}", op, p.rows,
                                        p.cols, g.rows, g.cols));
  }
  if (p.size() == 0) throw ContractViolation(fmt::format("{}: empty map", op));
  for (double v : g.values) {
    if (v != 0.0 && v != 1.0) throw ContractViolation(fmt::format("{}: ground truth is not binary", op));
  }
}

double mean_of(std::span<const double> v) {
  return v.empty() ? 0.0 : neumaier_sum(v) / static_cast<double>(v.size());
}

// Object similarity: 2x / (x^2 + 1 + sigma_x + eps), sample std (0 for one value).
double object_score(const std::vector<double>& v) {
  const double x = mean_of(v);
  double sigma = 0.0;
  if (v.size() > 1) {
    double acc = 0.0;
    for (double a : v) acc += (a - x) * (a - x);
    sigma = std::sqrt(acc / static_cast<double>(v.size() - 1));
  }
  return 2.0 * x / (x * x + 1.0 + sigma + kEps);
}

double s_object(const Grid& p, const Grid& g) {
  std::vector<double> fg, bg;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (g.values[i] == 1.0) fg.push_back(p.values[i]);
    else bg.push_back(1.0 - p.values[i]);
  }
  const double u = static_cast<double>(fg.size()) / static_cast<double>(p.size());
  return u * object_score(fg) + (1.0 - u) * object_score(bg);
}

// SSIM-style similarity of one quadrant [r0,r1) x [c0,c1).
double quadrant_ssim(const Grid& p, const Grid& g, int r0, int r1, int c0, int c1) {
  const int n = (r1 - r0) * (c1 - c0);
  double sx = 0.0, sy = 0.0;
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) sx += p.at(r, c), sy += g.at(r, c);
  const double x = sx / n, y = sy / n;
  double vx = 0.0, vy = 0.0, vxy = 0.0;
  for (int r = r0; r < r1; ++r) {
    for (int c = c0; c < c1; ++c) {
      const double dx = p.at(r, c) - x, dy = g.at(r, c) - y;
      vx += dx * dx;
      vy += dy * dy;
      vxy += dx * dy;
    }
  }
  const double denom = n - 1 + kEps;
  vx /= denom;
  vy /= denom;
  vxy /= denom;
  const double a = 4.0 * x * y * vxy;
  const double b = (x * x + y * y) * (vx + vy);
  if (a != 0.0) return a / (b + kEps);
  if (b == 0.0) return 1.0;
  return 0.0;
}

double s_region(const Grid& p, const Grid& g) {
  // Centroid in 1-based coordinates, rounded half away from zero.
  double total = 0.0, sum_c = 0.0, sum_r = 0.0;
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      const double v = g.at(r, c);
      total += v;
      sum_c += v * (c + 1);
      sum_r += v * (r + 1);
    }
  }
  int x, y;
  if (total == 0.0) {
    x = static_cast<int>(std::round(g.cols / 2.0));
    y = static_cast<int>(std::round(g.rows / 2.0));
  } else {
    x = static_cast<int>(std::round(sum_c / total));
    y = static_cast<int>(std::round(sum_r / total));
  }
  const double area = static_cast<double>(g.rows) * g.cols;
  const double w1 = static_cast<double>(x) * y / area;
  const double w2 = static_cast<double>(g.cols - x) * y / area;
  const double w3 = static_cast<double>(x) * (g.rows - y) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  // Empty quadrants carry zero weight and are skipped.
  auto part = [&](double w, int r0, int r1, int c0, int c1) {
    return (r1 > r0 && c1 > c0) ? w * quadrant_ssim(p, g, r0, r1, c0, c1) : 0.0;
  };
  return part(w1, 0, y, 0, x) + part(w2, 0, y, x, g.cols) + part(w3, y, g.rows, 0, x) +
         part(w4, y, g.rows, x, g.cols);
}

// ((2 ag af / (ag^2 + af^2 + eps) + 1)^2) / 4
double enhanced_value(double af, double ag) {
  const double align = 2.0 * ag * af / (ag * ag + af * af + kEps);
  return (align + 1.0) * (align + 1.0) / 4.0;
}

// Enhanced-alignment score from confusion counts; fm has a+b ones, of which a on G.
double alignment_from_counts(double n, double n_g, double a, double b) {
  if (n_g == 0.0) return (n - (a + b)) / n;
  if (n_g == n) return (a + b) / n;
  const double mu_f = (a + b) / n, mu_g = n_g / n;
  const double sum = a * enhanced_value(1.0 - mu_f, 1.0 - mu_g) +
                     b * enhanced_value(1.0 - mu_f, -mu_g) +
                     (n_g - a) * enhanced_value(-mu_f, 1.0 - mu_g) +
                     (n - n_g - b) * enhanced_value(-mu_f, -mu_g);
  return sum / n;
}

// Exact squared 1-D distance transform (lower envelope of parabolas).
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
            std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = 0;
  v[0] = 0;
  z[0] = -inf;
  z[1] = inf;
  auto intersect = [&](int q, int r) {
    return ((f[q] + static_cast<double>(q) * q) - (f[r] + static_cast<double>(r) * r)) / (2.0 * (q - r));
  };
  for (int q = 1; q < n; ++q) {
    double s = intersect(q, v[k]);
    while (s <= z[k]) s = intersect(q, v[--k]);
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    d[q] = static_cast<double>(q - v[k]) * (q - v[k]) + f[v[k]];
  }
}

}  // namespace

Grid::Grid(int r, int c, double fill)
    : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, fill) {}

Grid::Grid(int r, int c, std::vector<double> v) : rows(r), cols(c), values(std::move(v)) {
  if (values.size() != static_cast<std::size_t>(r) * c) {
    throw ContractViolation(fmt::format("Grid: {} values for {}x{}", values.size(), r, c));
  }
}

EVariant parse_e_variant(const std::string& text) {
  if (text == "mean") return EVariant::mean;
  if (text == "adaptive") return EVariant::adaptive;
  throw ConfigError("unknown E-measure variant '" + text + "' (expected mean|adaptive)");
}

std::string to_string(EVariant variant) {
  return variant == EVariant::mean ? "mean" : "adaptive";
}

double neumaier_sum(std::span<const double> values) {
  double sum = 0.0, comp = 0.0;
  for (double v : values) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) comp += (sum - t) + v;
    else comp += (v - t) + sum;
    sum = t;
  }
  return sum + comp;
}

double mae(const Grid& p, const Grid& g) {
  expect_pair(p, g, "mae");
  std::vector<double> diff(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) diff[i] = std::abs(p.values[i] - g.values[i]);
  return mean_of(diff);
}

double s_measure(const Grid& p, const Grid& g, double alpha) {
  expect_pair(p, g, "s_measure");
  const double y = mean_of(g.values);
  if (y == 0.0) return 1.0 - mean_of(p.values);
  if (y == 1.0) return mean_of(p.values);
  const double q = alpha * s_object(p, g) + (1.0 - alpha) * s_region(p, g);
  return std::max(q, 0.0);
}

double enhanced_alignment(const Grid& fm, const Grid& g) {
  expect_pair(fm, g, "enhanced_alignment");
  double a = 0.0, b = 0.0, n_g = 0.0;
  for (std::size_t i = 0; i < fm.size(); ++i) {
    n_g += g.values[i];
    if (fm.values[i] != 0.0) (g.values[i] == 1.0 ? a : b) += 1.0;
  }
  return alignment_from_counts(static_cast<double>(fm.size()), n_g, a, b);
}

double e_measure(const Grid& p, const Grid& g, int thresholds) {
  expect_pair(p, g, "e_measure");
  if (thresholds < 1) throw ConfigError("E-measure needs at least one threshold");
  const int n = thresholds;
  // Pixel with level L is foreground for every t_k = k/n with k <= L.
  std::vector<double> on_g(n + 1, 0.0), off_g(n + 1, 0.0);
  double n_g = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double v = p.values[i];
    int level = static_cast<int>(std::floor(std::clamp(v, 0.0, 1.0) * n));
    level = std::clamp(level, 0, n);
    while (level < n && v >= static_cast<double>(level + 1) / n) ++level;
    while (level > 0 && v < static_cast<double>(level) / n) --level;
    (g.values[i] == 1.0 ? on_g : off_g)[level] += 1.0;
    n_g += g.values[i];
  }
  const double total = static_cast<double>(p.size());
  std::vector<double> scores(n);
  double a = 0.0, b = 0.0;
  for (int k = n; k >= 1; --k) {
    a += on_g[k];
    b += off_g[k];
    scores[k - 1] = alignment_from_counts(total, n_g, a, b);
  }
  return neumaier_sum(scores) / n;
}

double e_measure_adaptive(const Grid& p, const Grid& g) {
  expect_pair(p, g, "e_measure_adaptive");
  const double t = std::min(2.0 * mean_of(p.values), 1.0);
  Grid fm(p.rows, p.cols);
  for (std::size_t i = 0; i < p.size(); ++i) fm.values[i] = p.values[i] >= t ? 1.0 : 0.0;
  return enhanced_alignment(fm, g);
}

DistanceField nearest_foreground(const Grid& mask) {
  const int rows = mask.rows, cols = mask.cols;
  const std::size_t total = mask.size();
  DistanceField out{std::vector<double>(total, std::numeric_limits<double>::infinity()),
                    std::vector<long>(total, -1)};
  bool any = false;
  for (double v : mask.values) any = any || v != 0.0;
  if (!any) return out;

  // Squared distances stay integral, so the separable transform is exact.
  const double big = 4.0 * (static_cast<double>(rows) * rows + static_cast<double>(cols) * cols) + 1.0;
  std::vector<double> sq(total);
  for (std::size_t i = 0; i < total; ++i) sq[i] = mask.values[i] != 0.0 ? 0.0 : big;
  const int longest = std::max(rows, cols);
  std::vector<double> f(longest), d(longest), z(longest + 1);
  std::vector<int> v(longest);
  f.resize(rows), d.resize(rows);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) f[r] = sq[static_cast<std::size_t>(r) * cols + c];
    edt_1d(f, d, v, z);
    for (int r = 0; r < rows; ++r) sq[static_cast<std::size_t>(r) * cols + c] = d[r];
  }
  f.resize(cols), d.resize(cols);
  for (int r = 0; r < rows; ++r) {
    std::copy_n(sq.begin() + static_cast<long>(r) * cols, cols, f.begin());
    edt_1d(f, d, v, z);
    std::copy_n(d.begin(), cols, sq.begin() + static_cast<long>(r) * cols);
  }

  // Walk the lattice circle of radius^2 = sq in row-major order; the first
  // foreground hit is the smallest-index nearest pixel.
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      const long d2 = std::lround(sq[i]);
      out.distance[i] = std::sqrt(static_cast<double>(d2));
      const long reach = static_cast<long>(std::floor(std::sqrt(static_cast<double>(d2))));
      for (long dy = -reach; dy <= reach && out.nearest[i] < 0; ++dy) {
        const long rr = r + dy;
        if (rr < 0 || rr >= rows) continue;
        const long rem = d2 - dy * dy;
        long dx = static_cast<long>(std::lround(std::sqrt(static_cast<double>(rem))));
        while (dx * dx > rem) --dx;
        while ((dx + 1) * (dx + 1) <= rem) ++dx;
        if (dx * dx != rem) continue;
        for (long cc : {c - dx, c + dx}) {
          if (cc < 0 || cc >= cols) continue;
          const long j = rr * cols + cc;
          if (mask.values[static_cast<std::size_t>(j)] != 0.0) {
            out.nearest[i] = j;
            break;
          }
        }
      }
      if (out.nearest[i] < 0) throw ContractViolation("nearest_foreground: lattice search failed");
    }
  }
  return out;
}

double weighted_f_beta(const Grid& p, const Grid& g, double beta_sq, int window, double sigma) {
  expect_pair(p, g, "weighted_f_beta");
  if (window < 1 || window % 2 == 0) throw ConfigError("weighted-F window must be odd");
  const std::size_t total = p.size();
  double n_g = 0.0;
  for (double v : g.values) n_g += v;
  if (n_g == 0.0) return 0.0;

  std::vector<double> err(total);
  for (std::size_t i = 0; i < total; ++i) err[i] = std::abs(p.values[i] - g.values[i]);
  const DistanceField field = nearest_foreground(g);

  // Background pixels inherit the error of their nearest foreground pixel.
  cv::Mat et(g.rows, g.cols, CV_64F);
  for (std::size_t i = 0; i < total; ++i) {
    et.at<double>(static_cast<int>(i)) =
        g.values[i] == 1.0 ? err[i] : err[static_cast<std::size_t>(field.nearest[i])];
  }
  // Normalized Gaussian, entries below eps * max dropped.
  const int half = window / 2;
  cv::Mat kernel(window, window, CV_64F);
  double kmax = 0.0, ksum = 0.0;
  for (int y = -half; y <= half; ++y) {
    for (int x = -half; x <= half; ++x) {
      const double v = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
      kernel.at<double>(y + half, x + half) = v;
      kmax = std::max(kmax, v);
    }
  }
  for (int i = 0; i < window * window; ++i) {
    double& v = kernel.at<double>(i);
    if (v < kEps * kmax) v = 0.0;
    ksum += v;
  }
  kernel /= ksum;
  cv::Mat ea;
  cv::filter2D(et, ea, CV_64F, kernel, cv::Point(-1, -1), 0.0, cv::BORDER_CONSTANT);

  std::vector<double> ew_fg, ew_bg;
  for (std::size_t i = 0; i < total; ++i) {
    if (g.values[i] == 1.0) {
      ew_fg.push_back(std::min(err[i], ea.at<double>(static_cast<int>(i))));
    } else {
      const double importance = 2.0 - std::exp(std::log(0.5) / 5.0 * field.distance[i]);
      ew_bg.push_back(err[i] * importance);
    }
  }
  const double tp = n_g - neumaier_sum(ew_fg);
  const double fp = neumaier_sum(ew_bg);
  const double recall = 1.0 - mean_of(ew_fg);
  const double precision = tp / (kEps + tp + fp);
  return (1.0 + beta_sq) * recall * precision / (kEps + recall + beta_sq * precision);
}

SampleScores score_sample(const Grid& p, const Grid& g, const MetricOptions& options) {
  SampleScores s;
  s.s_alpha = s_measure(p, g, options.s_alpha);
  s.e_phi = options.e_variant == EVariant::mean ? e_measure(p, g, options.e_thresholds)
                                                : e_measure_adaptive(p, g);
  s.f_w_beta = weighted_f_beta(p, g, options.f_beta_sq, options.f_window, options.f_sigma);
  s.mae = mae(p, g);
  return s;
}

MetricReport aggregate(const std::string& dataset, const std::vector<SampleScores>& samples) {
  MetricReport r;
  r.dataset = dataset;
  r.n = samples.size();
  if (samples.empty()) return r;
  std::vector<double> s, e, f, m;
  for (const auto& x : samples) {
    s.push_back(x.s_alpha);
    e.push_back(x.e_phi);
    f.push_back(x.f_w_beta);
    m.push_back(x.mae);
  }
  r.s_alpha = mean_of(s);
  r.e_phi = mean_of(e);
  r.f_w_beta = mean_of(f);
  r.mae = mean_of(m);
  return r;
}

Grid read_grayscale(const std::filesystem::path& path, bool binarize) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (img.empty()) throw DataError("cannot decode image: " + path.string());
  if (img.depth() != CV_8U) img.convertTo(img, CV_8U);
  Grid out(img.rows, img.cols);
  for (int r = 0; r < img.rows; ++r) {
    for (int c = 0; c < img.cols; ++c) {
      const double v = img.at<unsigned char>(r, c) / 255.0;
      out.at(r, c) = binarize ? (v >= 0.5 ? 1.0 : 0.0) : v;
    }
  }
  return out;
}

namespace {

std::map<std::string, std::filesystem::path> images_by_stem(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::map<std::string, std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext != ".png" && ext != ".jpg" && ext != ".jpeg" && ext != ".bmp") continue;
    const std::string stem = entry.path().stem().string();
    if (!out.emplace(stem, entry.path()).second) {
      throw DataError("duplicate image stem '" + stem + "' in " + dir.string());
    }
  }
  return out;
}

}  // namespace

MetricReport evaluate_directory(const std::filesystem::path& pred_dir,
                                const std::filesystem::path& gt_dir, const std::string& dataset,
                                const MetricOptions& options) {
  const auto preds = images_by_stem(pred_dir);
  const auto gts = images_by_stem(gt_dir);
  for (const auto& [stem, path] : preds) {
    if (!gts.count(stem)) throw DataError("prediction without ground truth: " + path.string());
  }
  for (const auto& [stem, path] : gts) {
    if (!preds.count(stem)) throw DataError("ground truth without prediction: " + path.string());
  }
  if (preds.empty()) throw DataError("no images in " + pred_dir.string());

  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> pairs;
  for (const auto& [stem, path] : preds) pairs.emplace_back(path, gts.at(stem));

  std::vector<SampleScores> scores(pairs.size());
  std::vector<std::exception_ptr> errors(pairs.size());
  const unsigned workers = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                                           static_cast<unsigned>(pairs.size())));
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < pairs.size(); i += workers) {
        try {
          const Grid p = read_grayscale(pairs[i].first, false);
          const Grid g = read_grayscale(pairs[i].second, true);
          if (p.rows != g.rows || p.cols != g.cols) {
            throw DataError(fmt::format("size mismatch: {} is {}x{}, {} is {}x{}",
                                        pairs[i].first.string(), p.rows, p.cols,
                                        pairs[i].second.string(), g.rows, g.cols));
          }
          scores[i] = score_sample(p, g, options);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return aggregate(dataset, scores);
}

std::string report_csv(const std::vector<MetricReport>& reports) {
  std::string out = "dataset,n,s_alpha,e_phi,f_w_beta,mae\n";
  for (const auto& r : reports) {
    out += fmt::format("{},{},{:.6f},{:.6f},{:.6f},{:.6f}\n", r.dataset, r.n, r.s_alpha, r.e_phi,
                       r.f_w_beta, r.mae);
  }
  return out;
}

std::string report_table(const std::vector<MetricReport>& reports) {
  std::size_t width = 7;
  for (const auto& r : reports) width = std::max(width, r.dataset.size());
  std::string out = fmt::format("{:<{}}  {:>5}  {:>8}  {:>8}  {:>8}  {:>8}\n", "dataset", width, "n",
                                "S_alpha", "E_phi", "F_w_beta", "MAE");
  for (const auto& r : reports) {
    out += fmt::format("{:<{}}  {:>5}  {:>8.3f}  {:>8.3f}  {:>8.3f}  {:>8.3f}\n", r.dataset, width,
                       r.n, r.s_alpha, r.e_phi, r.f_w_beta, r.mae);
  }
  return out;
}

}  // namespace dafnet::metrics
