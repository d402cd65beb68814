#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

// Camouflaged-object evaluation measures: S-measure, E-measure, weighted
// F-measure and MAE, plus a directory-level batch evaluator.
namespace dafnet::metrics {

// Row-major (rows, cols) grid of doubles.
struct Grid {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  Grid() = default;
  Grid(int r, int c, double fill = 0.0);
  Grid(int r, int c, std::vector<double> v);

  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
  std::size_t size() const { return values.size(); }
};

enum class EVariant { mean, adaptive };
EVariant parse_e_variant(const std::string& text);
std::string to_string(EVariant variant);

struct MetricOptions {
  double s_alpha = 0.5;
  int e_thresholds = 256;
  EVariant e_variant = EVariant::mean;
  double f_beta_sq = 1.0;
  int f_window = 7;
  double f_sigma = 5.0;
};

// All measures take p in [0,1] and a binary G of the same shape.
double mae(const Grid& p, const Grid& g);
double s_measure(const Grid& p, const Grid& g, double alpha = 0.5);
// Mean over thresholds t_k = k/n (k = 1..n) of the enhanced-alignment score of p >= t_k.
double e_measure(const Grid& p, const Grid& g, int thresholds = 256);
// Single threshold min(2 mean(p), 1).
double e_measure_adaptive(const Grid& p, const Grid& g);
// Enhanced-alignment score of a binary foreground map.
double enhanced_alignment(const Grid& fm, const Grid& g);
double weighted_f_beta(const Grid& p, const Grid& g, double beta_sq = 1.0, int window = 7,
                       double sigma = 5.0);

// Exact Euclidean distance transform to the nearest nonzero pixel of `mask`,
// plus the row-major index of that pixel (ties: smallest index). Pixels of
// an all-zero mask get infinite distance and index -1.
struct DistanceField {
  std::vector<double> distance;
  std::vector<long> nearest;
};
DistanceField nearest_foreground(const Grid& mask);

// Compensated (Neumaier) summation; result independent of fan-out.
double neumaier_sum(std::span<const double> values);

struct SampleScores {
  double s_alpha = 0, e_phi = 0, f_w_beta = 0, mae = 0;
};
SampleScores score_sample(const Grid& p, const Grid& g, const MetricOptions& options = {});

struct MetricReport {
  std::string dataset;
  std::size_t n = 0;
  double s_alpha = 0, e_phi = 0, f_w_beta = 0, mae = 0;
};

// Averages per-sample scores.
MetricReport aggregate(const std::string& dataset, const std::vector<SampleScores>& samples);

// 8-bit grayscale image -> [0,1]. With binarize, values >= 0.5 map to 1.
Grid read_grayscale(const std::filesystem::path& path, bool binarize);

// Matches files by stem; every file must have a counterpart of equal size.
MetricReport evaluate_directory(const std::filesystem::path& pred_dir,
                                const std::filesystem::path& gt_dir, const std::string& dataset,
                                const MetricOptions& options = {});

// CSV with header dataset,n,s_alpha,e_phi,f_w_beta,mae.
std::string report_csv(const std::vector<MetricReport>& reports);
// Aligned text table, columns S_alpha E_phi F_w_beta MAE.
std::string report_table(const std::vector<MetricReport>& reports);

}  // namespace dafnet::metrics
