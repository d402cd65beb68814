#pragma once

#include <array>
#include <span>
#include <vector>

#include "dafnet/decoder.hpp"
#include "dafnet/tensor.hpp"

// Pixel-level BCE plus region-level soft IoU, summed per output and
// weighted across the three decoder outputs.
namespace dafnet::losses {

inline constexpr double kIouSmooth = 1.0;

struct LossWeights {
  // lambda[0] attaches to the final prediction f_out_1.
  std::array<double, 3> lambda{1.0, 0.5, 0.25};
  void validate() const;
};

// Mean stable BCE over pixels; target must be binary.
Tensor bce_loss(const Tensor& logits, std::span<const double> target);
// 1 - (sum pG + eps) / (sum p + sum G - sum pG + eps), p = sigmoid(logits).
Tensor iou_loss(const Tensor& logits, std::span<const double> target);
// Same soft IoU on probabilities directly (no autograd).
double iou_loss_probabilities(std::span<const double> p, std::span<const double> target);

// sum_k lambda_k * per_output[k]
double weighted_total(const std::array<double, 3>& per_output, const LossWeights& weights = {});

struct LossBreakdown {
  Tensor total;                    // (1)
  std::array<double, 3> per_output;  // bce + iou for each output
};

LossBreakdown total_loss(const decoder::PredictionBundle& bundle, std::span<const double> target,
                         const LossWeights& weights = {});

}  // namespace dafnet::losses
