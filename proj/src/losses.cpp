#include "dafnet/losses.hpp"

#include <cmath>
#include <string>

#include "dafnet/errors.hpp"
#include "dafnet/ops.hpp"

namespace dafnet::losses {

void LossWeights::validate() const {
  for (double l : lambda) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("loss weights must be finite and nonnegative");
  }
}

Tensor bce_loss(const Tensor& logits, std::span<const double> target) {
  return ops::bce_with_logits(logits, target);
}

Tensor iou_loss(const Tensor& logits, std::span<const double> target) {
  return ops::soft_iou_with_logits(logits, target, kIouSmooth);
}

double iou_loss_probabilities(std::span<const double> p, std::span<const double> target) {
  if (p.size() != target.size()) throw ContractViolation("iou_loss: size mismatch");
  double inter = 0.0, sum_p = 0.0, sum_g = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (target[i] != 0.0 && target[i] != 1.0) throw ContractViolation("iou_loss: target is not binary");
    inter += p[i] * target[i];
    sum_p += p[i];
    sum_g += target[i];
  }
  return 1.0 - (inter + kIouSmooth) / (sum_p + sum_g - inter + kIouSmooth);
}

double weighted_total(const std::array<double, 3>& per_output, const LossWeights& weights) {
  weights.validate();
  double total = 0.0;
  for (int k = 0; k < 3; ++k) total += weights.lambda[k] * per_output[k];
  return total;
}

LossBreakdown total_loss(const decoder::PredictionBundle& bundle, std::span<const double> target,
                         const LossWeights& weights) {
  weights.validate();
  LossBreakdown out{};
  std::vector<Tensor> terms;
  for (int k = 0; k < 3; ++k) {
    const Tensor& logits = bundle.logits[k];
    if (logits.numel() != target.size()) {
      throw ContractViolation("total_loss: output " + std::to_string(k + 1) + " has " +
                              std::to_string(logits.numel()) + " pixels, target has " +
                              std::to_string(target.size()));
    }
    Tensor combined = ops::add(bce_loss(logits, target), iou_loss(logits, target));
    out.per_output[k] = combined.item();
    terms.push_back(ops::scale(combined, weights.lambda[k]));
  }
  out.total = ops::add_n(terms);
  return out;
}

}  // namespace dafnet::losses
