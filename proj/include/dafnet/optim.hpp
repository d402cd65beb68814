#pragma once

#include <vector>

#include "dafnet/parameters.hpp"

namespace dafnet::optim {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// Adam with decoupled weight decay:
//   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
class AdamW {
 public:
  AdamW(const ParameterSet& params, AdamWOptions options);

  // Consumes the accumulated gradients; parameters without a gradient are
  // only decayed.
  void step(double lr);
  long steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamWOptions options_;
  long t_ = 0;
};

// base * factor^floor(epoch / every)
double step_decay(double base, int epoch, int every, double factor);

}  // namespace dafnet::optim
