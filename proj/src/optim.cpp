#include "dafnet/optim.hpp"

#include <cmath>

namespace dafnet::optim {

AdamW::AdamW(const ParameterSet& params, AdamWOptions options) : options_(options) {
  for (const auto& e : params.entries()) {
    params_.push_back(e.tensor);
    m_.emplace_back(e.tensor.numel(), 0.0);
    v_.emplace_back(e.tensor.numel(), 0.0);
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto values = params_[k].mutable_values();
    const auto grad = params_[k].grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps);
      values[i] -= lr * (update + options_.weight_decay * values[i]);
    }
  }
}

double step_decay(double base, int epoch, int every, double factor) {
  return base * std::pow(factor, static_cast<double>(epoch / every));
}

}  // namespace dafnet::optim
