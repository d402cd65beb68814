#include "dafnet/parameters.hpp"

#include <cmath>

#include "dafnet/errors.hpp"

namespace dafnet {

namespace {

// (fan_in, fan_out) for dense (out,in) and conv (out,in,kh,kw) weights.
std::pair<double, double> fans(const Shape& shape) {
  if (shape.size() == 1) return {static_cast<double>(shape[0]), static_cast<double>(shape[0])};
  double receptive = 1.0;
  for (std::size_t i = 2; i < shape.size(); ++i) receptive *= shape[i];
  return {shape[1] * receptive, shape[0] * receptive};
}

}  // namespace

std::string join_name(const std::string& prefix, const std::string& leaf) {
  return prefix.empty() ? leaf : prefix + "." + leaf;
}

Tensor ParameterSet::create(const std::string& name, Shape shape, Init init, Rng& rng) {
  const std::size_t n = shape_numel(shape);
  std::vector<double> values(n, 0.0);
  double std_dev = 0.0;
  switch (init) {
    case Init::zeros:
      break;
    case Init::ones:
      std::fill(values.begin(), values.end(), 1.0);
      break;
    case Init::he_normal:
      std_dev = std::sqrt(2.0 / fans(shape).first);
      break;
    case Init::xavier_normal: {
      auto [in, out] = fans(shape);
      std_dev = std::sqrt(2.0 / (in + out));
      break;
    }
    case Init::small_normal:
      std_dev = 0.02;
      break;
  }
  if (std_dev > 0.0) {
    std::normal_distribution<double> dist(0.0, std_dev);
    for (auto& v : values) v = dist(rng);
  }
  Tensor t = Tensor::parameter(std::move(shape), std::move(values));
  insert(name, t);
  return t;
}

Tensor ParameterSet::constant(const std::string& name, Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  Tensor t = Tensor::parameter(std::move(shape), std::vector<double>(n, value));
  insert(name, t);
  return t;
}

void ParameterSet::insert(const std::string& name, Tensor tensor) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  index_[name] = entries_.size();
  entries_.push_back({name, std::move(tensor)});
}

Tensor ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractViolation("unknown parameter '" + name + "'");
  return entries_[it->second].tensor;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

}  // namespace dafnet
