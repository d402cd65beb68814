#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "dafnet/tensor.hpp"

namespace dafnet {

using Rng = std::mt19937_64;

enum class Init {
  zeros,
  ones,
  he_normal,      // std = sqrt(2 / fan_in), for layers followed by ReLU
  xavier_normal,  // std = sqrt(2 / (fan_in + fan_out))
  small_normal,   // std = 0.02, token embeddings
};

// Ordered registry of named trainable tensors. Names are hierarchical,
// dot-separated ("encoder.rgb.stage1.down.weight"), and unique.
class ParameterSet {
 public:
  Tensor create(const std::string& name, Shape shape, Init init, Rng& rng);
  Tensor constant(const std::string& name, Shape shape, double value);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor get(const std::string& name) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  struct Entry {
    std::string name;
    Tensor tensor;
  };
  const std::vector<Entry>& entries() const { return entries_; }

  void zero_grad();

 private:
  void insert(const std::string& name, Tensor tensor);

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

// Joins two name fragments with a dot, skipping empty prefixes.
std::string join_name(const std::string& prefix, const std::string& leaf);

}  // namespace dafnet
