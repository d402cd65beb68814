#include "dafnet/attention.hpp"

#include <algorithm>

#include "dafnet/errors.hpp"
#include "dafnet/ops.hpp"

namespace dafnet::attention {

ChannelAttentionParams ChannelAttentionParams::create(ParameterSet& params,
                                                      const std::string& prefix, int channels,
                                                      int reduction, Rng& rng) {
  if (channels < 1 || reduction < 1) throw ConfigError("channel attention needs C >= 1, r >= 1");
  const int hidden = std::max(1, channels / reduction);
  ChannelAttentionParams p;
  p.fc1_weight = params.create(join_name(prefix, "fc1.weight"), {hidden, channels}, Init::he_normal, rng);
  p.fc1_bias = params.create(join_name(prefix, "fc1.bias"), {hidden}, Init::zeros, rng);
  p.fc2_weight = params.create(join_name(prefix, "fc2.weight"), {channels, hidden}, Init::xavier_normal, rng);
  p.fc2_bias = params.create(join_name(prefix, "fc2.bias"), {channels}, Init::zeros, rng);
  return p;
}

SpatialAttentionParams SpatialAttentionParams::create(ParameterSet& params,
                                                      const std::string& prefix, int kernel_size,
                                                      Rng& rng) {
  if (kernel_size < 1 || kernel_size % 2 == 0)
    throw ConfigError("spatial attention kernel must be odd, got " + std::to_string(kernel_size));
  SpatialAttentionParams p;
  p.weight = params.create(join_name(prefix, "conv.weight"), {1, 2, kernel_size, kernel_size},
                           Init::xavier_normal, rng);
  p.bias = params.create(join_name(prefix, "conv.bias"), {1}, Init::zeros, rng);
  return p;
}

EcaParams EcaParams::create(ParameterSet& params, const std::string& prefix, int kernel_size,
                            Rng& rng) {
  if (kernel_size < 1 || kernel_size % 2 == 0)
    throw ConfigError("ECA kernel size must be odd, got " + std::to_string(kernel_size));
  EcaParams p;
  p.weight = params.create(join_name(prefix, "conv.weight"), {kernel_size}, Init::xavier_normal, rng);
  return p;
}

Tensor channel_attention(const Tensor& x, const ChannelAttentionParams& params) {
  if (x.rank() != 3) throw ContractViolation("channel_attention expects a (C,H,W) map");
  if (params.fc1_weight.dim(1) != x.dim(0) || params.channels() != x.dim(0)) {
    throw ConfigError("channel_attention: parameters sized for " +
                      std::to_string(params.channels()) + " channels, input has " +
                      std::to_string(x.dim(0)));
  }
  auto mlp = [&](const Tensor& v) {
    return ops::dense(ops::relu(ops::dense(v, params.fc1_weight, params.fc1_bias)),
                      params.fc2_weight, params.fc2_bias);
  };
  return ops::sigmoid(ops::add(mlp(ops::global_avg_pool(x)), mlp(ops::global_max_pool(x))));
}

Tensor spatial_attention(const Tensor& x, const SpatialAttentionParams& params) {
  if (x.rank() != 3) throw ContractViolation("spatial_attention expects a (C,H,W) map");
  const int k = params.weight.dim(2);
  Tensor stacked = ops::concat0({ops::channel_mean(x), ops::channel_max(x)});
  return ops::sigmoid(ops::conv2d(stacked, params.weight, params.bias, {1, k / 2, 1}));
}

Tensor eca(const Tensor& x, const EcaParams& params) {
  if (x.rank() != 3) throw ContractViolation("eca expects a (C,H,W) map");
  if (params.weight.dim(0) % 2 == 0)
    throw ConfigError("ECA kernel size must be odd, got " + std::to_string(params.weight.dim(0)));
  Tensor gate = ops::sigmoid(ops::conv1d_same(ops::global_avg_pool(x), params.weight));
  return ops::mul_channels(x, gate);
}

Tensor global_avg_pool(const Tensor& x) { return ops::global_avg_pool(x); }

}  // namespace dafnet::attention
