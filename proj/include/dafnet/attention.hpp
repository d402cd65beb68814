#pragma once

#include <string>

#include "dafnet/parameters.hpp"
#include "dafnet/tensor.hpp"

// Channel, spatial and efficient-channel attention blocks shared by the
// fusion module and the decoder.
namespace dafnet::attention {

// Shared two-layer MLP applied to avg- and max-pooled channel descriptors.
struct ChannelAttentionParams {
  Tensor fc1_weight;  // (hidden, C)
  Tensor fc1_bias;    // (hidden)
  Tensor fc2_weight;  // (C, hidden)
  Tensor fc2_bias;    // (C)

  int channels() const { return fc2_weight.dim(0); }
  static ChannelAttentionParams create(ParameterSet& params, const std::string& prefix,
                                       int channels, int reduction, Rng& rng);
};

// Convolution over the stacked [channel-mean, channel-max] planes.
struct SpatialAttentionParams {
  Tensor weight;  // (1, 2, k, k)
  Tensor bias;    // (1)

  static SpatialAttentionParams create(ParameterSet& params, const std::string& prefix,
                                       int kernel_size, Rng& rng);
};

struct EcaParams {
  Tensor weight;  // (k), k odd

  static EcaParams create(ParameterSet& params, const std::string& prefix, int kernel_size,
                          Rng& rng);
};

// (C,H,W) -> (C) gate in (0,1). Throws ConfigError on a channel-count mismatch.
Tensor channel_attention(const Tensor& x, const ChannelAttentionParams& params);

// (C,H,W) -> (1,H,W) gate in (0,1).
Tensor spatial_attention(const Tensor& x, const SpatialAttentionParams& params);

// x scaled per channel by sigmoid(conv1d(GAP(x))). Same shape as x.
Tensor eca(const Tensor& x, const EcaParams& params);

// (C,H,W) -> (C) spatial mean of each channel.
Tensor global_avg_pool(const Tensor& x);

}  // namespace dafnet::attention
