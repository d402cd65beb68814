#pragma once

#include <array>
#include <string>
#include <vector>

#include "dafnet/parameters.hpp"
#include "dafnet/tensor.hpp"

// Fusion subnetwork: one mini vision-transformer stage per encoder stage,
// fed with that stage's fused map plus a projection of the previous
// fusion-stage output.
namespace dafnet::encoder {

enum class FusionStageKind {
  transformer,      // residual input + self-attention blocks
  residual_conv,    // residual input + 3x3 conv (no transformer)
  plain_conv,       // 3x3 conv on the fused map only
};

struct FusionBranchConfig {
  std::array<int, 4> patch_sizes{4, 2, 1, 1};
  int embed_dim = 32;
  int depth = 1;  // transformer blocks per stage
  int heads = 2;
  int mlp_ratio = 2;

  void validate() const;
};

struct SelfAttentionParams {
  Tensor query, key, value, out;  // (E,E), tokens multiply on the left
  Tensor query_bias, value_bias, out_bias;  // no key bias: row softmax cancels it
};

struct TransformerBlockParams {
  Tensor norm1_gamma, norm1_beta;
  SelfAttentionParams attention;
  Tensor norm2_gamma, norm2_beta;
  Tensor mlp1_weight, mlp1_bias;  // (E, rE)
  Tensor mlp2_weight, mlp2_bias;  // (rE, E)
};

struct FusionStageParams {
  int stage = 1;
  FusionStageKind kind = FusionStageKind::transformer;
  int patch = 1;
  int heads = 1;
  int prev_stride = 2;
  Tensor prev_weight;  // (C_i, C_{i-1}, 3, 3), no bias; undefined at stage 1
  // transformer
  Tensor patch_weight, patch_bias;  // (E, C, p, p)
  Tensor position;                  // (N, E)
  std::vector<TransformerBlockParams> blocks;
  Tensor unpatch_weight, unpatch_bias;  // (E, C p^2)
  // convolutional variants
  Tensor conv_weight, conv_bias;  // (C, C, 3, 3)

  static FusionStageParams create(ParameterSet& params, const std::string& prefix, int stage,
                                  FusionStageKind kind, int channels, int prev_channels,
                                  int prev_stride, int height, int width,
                                  const FusionBranchConfig& config, Rng& rng);
};

// Multi-head scaled dot-product self-attention over (N,E) tokens.
Tensor self_attention(const Tensor& tokens, const SelfAttentionParams& params, int heads);

Tensor transformer_block(const Tensor& tokens, const TransformerBlockParams& params, int heads);

// Number of non-overlapping p x p patches; ConfigError when p does not divide
// the map.
int token_count(int height, int width, int patch);

// One fusion stage. prev may be undefined (stage 1, or kind plain_conv).
Tensor fusion_branch_stage(const Tensor& fused, const Tensor& prev, const FusionStageParams& params);

}  // namespace dafnet::encoder
