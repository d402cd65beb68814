#include "dafnet/fusion_branch.hpp"

#include <cmath>

#include "dafnet/errors.hpp"
#include "dafnet/ops.hpp"

namespace dafnet::encoder {

void FusionBranchConfig::validate() const {
  for (int p : patch_sizes)
    if (p < 1) throw ConfigError("fusion patch sizes must be positive");
  if (embed_dim < 1 || heads < 1 || embed_dim % heads != 0)
    throw ConfigError("fusion embed_dim " + std::to_string(embed_dim) +
                      " must be a positive multiple of heads " + std::to_string(heads));
  if (depth < 0) throw ConfigError("fusion depth must be >= 0");
  if (mlp_ratio < 1) throw ConfigError("fusion mlp_ratio must be >= 1");
}

int token_count(int height, int width, int patch) {
  if (patch < 1 || height % patch != 0 || width % patch != 0) {
    throw ConfigError("patch size " + std::to_string(patch) + " does not divide " +
                      std::to_string(height) + "x" + std::to_string(width));
  }
  return (height / patch) * (width / patch);
}

FusionStageParams FusionStageParams::create(ParameterSet& params, const std::string& prefix,
                                            int stage, FusionStageKind kind, int channels,
                                            int prev_channels, int prev_stride, int height,
                                            int width, const FusionBranchConfig& config,
                                            Rng& rng) {
  config.validate();
  FusionStageParams p;
  p.stage = stage;
  p.kind = kind;
  p.heads = config.heads;
  p.prev_stride = prev_stride;
  const int c = channels;
  if (stage >= 2 && kind != FusionStageKind::plain_conv) {
    p.prev_weight = params.create(join_name(prefix, "prev_proj.weight"), {c, prev_channels, 3, 3},
                                  Init::xavier_normal, rng);
  }
  if (kind != FusionStageKind::transformer) {
    p.conv_weight = params.create(join_name(prefix, "conv.weight"), {c, c, 3, 3}, Init::he_normal, rng);
    p.conv_bias = params.create(join_name(prefix, "conv.bias"), {c}, Init::zeros, rng);
    return p;
  }
  const int patch = config.patch_sizes[static_cast<std::size_t>(stage - 1)];
  const int e = config.embed_dim;
  const int n = token_count(height, width, patch);
  p.patch = patch;
  p.patch_weight = params.create(join_name(prefix, "patch_embed.weight"), {e, c, patch, patch}, Init::xavier_normal, rng);
  p.patch_bias = params.create(join_name(prefix, "patch_embed.bias"), {e}, Init::zeros, rng);
  p.position = params.create(join_name(prefix, "position"), {n, e}, Init::small_normal, rng);
  const int hidden = e * config.mlp_ratio;
  for (int b = 0; b < config.depth; ++b) {
    const std::string bp = join_name(prefix, "block" + std::to_string(b));
    TransformerBlockParams block;
    block.norm1_gamma = params.create(join_name(bp, "norm1.gamma"), {e}, Init::ones, rng);
    block.norm1_beta = params.create(join_name(bp, "norm1.beta"), {e}, Init::zeros, rng);
    auto& a = block.attention;
    a.query = params.create(join_name(bp, "attn.query.weight"), {e, e}, Init::xavier_normal, rng);
    a.query_bias = params.create(join_name(bp, "attn.query.bias"), {e}, Init::zeros, rng);
    a.key = params.create(join_name(bp, "attn.key.weight"), {e, e}, Init::xavier_normal, rng);
    a.value = params.create(join_name(bp, "attn.value.weight"), {e, e}, Init::xavier_normal, rng);
    a.value_bias = params.create(join_name(bp, "attn.value.bias"), {e}, Init::zeros, rng);
    a.out = params.create(join_name(bp, "attn.out.weight"), {e, e}, Init::xavier_normal, rng);
    a.out_bias = params.create(join_name(bp, "attn.out.bias"), {e}, Init::zeros, rng);
    block.norm2_gamma = params.create(join_name(bp, "norm2.gamma"), {e}, Init::ones, rng);
    block.norm2_beta = params.create(join_name(bp, "norm2.beta"), {e}, Init::zeros, rng);
    block.mlp1_weight = params.create(join_name(bp, "mlp1.weight"), {e, hidden}, Init::xavier_normal, rng);
    block.mlp1_bias = params.create(join_name(bp, "mlp1.bias"), {hidden}, Init::zeros, rng);
    block.mlp2_weight = params.create(join_name(bp, "mlp2.weight"), {hidden, e}, Init::xavier_normal, rng);
    block.mlp2_bias = params.create(join_name(bp, "mlp2.bias"), {e}, Init::zeros, rng);
    p.blocks.push_back(std::move(block));
  }
  p.unpatch_weight = params.create(join_name(prefix, "unpatch.weight"), {e, c * patch * patch}, Init::xavier_normal, rng);
  p.unpatch_bias = params.create(join_name(prefix, "unpatch.bias"), {c * patch * patch}, Init::zeros, rng);
  return p;
}

namespace {

Tensor linear(const Tensor& tokens, const Tensor& weight, const Tensor& bias) {
  return ops::add_row_bias(ops::matmul(tokens, weight), bias);
}

}  // namespace

Tensor self_attention(const Tensor& tokens, const SelfAttentionParams& params, int heads) {
  if (tokens.rank() != 2) throw ContractViolation("self_attention expects (N,E) tokens");
  const int e = tokens.dim(1);
  if (heads < 1 || e % heads != 0) throw ConfigError("embed dim not divisible by heads");
  const int head_dim = e / heads;
  Tensor q = linear(tokens, params.query, params.query_bias);
  Tensor k = ops::matmul(tokens, params.key);
  Tensor v = linear(tokens, params.value, params.value_bias);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Tensor> outs;
  for (int h = 0; h < heads; ++h) {
    Tensor qh = ops::slice_cols(q, h * head_dim, head_dim);
    Tensor kh = ops::slice_cols(k, h * head_dim, head_dim);
    Tensor vh = ops::slice_cols(v, h * head_dim, head_dim);
    Tensor weights = ops::softmax_rows(ops::scale(ops::matmul(qh, ops::transpose(kh)), inv_sqrt));
    outs.push_back(ops::matmul(weights, vh));
  }
  Tensor merged = heads == 1 ? outs.front() : ops::concat_cols(outs);
  return linear(merged, params.out, params.out_bias);
}

Tensor transformer_block(const Tensor& tokens, const TransformerBlockParams& params, int heads) {
  Tensor x = ops::add(
      tokens, self_attention(ops::layer_norm_rows(tokens, params.norm1_gamma, params.norm1_beta),
                             params.attention, heads));
  Tensor hidden = ops::gelu(
      linear(ops::layer_norm_rows(x, params.norm2_gamma, params.norm2_beta), params.mlp1_weight, params.mlp1_bias));
  return ops::add(x, linear(hidden, params.mlp2_weight, params.mlp2_bias));
}

Tensor fusion_branch_stage(const Tensor& fused, const Tensor& prev, const FusionStageParams& params) {
  if (fused.rank() != 3) throw ContractViolation("fusion_branch_stage expects a (C,H,W) map");
  Tensor input = fused;
  if (prev.defined() && params.prev_weight.defined()) {
    Tensor projected = ops::conv2d(prev, params.prev_weight, Tensor(), {params.prev_stride, 1, 1});
    if (projected.shape() != fused.shape()) {
      throw ContractViolation("fusion_branch_stage: previous stage projects to " +
                              shape_string(projected.shape()) + ", fused map is " +
                              shape_string(fused.shape()));
    }
    input = ops::add(fused, projected);
  }
  if (params.kind != FusionStageKind::transformer) {
    return ops::conv2d(input, params.conv_weight, params.conv_bias, {1, 1, 1});
  }
  const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int p = params.patch;
  const int n = token_count(h, w, p);
  if (params.position.dim(0) != n) {
    throw ConfigError("fusion stage " + std::to_string(params.stage) + " built for " +
                      std::to_string(params.position.dim(0)) + " tokens, input gives " +
                      std::to_string(n));
  }
  const int e = params.patch_weight.dim(0);
  Tensor embedded = ops::conv2d(input, params.patch_weight, params.patch_bias, {p, 0, 1});
  Tensor tokens = ops::add(ops::transpose(ops::reshape(embedded, {e, n})), params.position);
  for (const auto& block : params.blocks) tokens = transformer_block(tokens, block, params.heads);
  Tensor patches = linear(tokens, params.unpatch_weight, params.unpatch_bias);  // (N, C p^2)
  Tensor grid = ops::reshape(ops::transpose(patches), {c * p * p, h / p, w / p});
  return ops::add(input, ops::pixel_shuffle(grid, p));
}

}  // namespace dafnet::encoder
