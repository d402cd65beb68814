#include "dafnet/backbone.hpp"

#include "dafnet/errors.hpp"
#include "dafnet/ops.hpp"

namespace dafnet::encoder {

BackboneVariant parse_backbone_variant(const std::string& text) {
  if (text == "resnet_like") return BackboneVariant::resnet_like;
  if (text == "res2net_like") return BackboneVariant::res2net_like;
  throw ConfigError("unknown backbone variant '" + text + "' (expected resnet_like|res2net_like)");
}

std::string to_string(BackboneVariant variant) {
  return variant == BackboneVariant::res2net_like ? "res2net_like" : "resnet_like";
}

void BackboneConfig::validate() const {
  for (int c : stage_channels)
    if (c < 1) throw ConfigError("backbone stage channels must be positive");
  for (int s : stage_strides)
    if (s < 1) throw ConfigError("backbone stage strides must be positive");
  if (blocks_per_stage < 0) throw ConfigError("blocks_per_stage must be >= 0");
  if (in_channels < 1) throw ConfigError("backbone input channels must be positive");
  if (variant == BackboneVariant::res2net_like) {
    if (scale < 1) throw ConfigError("res2net scale must be >= 1");
    for (int c : stage_channels)
      if (c % scale != 0)
        throw ConfigError("res2net_like: stage width " + std::to_string(c) +
                          " not divisible by scale " + std::to_string(scale));
  }
}

Backbone::Backbone(ParameterSet& params, const std::string& prefix, const BackboneConfig& config,
                   Rng& rng)
    : config_(config) {
  config_.validate();
  int in = config_.in_channels;
  for (int s = 0; s < 4; ++s) {
    const int c = config_.stage_channels[s];
    const std::string sp = join_name(prefix, "stage" + std::to_string(s + 1));
    BackboneStageParams stage;
    stage.stride = config_.stage_strides[s];
    stage.down_weight = params.create(join_name(sp, "down.weight"), {c, in, 3, 3}, Init::he_normal, rng);
    stage.down_bias = params.create(join_name(sp, "down.bias"), {c}, Init::zeros, rng);
    for (int b = 0; b < config_.blocks_per_stage; ++b) {
      const std::string bp = join_name(sp, "block" + std::to_string(b));
      ResidualBlockParams block;
      block.reduce_weight = params.create(join_name(bp, "reduce.weight"), {c, c, 1, 1}, Init::he_normal, rng);
      block.reduce_bias = params.create(join_name(bp, "reduce.bias"), {c}, Init::zeros, rng);
      const bool grouped = config_.variant == BackboneVariant::res2net_like && config_.scale > 1;
      const int groups = grouped ? config_.scale - 1 : 1;
      const int width = grouped ? c / config_.scale : c;
      for (int g = 0; g < groups; ++g) {
        const std::string mp = join_name(bp, "mid" + std::to_string(g));
        block.mid_weights.push_back(
            params.create(join_name(mp, "weight"), {width, width, 3, 3}, Init::he_normal, rng));
        block.mid_biases.push_back(params.create(join_name(mp, "bias"), {width}, Init::zeros, rng));
      }
      block.expand_weight = params.create(join_name(bp, "expand.weight"), {c, c, 1, 1}, Init::xavier_normal, rng);
      block.expand_bias = params.create(join_name(bp, "expand.bias"), {c}, Init::zeros, rng);
      block.gamma = params.constant(join_name(bp, "gamma"), {c}, 0.5);
      stage.blocks.push_back(std::move(block));
    }
    stages_.push_back(std::move(stage));
    in = c;
  }
}

Tensor Backbone::run_block(const Tensor& x, const ResidualBlockParams& block) const {
  Tensor t = ops::relu(ops::conv2d(x, block.reduce_weight, block.reduce_bias));
  const ops::ConvSpec same3{1, 1, 1};
  if (config_.variant == BackboneVariant::resnet_like || config_.scale == 1) {
    t = ops::relu(ops::conv2d(t, block.mid_weights[0], block.mid_biases[0], same3));
  } else {
    const int scale = config_.scale;
    const int width = t.dim(0) / scale;
    std::vector<Tensor> outs;
    outs.push_back(ops::slice0(t, 0, width));  // first group passes through
    Tensor carry;
    for (int g = 1; g < scale; ++g) {
      Tensor part = ops::slice0(t, g * width, width);
      if (carry.defined()) part = ops::add(part, carry);
      carry = ops::relu(ops::conv2d(part, block.mid_weights[g - 1], block.mid_biases[g - 1], same3));
      outs.push_back(carry);
    }
    t = ops::concat0(outs);
  }
  Tensor body = ops::conv2d(t, block.expand_weight, block.expand_bias);
  return ops::add(x, ops::mul_channels(body, block.gamma));
}

Tensor Backbone::run_stage(int stage, const Tensor& x) const {
  if (stage < 1 || stage > 4) throw ContractViolation("backbone stage out of range");
  const auto& s = stages_[static_cast<std::size_t>(stage - 1)];
  Tensor y = ops::relu(ops::conv2d(x, s.down_weight, s.down_bias, {s.stride, 1, 1}));
  for (const auto& block : s.blocks) y = run_block(y, block);
  return y;
}

std::array<Tensor, 4> Backbone::run(const Tensor& image) const {
  std::array<Tensor, 4> out;
  Tensor x = image;
  for (int s = 1; s <= 4; ++s) {
    x = run_stage(s, x);
    out[static_cast<std::size_t>(s - 1)] = x;
  }
  return out;
}

std::size_t Backbone::parameter_count() const {
  std::size_t n = 0;
  auto add = [&n](const Tensor& t) { n += t.numel(); };
  for (const auto& s : stages_) {
    add(s.down_weight);
    add(s.down_bias);
    for (const auto& b : s.blocks) {
      add(b.reduce_weight);
      add(b.reduce_bias);
      for (const auto& w : b.mid_weights) add(w);
      for (const auto& w : b.mid_biases) add(w);
      add(b.expand_weight);
      add(b.expand_bias);
      add(b.gamma);
    }
  }
  return n;
}

Backbone build_backbone(ParameterSet& params, const std::string& prefix,
                        const BackboneConfig& config, Rng& rng) {
  return Backbone(params, prefix, config, rng);
}

}  // namespace dafnet::encoder
