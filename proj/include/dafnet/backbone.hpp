#pragma once

#include <array>
#include <string>
#include <vector>

#include "dafnet/parameters.hpp"
#include "dafnet/tensor.hpp"

namespace dafnet::encoder {

enum class BackboneVariant { resnet_like, res2net_like };

BackboneVariant parse_backbone_variant(const std::string& text);
std::string to_string(BackboneVariant variant);

struct BackboneConfig {
  std::array<int, 4> stage_channels{16, 32, 64, 128};
  std::array<int, 4> stage_strides{2, 2, 2, 2};
  int blocks_per_stage = 1;
  BackboneVariant variant = BackboneVariant::resnet_like;
  int scale = 4;  // res2net_like channel groups
  int in_channels = 3;

  void validate() const;
};

// Residual block, y = x + gamma * body(x). The body is
// 1x1 -> 3x3 -> 1x1 (resnet_like) or 1x1 -> hierarchical grouped 3x3 -> 1x1
// (res2net_like), all at the stage width, ReLU between convolutions.
struct ResidualBlockParams {
  Tensor reduce_weight, reduce_bias;
  std::vector<Tensor> mid_weights, mid_biases;
  Tensor expand_weight, expand_bias;
  Tensor gamma;  // (C) block output scale
};

struct BackboneStageParams {
  Tensor down_weight, down_bias;  // 3x3 conv, stride = stage stride
  int stride = 2;
  std::vector<ResidualBlockParams> blocks;
};

// Four-stage CNN pyramid with a per-stage entry point, so the encoder can
// inject fused features between stages.
class Backbone {
 public:
  Backbone() = default;
  Backbone(ParameterSet& params, const std::string& prefix, const BackboneConfig& config, Rng& rng);

  // stage in 1..4; x is the previous stage output (or the image for stage 1).
  Tensor run_stage(int stage, const Tensor& x) const;
  std::array<Tensor, 4> run(const Tensor& image) const;

  const BackboneConfig& config() const { return config_; }
  std::vector<BackboneStageParams>& stages() { return stages_; }
  const std::vector<BackboneStageParams>& stages() const { return stages_; }
  std::size_t parameter_count() const;

 private:
  Tensor run_block(const Tensor& x, const ResidualBlockParams& block) const;

  BackboneConfig config_;
  std::vector<BackboneStageParams> stages_;
};

Backbone build_backbone(ParameterSet& params, const std::string& prefix,
                        const BackboneConfig& config, Rng& rng);

}  // namespace dafnet::encoder
