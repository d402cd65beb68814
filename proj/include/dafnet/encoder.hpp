#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "dafnet/backbone.hpp"
#include "dafnet/dcf.hpp"
#include "dafnet/fusion_branch.hpp"

namespace dafnet::encoder {

// Encoder-level ablations.
enum class EncoderMode {
  full,         // RGB + depth + transformer fusion branch with cross-stage residuals
  no_depth,     // RGB backbone only; decoder reads RGB stages 2..4
  no_residual,  // fusion branch replaced by per-stage 3x3 convs
  no_vit,       // cross-stage residuals kept, transformer replaced by a 3x3 conv
};

EncoderMode parse_encoder_mode(const std::string& text);
std::string to_string(EncoderMode mode);

struct EncoderConfig {
  int input_size = 352;
  BackboneConfig rgb{.variant = BackboneVariant::res2net_like, .in_channels = 3};
  BackboneConfig depth{.variant = BackboneVariant::resnet_like, .in_channels = 1};
  FusionBranchConfig fusion;
  dcf::DcfMode dcf_mode = dcf::DcfMode::full;
  int daw_source_stage = 0;  // 0: each stage weights its own depth; k: every stage uses stage k
  dcf::Hyper hyper;
  EncoderMode mode = EncoderMode::full;

  void validate() const;
  // Spatial size of each stage output.
  std::array<int, 4> stage_sizes() const;
};

struct EncoderOutput {
  std::array<Tensor, 4> rgb_stages;    // x_c^1..x_c^4
  std::array<Tensor, 4> depth_stages;  // x_d^1..x_d^4 after the depth-stream update
  std::array<Tensor, 4> fused_stages;  // x_f^1..x_f^4 (DCF output, branch input)
  std::array<Tensor, 3> fused;         // f_1 (stage 2, finest) .. f_3 (stage 4)
  std::array<Tensor, 4> q_values;      // (1) each
};

class TridentEncoder {
 public:
  TridentEncoder() = default;
  TridentEncoder(ParameterSet& params, const std::string& prefix, const EncoderConfig& config,
                 Rng& rng);

  // rgb (3,S,S), depth (1,S,S).
  EncoderOutput encode(const Tensor& rgb, const Tensor& depth) const;

  const EncoderConfig& config() const { return config_; }
  Backbone& rgb_backbone() { return rgb_; }
  Backbone& depth_backbone() { return depth_; }
  const Backbone& depth_backbone() const { return depth_; }
  std::vector<dcf::DcfParams>& dcf_params() { return dcf_; }
  std::vector<FusionStageParams>& fusion_stages() { return fusion_; }

 private:
  EncoderConfig config_;
  Backbone rgb_;
  Backbone depth_;
  std::vector<dcf::DcfParams> dcf_;
  std::vector<FusionStageParams> fusion_;
};

}  // namespace dafnet::encoder
