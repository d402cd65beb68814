#include "dafnet/encoder.hpp"

#include "dafnet/errors.hpp"

namespace dafnet::encoder {

EncoderMode parse_encoder_mode(const std::string& text) {
  if (text == "full") return EncoderMode::full;
  if (text == "no_depth") return EncoderMode::no_depth;
  if (text == "no_residual") return EncoderMode::no_residual;
  if (text == "no_vit") return EncoderMode::no_vit;
  throw ConfigError("unknown encoder mode '" + text + "' (expected full|no_depth|no_residual|no_vit)");
}

std::string to_string(EncoderMode mode) {
  switch (mode) {
    case EncoderMode::full: return "full";
    case EncoderMode::no_depth: return "no_depth";
    case EncoderMode::no_residual: return "no_residual";
    case EncoderMode::no_vit: return "no_vit";
  }
  return "full";
}

void EncoderConfig::validate() const {
  rgb.validate();
  depth.validate();
  fusion.validate();
  if (input_size < 1) throw ConfigError("input size must be positive");
  if (rgb.stage_channels != depth.stage_channels || rgb.stage_strides != depth.stage_strides) {
    throw ConfigError("RGB and depth backbones must share stage channels and strides");
  }
  if (daw_source_stage < 0 || daw_source_stage > 4) {
    throw ConfigError("DAW source stage must be 0 (own stage) or 1..4");
  }
  int size = input_size;
  for (int s = 0; s < 4; ++s) {
    if (size % rgb.stage_strides[s] != 0) {
      throw ConfigError("input size " + std::to_string(input_size) +
                        " is not divisible by the cumulative stage strides");
    }
    size /= rgb.stage_strides[s];
    if (mode == EncoderMode::full) token_count(size, size, fusion.patch_sizes[s]);
  }
}

std::array<int, 4> EncoderConfig::stage_sizes() const {
  std::array<int, 4> sizes{};
  int size = input_size;
  for (int s = 0; s < 4; ++s) {
    size /= rgb.stage_strides[s];
    sizes[s] = size;
  }
  return sizes;
}

TridentEncoder::TridentEncoder(ParameterSet& params, const std::string& prefix,
                               const EncoderConfig& config, Rng& rng)
    : config_(config) {
  config_.validate();
  rgb_ = Backbone(params, join_name(prefix, "rgb"), config_.rgb, rng);
  if (config_.mode == EncoderMode::no_depth) return;
  depth_ = Backbone(params, join_name(prefix, "depth"), config_.depth, rng);
  const auto sizes = config_.stage_sizes();
  const auto& channels = config_.rgb.stage_channels;
  const FusionStageKind kind = config_.mode == EncoderMode::full      ? FusionStageKind::transformer
                               : config_.mode == EncoderMode::no_vit ? FusionStageKind::residual_conv
                                                                     : FusionStageKind::plain_conv;
  for (int i = 0; i < 4; ++i) {
    const int daw_channels =
        config_.daw_source_stage > 0 ? channels[config_.daw_source_stage - 1] : channels[i];
    dcf_.push_back(dcf::DcfParams::create(params, join_name(prefix, "dcf" + std::to_string(i + 1)),
                                          channels[i], daw_channels, config_.dcf_mode,
                                          config_.hyper, rng));
  }
  for (int i = 0; i < 4; ++i) {
    fusion_.push_back(FusionStageParams::create(
        params, join_name(prefix, "fusion.stage" + std::to_string(i + 1)), i + 1, kind, channels[i],
        i > 0 ? channels[i - 1] : 0, config_.rgb.stage_strides[i], sizes[i], sizes[i],
        config_.fusion, rng));
  }
}

EncoderOutput TridentEncoder::encode(const Tensor& rgb, const Tensor& depth) const {
  const int s = config_.input_size;
  if (rgb.rank() != 3 || rgb.dim(0) != 3 || rgb.dim(1) != s || rgb.dim(2) != s) {
    throw ConfigError("encoder expects rgb (3," + std::to_string(s) + "," + std::to_string(s) +
                      "), got " + shape_string(rgb.shape()));
  }
  EncoderOutput out;
  Tensor x = rgb;
  for (int i = 0; i < 4; ++i) out.rgb_stages[i] = x = rgb_.run_stage(i + 1, x);

  if (config_.mode == EncoderMode::no_depth) {
    for (int i = 0; i < 3; ++i) out.fused[i] = out.rgb_stages[i + 1];
    return out;
  }
  if (depth.rank() != 3 || depth.dim(0) != 1 || depth.dim(1) != s || depth.dim(2) != s) {
    throw ConfigError("encoder expects depth (1," + std::to_string(s) + "," + std::to_string(s) +
                      "), got " + shape_string(depth.shape()));
  }

  // A fixed DAW source stage reads the un-fused depth pyramid so that stages
  // earlier than the source can still be weighted.
  std::optional<dcf::StagePair> daw_source;
  if (const int k = config_.daw_source_stage; k > 0) {
    Tensor raw = depth;
    for (int i = 1; i <= k; ++i) raw = depth_.run_stage(i, raw);
    daw_source = dcf::StagePair{out.rgb_stages[k - 1], raw, k};
  }

  Tensor d = depth;
  Tensor prev;
  for (int i = 0; i < 4; ++i) {
    const dcf::StagePair pair{out.rgb_stages[i], depth_.run_stage(i + 1, d), i + 1};
    auto res = dcf::dcf_forward(pair, dcf_[i], config_.dcf_mode, daw_source ? &*daw_source : nullptr);
    out.fused_stages[i] = res.fused;
    out.q_values[i] = res.q;
    out.depth_stages[i] = d = res.next_depth;
    prev = fusion_branch_stage(res.fused, prev, fusion_[i]);
    if (i >= 1) out.fused[i - 1] = prev;
  }
  return out;
}

}  // namespace dafnet::encoder
