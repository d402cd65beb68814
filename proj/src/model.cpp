#include "dafnet/model.hpp"

namespace dafnet {

void ModelConfig::validate() const {
  encoder.validate();
  decoder.validate();
}

DafNet::DafNet(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  encoder_ = encoder::TridentEncoder(params_, "encoder", config_.encoder, rng);
  const auto& c = config_.encoder.rgb.stage_channels;
  const std::array<int, 3> pyramid{c[1], c[2], c[3]};
  decoder_ = decoder::FadDecoder(params_, "decoder", config_.decoder, pyramid, pyramid, rng);
}

ModelOutput DafNet::forward(const Tensor& rgb, const Tensor& depth) const {
  ModelOutput out;
  out.features = encoder_.encode(rgb, depth);
  const auto& r = out.features.rgb_stages;
  out.prediction = decoder_.forward(out.features.fused, {r[1], r[2], r[3]}, config_.encoder.input_size);
  return out;
}

}  // namespace dafnet
