#pragma once

#include <cstdint>

#include "dafnet/decoder.hpp"
#include "dafnet/encoder.hpp"

// Full network: trident encoder followed by the aggregation decoder.
namespace dafnet {

struct ModelConfig {
  encoder::EncoderConfig encoder;
  decoder::DecoderConfig decoder;

  void validate() const;
};

struct ModelOutput {
  encoder::EncoderOutput features;
  decoder::PredictionBundle prediction;
};

class DafNet {
 public:
  // Parameters are drawn from a generator seeded with `seed`; two models
  // built from the same (config, seed) are bit-identical.
  DafNet(const ModelConfig& config, std::uint64_t seed);

  DafNet(const DafNet&) = delete;
  DafNet& operator=(const DafNet&) = delete;
  DafNet(DafNet&&) = default;
  DafNet& operator=(DafNet&&) = default;

  // rgb (3,S,S), depth (1,S,S) -> logits at (1,S,S).
  ModelOutput forward(const Tensor& rgb, const Tensor& depth) const;

  const ModelConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  encoder::TridentEncoder& encoder() { return encoder_; }
  decoder::FadDecoder& decoder() { return decoder_; }

 private:
  ModelConfig config_;
  ParameterSet params_;
  encoder::TridentEncoder encoder_;
  decoder::FadDecoder decoder_;
};

}  // namespace dafnet
