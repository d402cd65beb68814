#pragma once

#include <array>
#include <string>
#include <vector>

#include "dafnet/attention.hpp"
#include "dafnet/parameters.hpp"
#include "dafnet/tensor.hpp"

// Feature enhancement (RMFE) and the feature aggregation decoder.
//
//   f_k'   = RMFE(f_k),  x_k' = RMFE(x_c^{k+1})        k = 1..3
//   F      = cat(up(f_3'), up(f_2'), f_1')
//   f_out  = FAM(GECA(F) + F)
//   out_k  = head_k(resize(conv_k(f_out)) * x_k')
namespace dafnet::decoder {

struct DecoderConfig {
  int width = 16;  // common channel width after enhancement
  int eca_kernel = 3;
  bool use_rmfe = true;          // false: 1x1 projection only
  bool use_geca = true;          // false: f_out = FAM(F)
  bool use_fam = true;           // false: FAM replaced by its 3x3 conv alone
  bool use_rgb_residual = true;  // false: out_k = head_k(resize(conv_k(f_out)))
  std::vector<int> fam_pools{2, 4, 8};
  std::array<int, 3> rmfe_dilations{1, 2, 3};

  void validate() const;
};

// Parallel dilated 3x3 branches -> concat -> 1x1, plus a 1x1 skip projection.
struct RmfeParams {
  std::vector<int> dilations;
  std::vector<Tensor> branch_weights, branch_biases;  // (W, C, 3, 3)
  Tensor fuse_weight, fuse_bias;                      // (W, nW, 1, 1)
  Tensor skip_weight, skip_bias;                      // (W, C, 1, 1)

  // With enhance=false only the skip projection is created.
  static RmfeParams create(ParameterSet& params, const std::string& prefix, int in_channels,
                           int width, bool enhance, const std::array<int, 3>& dilations, Rng& rng);
};

// Three maps at the common width, same order as the inputs.
struct EnhancedTriple {
  std::array<Tensor, 3> maps;
};

struct PredictionBundle {
  std::array<Tensor, 3> logits;    // (1,S,S); index 0 is the final prediction
  std::array<Tensor, 3> native;    // (1,h_k,w_k) logits before upsampling
  std::array<Tensor, 3> products;  // conv_k(f_out) * x_k' (or conv_k(f_out) without the residual)
};

Tensor rmfe_single(const Tensor& x, const RmfeParams& params);
EnhancedTriple rmfe(const Tensor& a, const Tensor& b, const Tensor& c,
                    const std::array<RmfeParams, 3>& params);

// GECA(F) + F
Tensor geca_residual(const Tensor& features, const attention::EcaParams& params);
// mean(x, up(pool_2 x), up(pool_4 x), up(pool_8 x)) followed by a 3x3 conv.
Tensor fam(const Tensor& x, const std::vector<int>& pools, const Tensor& conv_weight,
           const Tensor& conv_bias);

class FadDecoder {
 public:
  FadDecoder() = default;
  // fused_channels / rgb_channels: channel counts of f_1..f_3 and x_c^2..x_c^4.
  FadDecoder(ParameterSet& params, const std::string& prefix, const DecoderConfig& config,
             const std::array<int, 3>& fused_channels, const std::array<int, 3>& rgb_channels,
             Rng& rng);

  // fused: f_1 (finest) .. f_3; rgb: x_c^2 .. x_c^4.
  EnhancedTriple enhance_fused(const std::array<Tensor, 3>& fused) const;
  EnhancedTriple enhance_rgb(const std::array<Tensor, 3>& rgb) const;

  // Aggregation path on an enhanced triple ordered finest first.
  Tensor decode(const EnhancedTriple& triple) const;
  PredictionBundle project_outputs(const Tensor& f_out, const EnhancedTriple& enhanced_rgb,
                                   int output_size) const;

  PredictionBundle forward(const std::array<Tensor, 3>& fused, const std::array<Tensor, 3>& rgb,
                           int output_size) const;

  const DecoderConfig& config() const { return config_; }
  attention::EcaParams& geca() { return geca_; }
  Tensor& aggregate_weight() { return aggregate_weight_; }
  std::array<Tensor, 3>& output_conv_weights() { return out_conv_weight_; }
  std::array<RmfeParams, 3>& rmfe_fused() { return rmfe_fused_; }

 private:
  DecoderConfig config_;
  std::array<RmfeParams, 3> rmfe_fused_;
  std::array<RmfeParams, 3> rmfe_rgb_;
  attention::EcaParams geca_;
  Tensor aggregate_weight_, aggregate_bias_;  // (W, 3W, 3, 3)
  std::array<Tensor, 3> out_conv_weight_, out_conv_bias_;
  std::array<Tensor, 3> head_weight_, head_bias_;
};

}  // namespace dafnet::decoder
