#pragma once

#include <optional>
#include <string>

#include "dafnet/attention.hpp"
#include "dafnet/parameters.hpp"
#include "dafnet/tensor.hpp"

// Depth-weighted cross-attention fusion of one encoder stage.
//
//   R'   = (SA(x_d) * x_c) * CA(x_d)
//   D'   = (SA(x_c) * x_d) * CA(x_c)
//   F_a  = softmax_rows(P_d P_c^T)          P = 1x1conv(x) reshaped to C x HW
//   F_a2 = F_a P_d + F_a P_c                reshaped back to C x H x W
//   q    = sigmoid(MLP(GAP(F_a2 + x_d + x_c)))
//   x_f  = q D' + R'
//   x_d <- x_d + x_f                         input to the next depth stage
namespace dafnet::dcf {

enum class DcfMode {
  full,
  no_daw,    // q fixed to 1
  no_ca_sa,  // R' = x_c, D' = x_d
  baseline,  // 1x1 conv over concat(x_c, x_d); no DAW, no attention
};

DcfMode parse_dcf_mode(const std::string& text);
std::string to_string(DcfMode mode);

struct StagePair {
  Tensor rgb;    // x_c, (C,H,W)
  Tensor depth;  // x_d, same shape
  int stage = 1;

  // Throws ContractViolation on mismatched shapes or a stage outside 1..4.
  void validate() const;
};

struct CrossAttentionParams {
  attention::ChannelAttentionParams ca_rgb, ca_depth;
  attention::SpatialAttentionParams sa_rgb, sa_depth;
};

struct DawParams {
  Tensor proj_depth_weight, proj_depth_bias;  // 1x1 conv on x_d
  Tensor proj_rgb_weight, proj_rgb_bias;      // 1x1 conv on x_c
  Tensor mlp1_weight, mlp1_bias;              // (hidden, C)
  Tensor mlp2_weight, mlp2_bias;              // (1, hidden)

  int channels() const { return proj_depth_weight.dim(0); }
};

struct BaselineFusionParams {
  Tensor weight;  // (C, 2C, 1, 1)
  Tensor bias;
};

struct Hyper {
  int ca_reduction = 4;
  int sa_kernel = 7;
  int daw_reduction = 4;
};

// Only the parameter groups the mode uses are created.
struct DcfParams {
  std::optional<CrossAttentionParams> cross;
  std::optional<DawParams> daw;
  std::optional<BaselineFusionParams> baseline;

  // daw_channels is the channel count of the pair feeding DAW (differs from
  // `channels` when DAW reads another stage).
  static DcfParams create(ParameterSet& params, const std::string& prefix, int channels,
                          int daw_channels, DcfMode mode, const Hyper& hyper, Rng& rng);
};

struct CrossAttended {
  Tensor r_prime;
  Tensor d_prime;
};

struct Affinity {
  Tensor f_a;   // (C,C), rows sum to 1
  Tensor f_a2;  // (C,H,W)
};

CrossAttended cross_attend(const StagePair& pair, const CrossAttentionParams& params);
Affinity affinity(const StagePair& pair, const DawParams& params);
// (1) tensor in [0,1].
Tensor depth_confidence(const StagePair& pair, const DawParams& params);
Tensor fuse(const CrossAttended& attended, const Tensor& q);
Tensor update_depth_stream(const Tensor& depth, const Tensor& fused);

struct DcfOutput {
  Tensor fused;       // x_f
  Tensor q;           // (1)
  Tensor next_depth;  // x_d + x_f
};

// daw_source, when given, replaces `pair` as the DAW input.
DcfOutput dcf_forward(const StagePair& pair, const DcfParams& params, DcfMode mode,
                      const StagePair* daw_source = nullptr);

}  // namespace dafnet::dcf
