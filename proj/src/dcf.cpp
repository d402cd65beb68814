#include "dafnet/dcf.hpp"

#include <algorithm>

#include "dafnet/errors.hpp"
#include "dafnet/ops.hpp"

namespace dafnet::dcf {

DcfMode parse_dcf_mode(const std::string& text) {
  if (text == "full") return DcfMode::full;
  if (text == "no_daw") return DcfMode::no_daw;
  if (text == "no_ca_sa") return DcfMode::no_ca_sa;
  if (text == "baseline") return DcfMode::baseline;
  throw ConfigError("unknown DCF mode '" + text + "' (expected full|no_daw|no_ca_sa|baseline)");
}

std::string to_string(DcfMode mode) {
  switch (mode) {
    case DcfMode::full: return "full";
    case DcfMode::no_daw: return "no_daw";
    case DcfMode::no_ca_sa: return "no_ca_sa";
    case DcfMode::baseline: return "baseline";
  }
  return "full";
}

void StagePair::validate() const {
  if (!rgb.defined() || !depth.defined()) throw ContractViolation("StagePair: undefined feature");
  if (rgb.rank() != 3 || rgb.shape() != depth.shape()) {
    throw ContractViolation("StagePair: rgb " + shape_string(rgb.shape()) + " vs depth " +
                            shape_string(depth.shape()));
  }
  if (stage < 1 || stage > 4) throw ContractViolation("StagePair: stage out of range");
}

DcfParams DcfParams::create(ParameterSet& params, const std::string& prefix, int channels,
                            int daw_channels, DcfMode mode, const Hyper& hyper, Rng& rng) {
  DcfParams p;
  if (mode == DcfMode::baseline) {
    p.baseline = BaselineFusionParams{
        params.create(join_name(prefix, "baseline.weight"), {channels, 2 * channels, 1, 1},
                      Init::he_normal, rng),
        params.create(join_name(prefix, "baseline.bias"), {channels}, Init::zeros, rng)};
    return p;
  }
  if (mode != DcfMode::no_ca_sa) {
    using attention::ChannelAttentionParams;
    using attention::SpatialAttentionParams;
    p.cross = CrossAttentionParams{
        ChannelAttentionParams::create(params, join_name(prefix, "ca_rgb"), channels, hyper.ca_reduction, rng),
        ChannelAttentionParams::create(params, join_name(prefix, "ca_depth"), channels, hyper.ca_reduction, rng),
        SpatialAttentionParams::create(params, join_name(prefix, "sa_rgb"), hyper.sa_kernel, rng),
        SpatialAttentionParams::create(params, join_name(prefix, "sa_depth"), hyper.sa_kernel, rng)};
  }
  if (mode != DcfMode::no_daw) {
    const int c = daw_channels;
    const int hidden = std::max(1, c / hyper.daw_reduction);
    DawParams d;
    d.proj_depth_weight = params.create(join_name(prefix, "daw.proj_depth.weight"), {c, c, 1, 1}, Init::xavier_normal, rng);
    d.proj_depth_bias = params.create(join_name(prefix, "daw.proj_depth.bias"), {c}, Init::zeros, rng);
    d.proj_rgb_weight = params.create(join_name(prefix, "daw.proj_rgb.weight"), {c, c, 1, 1}, Init::xavier_normal, rng);
    d.proj_rgb_bias = params.create(join_name(prefix, "daw.proj_rgb.bias"), {c}, Init::zeros, rng);
    d.mlp1_weight = params.create(join_name(prefix, "daw.mlp1.weight"), {hidden, c}, Init::he_normal, rng);
    d.mlp1_bias = params.create(join_name(prefix, "daw.mlp1.bias"), {hidden}, Init::zeros, rng);
    d.mlp2_weight = params.create(join_name(prefix, "daw.mlp2.weight"), {1, hidden}, Init::xavier_normal, rng);
    d.mlp2_bias = params.create(join_name(prefix, "daw.mlp2.bias"), {1}, Init::zeros, rng);
    p.daw = std::move(d);
  }
  return p;
}

CrossAttended cross_attend(const StagePair& pair, const CrossAttentionParams& params) {
  pair.validate();
  using namespace attention;
  Tensor r_prime = ops::mul_channels(
      ops::mul_plane(pair.rgb, spatial_attention(pair.depth, params.sa_depth)),
      channel_attention(pair.depth, params.ca_depth));
  Tensor d_prime = ops::mul_channels(
      ops::mul_plane(pair.depth, spatial_attention(pair.rgb, params.sa_rgb)),
      channel_attention(pair.rgb, params.ca_rgb));
  return {r_prime, d_prime};
}

Affinity affinity(const StagePair& pair, const DawParams& params) {
  pair.validate();
  const int c = pair.rgb.dim(0), h = pair.rgb.dim(1), w = pair.rgb.dim(2);
  if (params.channels() != c) {
    throw ContractViolation("affinity: DAW sized for " + std::to_string(params.channels()) +
                            " channels, pair has " + std::to_string(c));
  }
  Tensor pd = ops::reshape(ops::conv2d(pair.depth, params.proj_depth_weight, params.proj_depth_bias), {c, h * w});
  Tensor pc = ops::reshape(ops::conv2d(pair.rgb, params.proj_rgb_weight, params.proj_rgb_bias), {c, h * w});
  Tensor f_a = ops::softmax_rows(ops::matmul(pd, ops::transpose(pc)));
  Tensor f_a2 = ops::reshape(ops::add(ops::matmul(f_a, pd), ops::matmul(f_a, pc)), {c, h, w});
  return {f_a, f_a2};
}

Tensor depth_confidence(const StagePair& pair, const DawParams& params) {
  Affinity a = affinity(pair, params);
  Tensor pooled = ops::global_avg_pool(ops::add_n({a.f_a2, pair.depth, pair.rgb}));
  Tensor hidden = ops::relu(ops::dense(pooled, params.mlp1_weight, params.mlp1_bias));
  return ops::sigmoid(ops::dense(hidden, params.mlp2_weight, params.mlp2_bias));
}

Tensor fuse(const CrossAttended& attended, const Tensor& q) {
  return ops::add(ops::mul_scalar(attended.d_prime, q), attended.r_prime);
}

Tensor update_depth_stream(const Tensor& depth, const Tensor& fused) {
  if (depth.shape() != fused.shape()) {
    throw ContractViolation("update_depth_stream: depth " + shape_string(depth.shape()) +
                            " vs fused " + shape_string(fused.shape()));
  }
  return ops::add(depth, fused);
}

DcfOutput dcf_forward(const StagePair& pair, const DcfParams& params, DcfMode mode,
                      const StagePair* daw_source) {
  pair.validate();
  auto missing = [&](const char* group) {
    return ConfigError(std::string("dcf_forward: mode ") + to_string(mode) + " needs " + group +
                       " parameters");
  };
  DcfOutput out;
  if (mode == DcfMode::baseline) {
    if (!params.baseline) throw missing("baseline");
    out.fused = ops::conv2d(ops::concat0({pair.rgb, pair.depth}), params.baseline->weight,
                            params.baseline->bias);
    out.q = Tensor::scalar(1.0);
  } else {
    CrossAttended attended;
    if (mode == DcfMode::no_ca_sa) {
      attended = {pair.rgb, pair.depth};
    } else {
      if (!params.cross) throw missing("cross-attention");
      attended = cross_attend(pair, *params.cross);
    }
    if (mode == DcfMode::no_daw) {
      out.q = Tensor::scalar(1.0);
    } else {
      if (!params.daw) throw missing("DAW");
      out.q = depth_confidence(daw_source ? *daw_source : pair, *params.daw);
    }
    out.fused = fuse(attended, out.q);
  }
  out.next_depth = update_depth_stream(pair.depth, out.fused);
  return out;
}

}  // namespace dafnet::dcf
