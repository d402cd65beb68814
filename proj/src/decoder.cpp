#include "dafnet/decoder.hpp"

#include "dafnet/errors.hpp"
#include "dafnet/ops.hpp"

namespace dafnet::decoder {

void DecoderConfig::validate() const {
  if (width < 1) throw ConfigError("decoder width must be positive");
  if (eca_kernel < 1 || eca_kernel % 2 == 0)
    throw ConfigError("ECA kernel size must be odd, got " + std::to_string(eca_kernel));
  for (int p : fam_pools)
    if (p < 1) throw ConfigError("FAM pool sizes must be positive");
  for (int d : rmfe_dilations)
    if (d < 1) throw ConfigError("RMFE dilations must be positive");
}

RmfeParams RmfeParams::create(ParameterSet& params, const std::string& prefix, int in_channels,
                              int width, bool enhance, const std::array<int, 3>& dilations,
                              Rng& rng) {
  RmfeParams p;
  p.skip_weight = params.create(join_name(prefix, "skip.weight"), {width, in_channels, 1, 1}, Init::xavier_normal, rng);
  p.skip_bias = params.create(join_name(prefix, "skip.bias"), {width}, Init::zeros, rng);
  if (!enhance) return p;
  for (std::size_t i = 0; i < dilations.size(); ++i) {
    const std::string bp = join_name(prefix, "branch" + std::to_string(i));
    p.dilations.push_back(dilations[i]);
    p.branch_weights.push_back(
        params.create(join_name(bp, "weight"), {width, in_channels, 3, 3}, Init::he_normal, rng));
    p.branch_biases.push_back(params.create(join_name(bp, "bias"), {width}, Init::zeros, rng));
  }
  const int branches = static_cast<int>(dilations.size());
  p.fuse_weight = params.create(join_name(prefix, "fuse.weight"), {width, branches * width, 1, 1}, Init::xavier_normal, rng);
  p.fuse_bias = params.create(join_name(prefix, "fuse.bias"), {width}, Init::zeros, rng);
  return p;
}

Tensor rmfe_single(const Tensor& x, const RmfeParams& params) {
  Tensor skip = ops::conv2d(x, params.skip_weight, params.skip_bias);
  if (params.branch_weights.empty()) return skip;
  std::vector<Tensor> branches;
  for (std::size_t i = 0; i < params.branch_weights.size(); ++i) {
    const int d = params.dilations[i];
    branches.push_back(ops::relu(ops::conv2d(x, params.branch_weights[i], params.branch_biases[i], {1, d, d})));
  }
  return ops::add(skip, ops::conv2d(ops::concat0(branches), params.fuse_weight, params.fuse_bias));
}

EnhancedTriple rmfe(const Tensor& a, const Tensor& b, const Tensor& c,
                    const std::array<RmfeParams, 3>& params) {
  return {{rmfe_single(a, params[0]), rmfe_single(b, params[1]), rmfe_single(c, params[2])}};
}

Tensor geca_residual(const Tensor& features, const attention::EcaParams& params) {
  return ops::add(attention::eca(features, params), features);
}

Tensor fam(const Tensor& x, const std::vector<int>& pools, const Tensor& conv_weight,
           const Tensor& conv_bias) {
  const int h = x.dim(1), w = x.dim(2);
  std::vector<Tensor> branches{x};
  for (int k : pools) branches.push_back(ops::resize_bilinear(ops::avg_pool(x, k), h, w));
  Tensor mean = ops::scale(ops::add_n(branches), 1.0 / static_cast<double>(branches.size()));
  return ops::conv2d(mean, conv_weight, conv_bias, {1, 1, 1});
}

FadDecoder::FadDecoder(ParameterSet& params, const std::string& prefix,
                       const DecoderConfig& config, const std::array<int, 3>& fused_channels,
                       const std::array<int, 3>& rgb_channels, Rng& rng)
    : config_(config) {
  config_.validate();
  const int w = config_.width;
  for (int k = 0; k < 3; ++k) {
    rmfe_fused_[k] = RmfeParams::create(params, join_name(prefix, "rmfe_fused" + std::to_string(k + 1)),
                                        fused_channels[k], w, config_.use_rmfe, config_.rmfe_dilations, rng);
  }
  for (int k = 0; k < 3; ++k) {
    rmfe_rgb_[k] = RmfeParams::create(params, join_name(prefix, "rmfe_rgb" + std::to_string(k + 1)),
                                      rgb_channels[k], w, config_.use_rmfe, config_.rmfe_dilations, rng);
  }
  if (config_.use_geca) geca_ = attention::EcaParams::create(params, join_name(prefix, "geca"), config_.eca_kernel, rng);
  aggregate_weight_ = params.create(join_name(prefix, "aggregate.weight"), {w, 3 * w, 3, 3}, Init::he_normal, rng);
  aggregate_bias_ = params.create(join_name(prefix, "aggregate.bias"), {w}, Init::zeros, rng);
  for (int k = 0; k < 3; ++k) {
    const std::string op = join_name(prefix, "out" + std::to_string(k + 1));
    out_conv_weight_[k] = params.create(join_name(op, "conv.weight"), {w, w, 3, 3}, Init::xavier_normal, rng);
    out_conv_bias_[k] = params.create(join_name(op, "conv.bias"), {w}, Init::zeros, rng);
    head_weight_[k] = params.create(join_name(op, "head.weight"), {1, w, 1, 1}, Init::xavier_normal, rng);
    head_bias_[k] = params.create(join_name(op, "head.bias"), {1}, Init::zeros, rng);
  }
}

EnhancedTriple FadDecoder::enhance_fused(const std::array<Tensor, 3>& fused) const {
  return rmfe(fused[0], fused[1], fused[2], rmfe_fused_);
}

EnhancedTriple FadDecoder::enhance_rgb(const std::array<Tensor, 3>& rgb) const {
  return rmfe(rgb[0], rgb[1], rgb[2], rmfe_rgb_);
}

Tensor FadDecoder::decode(const EnhancedTriple& triple) const {
  const Tensor& finest = triple.maps[0];
  const int c = finest.dim(0), h = finest.dim(1), w = finest.dim(2);
  for (const auto& m : triple.maps) {
    if (m.rank() != 3 || m.dim(0) != c) {
      throw ContractViolation("decode: enhanced maps must share channel width, got " +
                              shape_string(m.shape()) + " and " + shape_string(finest.shape()));
    }
  }
  Tensor features = ops::concat0({ops::resize_bilinear(triple.maps[2], h, w),
                                  ops::resize_bilinear(triple.maps[1], h, w), finest});
  if (config_.use_geca) features = geca_residual(features, geca_);
  if (config_.use_fam) return fam(features, config_.fam_pools, aggregate_weight_, aggregate_bias_);
  return ops::conv2d(features, aggregate_weight_, aggregate_bias_, {1, 1, 1});
}

PredictionBundle FadDecoder::project_outputs(const Tensor& f_out, const EnhancedTriple& enhanced_rgb,
                                             int output_size) const {
  PredictionBundle bundle;
  for (int k = 0; k < 3; ++k) {
    const Tensor& rgb = enhanced_rgb.maps[k];
    Tensor aligned = ops::resize_bilinear(
        ops::conv2d(f_out, out_conv_weight_[k], out_conv_bias_[k], {1, 1, 1}), rgb.dim(1), rgb.dim(2));
    if (aligned.shape() != rgb.shape()) {
      throw ContractViolation("project_outputs: aligned decoder map " + shape_string(aligned.shape()) +
                              " vs enhanced rgb " + shape_string(rgb.shape()));
    }
    bundle.products[k] = config_.use_rgb_residual ? ops::mul(aligned, rgb) : aligned;
    bundle.native[k] = ops::conv2d(bundle.products[k], head_weight_[k], head_bias_[k]);
    bundle.logits[k] = ops::resize_bilinear(bundle.native[k], output_size, output_size);
  }
  return bundle;
}

PredictionBundle FadDecoder::forward(const std::array<Tensor, 3>& fused,
                                     const std::array<Tensor, 3>& rgb, int output_size) const {
  return project_outputs(decode(enhance_fused(fused)), enhance_rgb(rgb), output_size);
}

}  // namespace dafnet::decoder
