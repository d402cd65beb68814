#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dafnet/tensor.hpp"

// Differentiable primitives. Every function builds a tape entry when any
// input requires grad; none of them mutates its inputs.
namespace dafnet::ops {

// While alive, piecewise ops (relu, max pools) on this thread append a hash
// of their branch choice (signs, argmax indices). Two evaluations with equal
// patterns lie on the same smooth piece.
class KinkRecorder {
 public:
  KinkRecorder();
  ~KinkRecorder();
  KinkRecorder(const KinkRecorder&) = delete;
  KinkRecorder& operator=(const KinkRecorder&) = delete;
  const std::vector<std::uint64_t>& pattern() const { return pattern_; }

 private:
  std::vector<std::uint64_t> pattern_;
  std::vector<std::uint64_t>* previous_;
};

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_n(const std::vector<Tensor>& terms);

// Broadcasting products on (C,H,W) maps.
Tensor mul_channels(const Tensor& x, const Tensor& weights);  // weights (C)
Tensor mul_plane(const Tensor& x, const Tensor& plane);       // plane (1,H,W)
Tensor mul_scalar(const Tensor& x, const Tensor& s);          // s has one element

Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);

// Reductions.
Tensor global_avg_pool(const Tensor& x);  // (C,H,W) -> (C)
Tensor global_max_pool(const Tensor& x);  // (C,H,W) -> (C)
Tensor channel_mean(const Tensor& x);     // (C,H,W) -> (1,H,W)
Tensor channel_max(const Tensor& x);      // (C,H,W) -> (1,H,W)
Tensor mean_all(const Tensor& x);         // -> (1)
Tensor sum_all(const Tensor& x);          // -> (1)
// Sum of w_i * x_i over all elements, w a constant; handy for gradient checks.
Tensor weighted_sum(const Tensor& x, std::span<const double> weights);

// Layout.
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat0(const std::vector<Tensor>& parts);  // along the leading dim
Tensor slice0(const Tensor& x, int start, int length);
Tensor transpose(const Tensor& x);                  // rank 2
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, int start, int length);
// (C*p*p, h, w) -> (C, h*p, w*p); channel index is c*p*p + dy*p + dx.
Tensor pixel_shuffle(const Tensor& x, int p);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);     // (m,k)x(k,n)
Tensor add_row_bias(const Tensor& x, const Tensor& bias);  // (n,d) + (d)
// y = W v + b for a vector v (n), W (m,n), b (m) or undefined.
Tensor dense(const Tensor& v, const Tensor& weight, const Tensor& bias);
Tensor softmax_rows(const Tensor& x);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps = 1e-5);

// Spatial.
struct ConvSpec {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
};
// x (C,H,W), weight (O,C,k,k), bias (O) or undefined. Zero padding.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, ConvSpec spec = {});
// 1-D convolution across a vector with zero padding, odd kernel, no bias.
Tensor conv1d_same(const Tensor& v, const Tensor& kernel);
// Non-overlapping average pooling; edge windows average the valid cells.
Tensor avg_pool(const Tensor& x, int k);
// Bilinear resize, half-pixel centres (align_corners disabled), edge clamp.
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);

// Losses on a single-channel logits map against a constant binary target
// of the same element count. Both return a (1) tensor.
Tensor bce_with_logits(const Tensor& logits, std::span<const double> target);
Tensor soft_iou_with_logits(const Tensor& logits, std::span<const double> target,
                            double smooth = 1.0);

}  // namespace dafnet::ops
