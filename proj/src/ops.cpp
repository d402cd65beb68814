#include "dafnet/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "dafnet/errors.hpp"

namespace dafnet::ops {

namespace {

thread_local std::vector<std::uint64_t>* kink_sink = nullptr;

// FNV-1a over a branch pattern.
template <typename Range, typename F>
void record_kinks(const Range& items, F key) {
  if (!kink_sink) return;
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& item : items) {
    h ^= static_cast<std::uint64_t>(key(item));
    h *= 1099511628211ull;
  }
  kink_sink->push_back(h);
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// Gradient buffer of parent i, or nullptr when that parent is constant.
std::vector<double>* parent_grad(detail::Node& node, std::size_t i) {
  auto& p = node.parents[i];
  return p->requires_grad ? &p->grad_buffer() : nullptr;
}

const std::vector<double>& parent_value(const detail::Node& node, std::size_t i) {
  return node.parents[i]->value;
}

void expect(bool ok, const char* op, const std::string& what) {
  if (!ok) throw ContractViolation(std::string(op) + ": " + what);
}

void expect_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  expect(a.shape() == b.shape(), op,
         "shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

void expect_rank(const Tensor& x, int rank, const char* op) {
  expect(x.rank() == rank, op,
         "expected rank " + std::to_string(rank) + ", got " + shape_string(x.shape()));
}

template <typename F, typename G>
Tensor unary(const Tensor& x, F forward, G derivative) {
  const auto& in = x.to_vector();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  return Tensor::make_result(x.shape(), std::move(out), {x}, [derivative](detail::Node& n) {
    auto* gx = parent_grad(n, 0);
    if (!gx) return;
    const auto& xin = parent_value(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      (*gx)[i] += n.grad[i] * derivative(xin[i], n.value[i]);
  });
}

double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

KinkRecorder::KinkRecorder() : previous_(kink_sink) { kink_sink = &pattern_; }
KinkRecorder::~KinkRecorder() { kink_sink = previous_; }

Tensor add(const Tensor& a, const Tensor& b) {
  expect_same_shape(a, b, "add");
  const auto& va = a.to_vector();
  const auto& vb = b.to_vector();
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
    for (std::size_t k = 0; k < 2; ++k)
      if (auto* g = parent_grad(n, k))
        for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  expect_same_shape(a, b, "sub");
  const auto& va = a.to_vector();
  const auto& vb = b.to_vector();
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] - vb[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
    if (auto* g = parent_grad(n, 0))
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
    if (auto* g = parent_grad(n, 1))
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] -= n.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  expect_same_shape(a, b, "mul");
  const auto& va = a.to_vector();
  const auto& vb = b.to_vector();
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
    const auto& va = parent_value(n, 0);
    const auto& vb = parent_value(n, 1);
    if (auto* g = parent_grad(n, 0))
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i] * vb[i];
    if (auto* g = parent_grad(n, 1))
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i] * va[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_n(const std::vector<Tensor>& terms) {
  expect(!terms.empty(), "add_n", "no terms");
  for (const auto& t : terms) expect_same_shape(terms.front(), t, "add_n");
  std::vector<double> out(terms.front().numel(), 0.0);
  for (const auto& t : terms) {
    const auto& v = t.to_vector();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  return Tensor::make_result(terms.front().shape(), std::move(out), terms, [](detail::Node& n) {
    for (std::size_t k = 0; k < n.parents.size(); ++k)
      if (auto* g = parent_grad(n, k))
        for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
  });
}

Tensor mul_channels(const Tensor& x, const Tensor& weights) {
  expect_rank(x, 3, "mul_channels");
  expect(weights.rank() == 1 && weights.dim(0) == x.dim(0), "mul_channels",
         "weights " + shape_string(weights.shape()) + " for map " + shape_string(x.shape()));
  const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  const auto& vx = x.to_vector();
  const auto& vw = weights.to_vector();
  std::vector<double> out(vx.size());
  for (std::size_t c = 0; c < vw.size(); ++c)
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = vx[c * plane + i] * vw[c];
  return Tensor::make_result(x.shape(), std::move(out), {x, weights}, [plane](detail::Node& n) {
    const auto& vx = parent_value(n, 0);
    const auto& vw = parent_value(n, 1);
    auto* gx = parent_grad(n, 0);
    auto* gw = parent_grad(n, 1);
    for (std::size_t c = 0; c < vw.size(); ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t k = c * plane + i;
        if (gx) (*gx)[k] += n.grad[k] * vw[c];
        acc += n.grad[k] * vx[k];
      }
      if (gw) (*gw)[c] += acc;
    }
  });
}

Tensor mul_plane(const Tensor& x, const Tensor& plane_map) {
  expect_rank(x, 3, "mul_plane");
  expect(plane_map.rank() == 3 && plane_map.dim(0) == 1 && plane_map.dim(1) == x.dim(1) &&
             plane_map.dim(2) == x.dim(2),
         "mul_plane",
         "plane " + shape_string(plane_map.shape()) + " for map " + shape_string(x.shape()));
  const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  const std::size_t channels = static_cast<std::size_t>(x.dim(0));
  const auto& vx = x.to_vector();
  const auto& vp = plane_map.to_vector();
  std::vector<double> out(vx.size());
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = vx[c * plane + i] * vp[i];
  return Tensor::make_result(
      x.shape(), std::move(out), {x, plane_map}, [plane, channels](detail::Node& n) {
        const auto& vx = parent_value(n, 0);
        const auto& vp = parent_value(n, 1);
        auto* gx = parent_grad(n, 0);
        auto* gp = parent_grad(n, 1);
        for (std::size_t c = 0; c < channels; ++c)
          for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t k = c * plane + i;
            if (gx) (*gx)[k] += n.grad[k] * vp[i];
            if (gp) (*gp)[i] += n.grad[k] * vx[k];
          }
      });
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
  expect(s.numel() == 1, "mul_scalar", "scalar operand has shape " + shape_string(s.shape()));
  const double q = s.item();
  const auto& vx = x.to_vector();
  std::vector<double> out(vx.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = vx[i] * q;
  return Tensor::make_result(x.shape(), std::move(out), {x, s}, [](detail::Node& n) {
    const auto& vx = parent_value(n, 0);
    const double q = parent_value(n, 1)[0];
    if (auto* g = parent_grad(n, 0))
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i] * q;
    if (auto* g = parent_grad(n, 1)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n.grad.size(); ++i) acc += n.grad[i] * vx[i];
      (*g)[0] += acc;
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, [](double v) { return stable_sigmoid(v); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  record_kinks(x.to_vector(), [](double v) { return v > 0.0; });
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  static const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  static const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [](double v, double) {
        return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(-0.5 * v * v);
      });
}

Tensor global_avg_pool(const Tensor& x) {
  expect_rank(x, 3, "global_avg_pool");
  const std::size_t channels = static_cast<std::size_t>(x.dim(0));
  const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  const auto& vx = x.to_vector();
  std::vector<double> out(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += vx[c * plane + i];
    out[c] = acc / static_cast<double>(plane);
  }
  return Tensor::make_result({x.dim(0)}, std::move(out), {x}, [plane](detail::Node& n) {
    auto* g = parent_grad(n, 0);
    if (!g) return;
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::size_t c = 0; c < n.grad.size(); ++c)
      for (std::size_t i = 0; i < plane; ++i) (*g)[c * plane + i] += n.grad[c] * inv;
  });
}

Tensor global_max_pool(const Tensor& x) {
  expect_rank(x, 3, "global_max_pool");
  const std::size_t channels = static_cast<std::size_t>(x.dim(0));
  const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  const auto& vx = x.to_vector();
  std::vector<double> out(channels);
  std::vector<std::size_t> arg(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    std::size_t best = c * plane;
    for (std::size_t i = 1; i < plane; ++i)
      if (vx[c * plane + i] > vx[best]) best = c * plane + i;
    arg[c] = best;
    out[c] = vx[best];
  }
  record_kinks(arg, [](std::size_t a) { return a; });
  return Tensor::make_result({x.dim(0)}, std::move(out), {x},
                             [arg = std::move(arg)](detail::Node& n) {
                               if (auto* g = parent_grad(n, 0))
                                 for (std::size_t c = 0; c < arg.size(); ++c)
                                   (*g)[arg[c]] += n.grad[c];
                             });
}

Tensor channel_mean(const Tensor& x) {
  expect_rank(x, 3, "channel_mean");
  const std::size_t channels = static_cast<std::size_t>(x.dim(0));
  const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  const auto& vx = x.to_vector();
  std::vector<double> out(plane, 0.0);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < plane; ++i) out[i] += vx[c * plane + i];
  for (auto& v : out) v /= static_cast<double>(channels);
  return Tensor::make_result({1, x.dim(1), x.dim(2)}, std::move(out), {x},
                             [channels, plane](detail::Node& n) {
                               auto* g = parent_grad(n, 0);
                               if (!g) return;
                               const double inv = 1.0 / static_cast<double>(channels);
                               for (std::size_t c = 0; c < channels; ++c)
                                 for (std::size_t i = 0; i < plane; ++i)
                                   (*g)[c * plane + i] += n.grad[i] * inv;
                             });
}

Tensor channel_max(const Tensor& x) {
  expect_rank(x, 3, "channel_max");
  const std::size_t channels = static_cast<std::size_t>(x.dim(0));
  const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  const auto& vx = x.to_vector();
  std::vector<double> out(plane);
  std::vector<std::size_t> arg(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    std::size_t best = i;
    for (std::size_t c = 1; c < channels; ++c)
      if (vx[c * plane + i] > vx[best]) best = c * plane + i;
    arg[i] = best;
    out[i] = vx[best];
  }
  record_kinks(arg, [](std::size_t a) { return a; });
  return Tensor::make_result({1, x.dim(1), x.dim(2)}, std::move(out), {x},
                             [arg = std::move(arg)](detail::Node& n) {
                               if (auto* g = parent_grad(n, 0))
                                 for (std::size_t i = 0; i < arg.size(); ++i)
                                   (*g)[arg[i]] += n.grad[i];
                             });
}

Tensor mean_all(const Tensor& x) {
  const auto& vx = x.to_vector();
  const double count = static_cast<double>(vx.size());
  double acc = std::accumulate(vx.begin(), vx.end(), 0.0);
  return Tensor::make_result({1}, {acc / count}, {x}, [count](detail::Node& n) {
    if (auto* g = parent_grad(n, 0))
      for (auto& v : *g) v += n.grad[0] / count;
  });
}

Tensor sum_all(const Tensor& x) {
  const auto& vx = x.to_vector();
  double acc = std::accumulate(vx.begin(), vx.end(), 0.0);
  return Tensor::make_result({1}, {acc}, {x}, [](detail::Node& n) {
    if (auto* g = parent_grad(n, 0))
      for (auto& v : *g) v += n.grad[0];
  });
}

Tensor weighted_sum(const Tensor& x, std::span<const double> weights) {
  expect(weights.size() == x.numel(), "weighted_sum", "weight count mismatch");
  const auto& vx = x.to_vector();
  double acc = 0.0;
  for (std::size_t i = 0; i < vx.size(); ++i) acc += vx[i] * weights[i];
  std::vector<double> w(weights.begin(), weights.end());
  return Tensor::make_result({1}, {acc}, {x}, [w = std::move(w)](detail::Node& n) {
    if (auto* g = parent_grad(n, 0))
      for (std::size_t i = 0; i < w.size(); ++i) (*g)[i] += n.grad[0] * w[i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  expect(shape_numel(shape) == x.numel(), "reshape",
         shape_string(x.shape()) + " -> " + shape_string(shape));
  return Tensor::make_result(std::move(shape), x.to_vector(), {x}, [](detail::Node& n) {
    if (auto* g = parent_grad(n, 0))
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
  });
}

Tensor concat0(const std::vector<Tensor>& parts) {
  expect(!parts.empty(), "concat0", "no inputs");
  Shape shape = parts.front().shape();
  int lead = 0;
  for (const auto& p : parts) {
    expect(p.rank() == static_cast<int>(shape.size()) &&
               std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1),
           "concat0", "trailing shape mismatch " + shape_string(p.shape()));
    lead += p.dim(0);
  }
  shape[0] = lead;
  std::vector<double> out;
  out.reserve(shape_numel(shape));
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(out.size());
    const auto& v = p.to_vector();
    out.insert(out.end(), v.begin(), v.end());
  }
  return Tensor::make_result(std::move(shape), std::move(out), parts,
                             [offsets = std::move(offsets)](detail::Node& n) {
                               for (std::size_t k = 0; k < n.parents.size(); ++k)
                                 if (auto* g = parent_grad(n, k))
                                   for (std::size_t i = 0; i < g->size(); ++i)
                                     (*g)[i] += n.grad[offsets[k] + i];
                             });
}

Tensor slice0(const Tensor& x, int start, int length) {
  expect(start >= 0 && length > 0 && start + length <= x.dim(0), "slice0",
         "range [" + std::to_string(start) + "," + std::to_string(start + length) + ") of " +
             shape_string(x.shape()));
  Shape shape = x.shape();
  shape[0] = length;
  const std::size_t inner = x.numel() / static_cast<std::size_t>(x.dim(0));
  const std::size_t offset = inner * static_cast<std::size_t>(start);
  const auto& v = x.to_vector();
  std::vector<double> out(v.begin() + static_cast<std::ptrdiff_t>(offset),
                          v.begin() + static_cast<std::ptrdiff_t>(offset + inner * length));
  return Tensor::make_result(std::move(shape), std::move(out), {x}, [offset](detail::Node& n) {
    if (auto* g = parent_grad(n, 0))
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[offset + i] += n.grad[i];
  });
}

Tensor transpose(const Tensor& x) {
  expect_rank(x, 2, "transpose");
  const int rows = x.dim(0), cols = x.dim(1);
  const auto& v = x.to_vector();
  std::vector<double> out(v.size());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out[static_cast<std::size_t>(c) * rows + r] = v[static_cast<std::size_t>(r) * cols + c];
  return Tensor::make_result({cols, rows}, std::move(out), {x}, [rows, cols](detail::Node& n) {
    if (auto* g = parent_grad(n, 0))
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
          (*g)[static_cast<std::size_t>(r) * cols + c] += n.grad[static_cast<std::size_t>(c) * rows + r];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  expect(!parts.empty(), "concat_cols", "no inputs");
  const int rows = parts.front().dim(0);
  int cols = 0;
  std::vector<int> widths;
  for (const auto& p : parts) {
    expect_rank(p, 2, "concat_cols");
    expect(p.dim(0) == rows, "concat_cols", "row count mismatch");
    widths.push_back(p.dim(1));
    cols += p.dim(1);
  }
  std::vector<double> out(static_cast<std::size_t>(rows) * cols);
  int offset = 0;
  for (const auto& p : parts) {
    const auto& v = p.to_vector();
    const int w = p.dim(1);
    for (int r = 0; r < rows; ++r)
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(r) * w, w,
                  out.begin() + static_cast<std::ptrdiff_t>(r) * cols + offset);
    offset += w;
  }
  return Tensor::make_result({rows, cols}, std::move(out), parts,
                             [rows, cols, widths = std::move(widths)](detail::Node& n) {
                               int offset = 0;
                               for (std::size_t k = 0; k < widths.size(); ++k) {
                                 const int w = widths[k];
                                 if (auto* g = parent_grad(n, k))
                                   for (int r = 0; r < rows; ++r)
                                     for (int c = 0; c < w; ++c)
                                       (*g)[static_cast<std::size_t>(r) * w + c] +=
                                           n.grad[static_cast<std::size_t>(r) * cols + offset + c];
                                 offset += w;
                               }
                             });
}

Tensor slice_cols(const Tensor& x, int start, int length) {
  expect_rank(x, 2, "slice_cols");
  expect(start >= 0 && length > 0 && start + length <= x.dim(1), "slice_cols", "bad range");
  const int rows = x.dim(0), cols = x.dim(1);
  const auto& v = x.to_vector();
  std::vector<double> out(static_cast<std::size_t>(rows) * length);
  for (int r = 0; r < rows; ++r)
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(r) * cols + start, length,
                out.begin() + static_cast<std::ptrdiff_t>(r) * length);
  return Tensor::make_result({rows, length}, std::move(out), {x},
                             [rows, cols, start, length](detail::Node& n) {
                               if (auto* g = parent_grad(n, 0))
                                 for (int r = 0; r < rows; ++r)
                                   for (int c = 0; c < length; ++c)
                                     (*g)[static_cast<std::size_t>(r) * cols + start + c] +=
                                         n.grad[static_cast<std::size_t>(r) * length + c];
                             });
}

Tensor pixel_shuffle(const Tensor& x, int p) {
  expect_rank(x, 3, "pixel_shuffle");
  expect(p >= 1 && x.dim(0) % (p * p) == 0, "pixel_shuffle",
         "channels " + std::to_string(x.dim(0)) + " not divisible by p^2");
  const int channels = x.dim(0) / (p * p), h = x.dim(1), w = x.dim(2);
  const int oh = h * p, ow = w * p;
  // index[o] = source offset of output element o
  std::vector<std::size_t> index(x.numel());
  for (int c = 0; c < channels; ++c)
    for (int dy = 0; dy < p; ++dy)
      for (int dx = 0; dx < p; ++dx) {
        const int src_c = c * p * p + dy * p + dx;
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx) {
            const std::size_t o = (static_cast<std::size_t>(c) * oh + (y * p + dy)) * ow + (xx * p + dx);
            index[o] = (static_cast<std::size_t>(src_c) * h + y) * w + xx;
          }
      }
  const auto& v = x.to_vector();
  std::vector<double> out(v.size());
  for (std::size_t o = 0; o < out.size(); ++o) out[o] = v[index[o]];
  return Tensor::make_result({channels, oh, ow}, std::move(out), {x},
                             [index = std::move(index)](detail::Node& n) {
                               if (auto* g = parent_grad(n, 0))
                                 for (std::size_t o = 0; o < index.size(); ++o)
                                   (*g)[index[o]] += n.grad[o];
                             });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  expect_rank(a, 2, "matmul");
  expect_rank(b, 2, "matmul");
  expect(a.dim(1) == b.dim(0), "matmul",
         shape_string(a.shape()) + " x " + shape_string(b.shape()));
  const int m = a.dim(0), k = a.dim(1), nc = b.dim(1);
  std::vector<double> out(static_cast<std::size_t>(m) * nc);
  MutMap(out.data(), m, nc).noalias() =
      ConstMap(a.to_vector().data(), m, k) * ConstMap(b.to_vector().data(), k, nc);
  return Tensor::make_result({m, nc}, std::move(out), {a, b}, [m, k, nc](detail::Node& n) {
    ConstMap g(n.grad.data(), m, nc);
    if (auto* ga = parent_grad(n, 0))
      MutMap(ga->data(), m, k).noalias() += g * ConstMap(parent_value(n, 1).data(), k, nc).transpose();
    if (auto* gb = parent_grad(n, 1))
      MutMap(gb->data(), k, nc).noalias() += ConstMap(parent_value(n, 0).data(), m, k).transpose() * g;
  });
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  expect_rank(x, 2, "add_row_bias");
  expect(bias.rank() == 1 && bias.dim(0) == x.dim(1), "add_row_bias", "bias width mismatch");
  const int rows = x.dim(0), cols = x.dim(1);
  const auto& vb = bias.to_vector();
  std::vector<double> out = x.to_vector();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out[static_cast<std::size_t>(r) * cols + c] += vb[c];
  return Tensor::make_result(x.shape(), std::move(out), {x, bias}, [rows, cols](detail::Node& n) {
    if (auto* g = parent_grad(n, 0))
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
    if (auto* g = parent_grad(n, 1))
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) (*g)[c] += n.grad[static_cast<std::size_t>(r) * cols + c];
  });
}

Tensor dense(const Tensor& v, const Tensor& weight, const Tensor& bias) {
  expect_rank(v, 1, "dense");
  expect_rank(weight, 2, "dense");
  const int rows = weight.dim(0), cols = weight.dim(1);
  expect(v.dim(0) == cols, "dense",
         "input length " + std::to_string(v.dim(0)) + " for weight " + shape_string(weight.shape()));
  const bool has_bias = bias.defined();
  if (has_bias) expect(bias.rank() == 1 && bias.dim(0) == rows, "dense", "bias length mismatch");
  const auto& vv = v.to_vector();
  const auto& vw = weight.to_vector();
  std::vector<double> out(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    double acc = has_bias ? bias.to_vector()[r] : 0.0;
    for (int c = 0; c < cols; ++c) acc += vw[static_cast<std::size_t>(r) * cols + c] * vv[c];
    out[r] = acc;
  }
  std::vector<Tensor> inputs{v, weight};
  if (has_bias) inputs.push_back(bias);
  return Tensor::make_result({rows}, std::move(out), std::move(inputs),
                             [rows, cols, has_bias](detail::Node& n) {
                               const auto& vv = parent_value(n, 0);
                               const auto& vw = parent_value(n, 1);
                               auto* gv = parent_grad(n, 0);
                               auto* gw = parent_grad(n, 1);
                               for (int r = 0; r < rows; ++r) {
                                 const double g = n.grad[r];
                                 for (int c = 0; c < cols; ++c) {
                                   const std::size_t k = static_cast<std::size_t>(r) * cols + c;
                                   if (gv) (*gv)[c] += g * vw[k];
                                   if (gw) (*gw)[k] += g * vv[c];
                                 }
                               }
                               if (has_bias)
                                 if (auto* gb = parent_grad(n, 2))
                                   for (int r = 0; r < rows; ++r) (*gb)[r] += n.grad[r];
                             });
}

Tensor softmax_rows(const Tensor& x) {
  expect_rank(x, 2, "softmax_rows");
  const int rows = x.dim(0), cols = x.dim(1);
  const auto& v = x.to_vector();
  std::vector<double> out(v.size());
  for (int r = 0; r < rows; ++r) {
    const double* in = v.data() + static_cast<std::size_t>(r) * cols;
    double* o = out.data() + static_cast<std::size_t>(r) * cols;
    const double peak = *std::max_element(in, in + cols);
    double total = 0.0;
    for (int c = 0; c < cols; ++c) total += (o[c] = std::exp(in[c] - peak));
    for (int c = 0; c < cols; ++c) o[c] /= total;
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [rows, cols](detail::Node& n) {
    auto* g = parent_grad(n, 0);
    if (!g) return;
    for (int r = 0; r < rows; ++r) {
      const std::size_t base = static_cast<std::size_t>(r) * cols;
      double dot = 0.0;
      for (int c = 0; c < cols; ++c) dot += n.grad[base + c] * n.value[base + c];
      for (int c = 0; c < cols; ++c) (*g)[base + c] += n.value[base + c] * (n.grad[base + c] - dot);
    }
  });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  expect_rank(x, 2, "layer_norm_rows");
  const int rows = x.dim(0), cols = x.dim(1);
  expect(gamma.numel() == static_cast<std::size_t>(cols) && beta.numel() == static_cast<std::size_t>(cols),
         "layer_norm_rows", "affine parameter width mismatch");
  const auto& v = x.to_vector();
  const auto& vg = gamma.to_vector();
  const auto& vb = beta.to_vector();
  std::vector<double> normalized(v.size());
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  std::vector<double> out(v.size());
  for (int r = 0; r < rows; ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * cols;
    double mean = 0.0;
    for (int c = 0; c < cols; ++c) mean += v[base + c];
    mean /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) var += (v[base + c] - mean) * (v[base + c] - mean);
    var /= cols;
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (int c = 0; c < cols; ++c) {
      normalized[base + c] = (v[base + c] - mean) * inv_std[r];
      out[base + c] = normalized[base + c] * vg[c] + vb[c];
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [rows, cols, normalized = std::move(normalized), inv_std = std::move(inv_std)](detail::Node& n) {
        const auto& vg = parent_value(n, 1);
        auto* gx = parent_grad(n, 0);
        auto* gg = parent_grad(n, 1);
        auto* gb = parent_grad(n, 2);
        std::vector<double> dxhat(static_cast<std::size_t>(cols));
        for (int r = 0; r < rows; ++r) {
          const std::size_t base = static_cast<std::size_t>(r) * cols;
          double sum_d = 0.0, sum_dx = 0.0;
          for (int c = 0; c < cols; ++c) {
            const double g = n.grad[base + c];
            if (gg) (*gg)[c] += g * normalized[base + c];
            if (gb) (*gb)[c] += g;
            dxhat[c] = g * vg[c];
            sum_d += dxhat[c];
            sum_dx += dxhat[c] * normalized[base + c];
          }
          if (gx)
            for (int c = 0; c < cols; ++c)
              (*gx)[base + c] += inv_std[r] / cols *
                                 (cols * dxhat[c] - sum_d - normalized[base + c] * sum_dx);
        }
      });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, ConvSpec spec) {
  expect_rank(x, 3, "conv2d");
  expect_rank(weight, 4, "conv2d");
  const int in_c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int out_c = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  expect(weight.dim(1) == in_c, "conv2d",
         "weight " + shape_string(weight.shape()) + " for input " + shape_string(x.shape()));
  expect(spec.stride >= 1 && spec.dilation >= 1 && spec.padding >= 0, "conv2d", "bad geometry");
  const bool has_bias = bias.defined();
  if (has_bias) expect(bias.rank() == 1 && bias.dim(0) == out_c, "conv2d", "bias length mismatch");
  const int oh = (h + 2 * spec.padding - spec.dilation * (kh - 1) - 1) / spec.stride + 1;
  const int ow = (w + 2 * spec.padding - spec.dilation * (kw - 1) - 1) / spec.stride + 1;
  expect(oh >= 1 && ow >= 1, "conv2d", "kernel larger than padded input");
  const int k = in_c * kh * kw;
  const int npos = oh * ow;
  const bool pointwise = kh == 1 && kw == 1 && spec.stride == 1 && spec.padding == 0;

  // im2col: row (c,ky,kx), column (oy,ox)
  auto cols = std::make_shared<std::vector<double>>();
  const auto& vx = x.to_vector();
  if (!pointwise) {
    cols->assign(static_cast<std::size_t>(k) * npos, 0.0);
    for (int c = 0; c < in_c; ++c)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx) {
          double* row = cols->data() + static_cast<std::size_t>((c * kh + ky) * kw + kx) * npos;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * spec.stride - spec.padding + ky * spec.dilation;
            if (iy < 0 || iy >= h) continue;
            const double* src = vx.data() + (static_cast<std::size_t>(c) * h + iy) * w;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * spec.stride - spec.padding + kx * spec.dilation;
              if (ix >= 0 && ix < w) row[oy * ow + ox] = src[ix];
            }
          }
        }
  }
  const double* col_data = pointwise ? vx.data() : cols->data();

  std::vector<double> out(static_cast<std::size_t>(out_c) * npos);
  MutMap out_m(out.data(), out_c, npos);
  out_m.noalias() = ConstMap(weight.to_vector().data(), out_c, k) * ConstMap(col_data, k, npos);
  if (has_bias) {
    const auto& vb = bias.to_vector();
    for (int o = 0; o < out_c; ++o) out_m.row(o).array() += vb[o];
  }

  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return Tensor::make_result(
      {out_c, oh, ow}, std::move(out), std::move(inputs),
      [=](detail::Node& n) {
        ConstMap g(n.grad.data(), out_c, npos);
        const double* cdata = pointwise ? parent_value(n, 0).data() : cols->data();
        if (auto* gw = parent_grad(n, 1))
          MutMap(gw->data(), out_c, k).noalias() += g * ConstMap(cdata, k, npos).transpose();
        if (has_bias)
          if (auto* gb = parent_grad(n, 2))
            for (int o = 0; o < out_c; ++o) (*gb)[o] += g.row(o).sum();
        auto* gx = parent_grad(n, 0);
        if (!gx) return;
        ConstMap wm(parent_value(n, 1).data(), out_c, k);
        if (pointwise) {
          MutMap(gx->data(), k, npos).noalias() += wm.transpose() * g;
          return;
        }
        RowMat dcols = wm.transpose() * g;
        for (int c = 0; c < in_c; ++c)
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
              const double* row = dcols.data() + static_cast<std::size_t>((c * kh + ky) * kw + kx) * npos;
              for (int oy = 0; oy < oh; ++oy) {
                const int iy = oy * spec.stride - spec.padding + ky * spec.dilation;
                if (iy < 0 || iy >= h) continue;
                double* dst = gx->data() + (static_cast<std::size_t>(c) * h + iy) * w;
                for (int ox = 0; ox < ow; ++ox) {
                  const int ix = ox * spec.stride - spec.padding + kx * spec.dilation;
                  if (ix >= 0 && ix < w) dst[ix] += row[oy * ow + ox];
                }
              }
            }
      });
}

Tensor conv1d_same(const Tensor& v, const Tensor& kernel) {
  expect_rank(v, 1, "conv1d_same");
  expect_rank(kernel, 1, "conv1d_same");
  const int len = v.dim(0), k = kernel.dim(0);
  expect(k % 2 == 1, "conv1d_same", "kernel size must be odd");
  const int half = k / 2;
  const auto& vv = v.to_vector();
  const auto& vk = kernel.to_vector();
  std::vector<double> out(static_cast<std::size_t>(len), 0.0);
  for (int i = 0; i < len; ++i)
    for (int j = 0; j < k; ++j) {
      const int src = i + j - half;
      if (src >= 0 && src < len) out[i] += vk[j] * vv[src];
    }
  return Tensor::make_result({len}, std::move(out), {v, kernel}, [len, k, half](detail::Node& n) {
    const auto& vv = parent_value(n, 0);
    const auto& vk = parent_value(n, 1);
    auto* gv = parent_grad(n, 0);
    auto* gk = parent_grad(n, 1);
    for (int i = 0; i < len; ++i)
      for (int j = 0; j < k; ++j) {
        const int src = i + j - half;
        if (src < 0 || src >= len) continue;
        if (gv) (*gv)[src] += n.grad[i] * vk[j];
        if (gk) (*gk)[j] += n.grad[i] * vv[src];
      }
  });
}

Tensor avg_pool(const Tensor& x, int k) {
  expect_rank(x, 3, "avg_pool");
  expect(k >= 1, "avg_pool", "window must be positive");
  const int channels = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int oh = (h + k - 1) / k, ow = (w + k - 1) / k;
  const auto& v = x.to_vector();
  std::vector<double> out(static_cast<std::size_t>(channels) * oh * ow, 0.0);
  auto window = [=](int o, int extent) { return std::min(k, extent - o * k); };
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        const int oy = y / k, ox = xx / k;
        const double cells = static_cast<double>(window(oy, h) * window(ox, w));
        out[(static_cast<std::size_t>(c) * oh + oy) * ow + ox] +=
            v[(static_cast<std::size_t>(c) * h + y) * w + xx] / cells;
      }
  return Tensor::make_result({channels, oh, ow}, std::move(out), {x}, [=](detail::Node& n) {
    auto* g = parent_grad(n, 0);
    if (!g) return;
    for (int c = 0; c < channels; ++c)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          const int oy = y / k, ox = xx / k;
          const double cells = static_cast<double>(window(oy, h) * window(ox, w));
          (*g)[(static_cast<std::size_t>(c) * h + y) * w + xx] +=
              n.grad[(static_cast<std::size_t>(c) * oh + oy) * ow + ox] / cells;
        }
  });
}

namespace {

struct LerpTap {
  int lo, hi;
  double frac;
};

std::vector<LerpTap> lerp_taps(int in, int out) {
  std::vector<LerpTap> taps(static_cast<std::size_t>(out));
  const double ratio = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    int lo = static_cast<int>(src);
    if (lo > in - 1) lo = in - 1;
    const int hi = lo < in - 1 ? lo + 1 : lo;
    taps[o] = {lo, hi, src - lo};
  }
  return taps;
}

}  // namespace

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
  expect_rank(x, 3, "resize_bilinear");
  expect(out_h >= 1 && out_w >= 1, "resize_bilinear", "empty target size");
  const int channels = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h == out_h && w == out_w) return reshape(x, x.shape());
  auto ty = lerp_taps(h, out_h);
  auto tx = lerp_taps(w, out_w);
  const auto& v = x.to_vector();
  std::vector<double> out(static_cast<std::size_t>(channels) * out_h * out_w);
  for (int c = 0; c < channels; ++c) {
    const double* src = v.data() + static_cast<std::size_t>(c) * h * w;
    double* dst = out.data() + static_cast<std::size_t>(c) * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[oy];
      for (int ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[ox];
        const double top = src[a.lo * w + b.lo] * (1 - b.frac) + src[a.lo * w + b.hi] * b.frac;
        const double bottom = src[a.hi * w + b.lo] * (1 - b.frac) + src[a.hi * w + b.hi] * b.frac;
        dst[oy * out_w + ox] = top * (1 - a.frac) + bottom * a.frac;
      }
    }
  }
  return Tensor::make_result(
      {channels, out_h, out_w}, std::move(out), {x},
      [=, ty = std::move(ty), tx = std::move(tx)](detail::Node& n) {
        auto* g = parent_grad(n, 0);
        if (!g) return;
        for (int c = 0; c < channels; ++c) {
          double* dst = g->data() + static_cast<std::size_t>(c) * h * w;
          const double* go = n.grad.data() + static_cast<std::size_t>(c) * out_h * out_w;
          for (int oy = 0; oy < out_h; ++oy) {
            const auto& a = ty[oy];
            for (int ox = 0; ox < out_w; ++ox) {
              const auto& b = tx[ox];
              const double gv = go[oy * out_w + ox];
              dst[a.lo * w + b.lo] += gv * (1 - a.frac) * (1 - b.frac);
              dst[a.lo * w + b.hi] += gv * (1 - a.frac) * b.frac;
              dst[a.hi * w + b.lo] += gv * a.frac * (1 - b.frac);
              dst[a.hi * w + b.hi] += gv * a.frac * b.frac;
            }
          }
        }
      });
}

Tensor bce_with_logits(const Tensor& logits, std::span<const double> target) {
  expect(target.size() == logits.numel(), "bce_with_logits", "target size mismatch");
  const auto& z = logits.to_vector();
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    expect(target[i] == 0.0 || target[i] == 1.0, "bce_with_logits", "target is not binary");
    acc += std::max(z[i], 0.0) - z[i] * target[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  const double count = static_cast<double>(z.size());
  std::vector<double> t(target.begin(), target.end());
  return Tensor::make_result({1}, {acc / count}, {logits}, [t = std::move(t), count](detail::Node& n) {
    auto* g = parent_grad(n, 0);
    if (!g) return;
    const auto& z = parent_value(n, 0);
    for (std::size_t i = 0; i < z.size(); ++i)
      (*g)[i] += n.grad[0] * (stable_sigmoid(z[i]) - t[i]) / count;
  });
}

Tensor soft_iou_with_logits(const Tensor& logits, std::span<const double> target, double smooth) {
  expect(target.size() == logits.numel(), "soft_iou_with_logits", "target size mismatch");
  const auto& z = logits.to_vector();
  std::vector<double> p(z.size());
  double inter = 0.0, sum_p = 0.0, sum_g = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    expect(target[i] == 0.0 || target[i] == 1.0, "soft_iou_with_logits", "target is not binary");
    p[i] = stable_sigmoid(z[i]);
    inter += p[i] * target[i];
    sum_p += p[i];
    sum_g += target[i];
  }
  const double uni = sum_p + sum_g - inter;
  const double loss = 1.0 - (inter + smooth) / (uni + smooth);
  std::vector<double> t(target.begin(), target.end());
  return Tensor::make_result(
      {1}, {loss}, {logits},
      [t = std::move(t), p = std::move(p), inter, uni, smooth](detail::Node& n) {
        auto* g = parent_grad(n, 0);
        if (!g) return;
        const double a = inter + smooth, b = uni + smooth;
        for (std::size_t i = 0; i < p.size(); ++i) {
          // d/dp of -(I+s)/(U+s) with dI/dp = g, dU/dp = 1 - g
          const double dp = -(t[i] * b - a * (1.0 - t[i])) / (b * b);
          (*g)[i] += n.grad[0] * dp * p[i] * (1.0 - p[i]);
        }
      });
}

}  // namespace dafnet::ops
