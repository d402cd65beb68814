#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dafnet/config.hpp"
#include "dafnet/tensor.hpp"

// Central finite-difference gradient checks.
namespace dafnet::gradcheck {

struct CheckOptions {
  double step = 1e-4;
  // Kink-free coordinates checked per tensor (all when the tensor is smaller).
  std::size_t max_coords = 24;
  std::uint64_t seed = 7;
  // Norm floor for the relative error of near-zero gradients.
  double floor = 1e-6;
  // Test hook: multiplies the analytic gradient, simulating a broken backward.
  double corrupt_scale = 1.0;
};

struct TensorError {
  std::string name;
  double relative = 0.0;
  std::size_t checked = 0;
  // Coordinates whose +/- step crossed a relu or max kink; finite
  // differences are meaningless there, so they are replaced by others.
  std::size_t skipped = 0;
};

// For each tensor: ||analytic - numeric|| / max(||analytic|| + ||numeric||, floor)
// over the sampled coordinates (infinite when no coordinate is kink-free).
// `loss` must rebuild the graph on each call.
std::vector<TensorError> check(const std::function<Tensor()>& loss,
                               const std::vector<std::pair<std::string, Tensor>>& inputs,
                               const CheckOptions& options = {});

double worst(const std::vector<TensorError>& errors);

struct BlockReport {
  std::string block;
  double worst = 0.0;
  double tolerance = 0.0;
  std::size_t checked = 0, skipped = 0;
  bool passed() const { return worst <= tolerance; }
};

// `base` with the spatial size and stage widths shrunk (16, {4,8,16,32});
// modes, flags and hyper-parameters are kept.
config::RunConfig miniature(const config::RunConfig& base);

// Module-level checks on miniature shapes: attention, dcf, decoder, losses
// (1e-4) and the end-to-end encoder (1e-3), built from miniature(base).
// `corrupt_block` names a block whose analytic gradient is deliberately scaled.
std::vector<BlockReport> run_blocks(const config::RunConfig& base, const std::string& corrupt_block = "");

std::vector<std::string> block_names();

}  // namespace dafnet::gradcheck
