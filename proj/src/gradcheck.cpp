#include "dafnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "dafnet/attention.hpp"
#include "dafnet/dcf.hpp"
#include "dafnet/decoder.hpp"
#include "dafnet/encoder.hpp"
#include "dafnet/errors.hpp"
#include "dafnet/losses.hpp"
#include "dafnet/ops.hpp"

namespace dafnet::gradcheck {

std::vector<TensorError> check(const std::function<Tensor()>& loss,
                               const std::vector<std::pair<std::string, Tensor>>& inputs,
                               const CheckOptions& options) {
  for (const auto& [name, t] : inputs) {
    if (!t.requires_grad()) throw ContractViolation("gradcheck: input '" + name + "' does not require grad");
    Tensor(t).zero_grad();
  }
  backward(loss());

  Rng rng(options.seed);
  std::vector<std::uint64_t> base_pattern;
  {
    NoGradGuard guard;
    ops::KinkRecorder recorder;
    loss();
    base_pattern = recorder.pattern();
  }
  auto evaluate = [&](bool& smooth) {
    NoGradGuard guard;
    ops::KinkRecorder recorder;
    const double value = loss().item();
    smooth = smooth && recorder.pattern() == base_pattern;
    return value;
  };

  std::vector<TensorError> out;
  for (const auto& [name, input] : inputs) {
    Tensor t = input;
    const auto grad = t.grad();
    std::vector<std::size_t> coords(t.numel());
    std::iota(coords.begin(), coords.end(), 0);
    std::shuffle(coords.begin(), coords.end(), rng);
    TensorError err{name};
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i : coords) {
      if (err.checked == options.max_coords) break;
      auto values = t.mutable_values();
      const double saved = values[i];
      bool smooth = true;
      values[i] = saved + options.step;
      const double plus = evaluate(smooth);
      values[i] = saved - options.step;
      const double minus = evaluate(smooth);
      values[i] = saved;
      if (!smooth) {
        ++err.skipped;
        continue;
      }
      const double analytic = (grad.empty() ? 0.0 : grad[i]) * options.corrupt_scale;
      const double numeric = (plus - minus) / (2.0 * options.step);
      diff += (analytic - numeric) * (analytic - numeric);
      na += analytic * analytic;
      nn += numeric * numeric;
      ++err.checked;
    }
    err.relative = err.checked == 0 ? std::numeric_limits<double>::infinity()
                                    : std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nn), options.floor);
    out.push_back(err);
  }
  return out;
}

double worst(const std::vector<TensorError>& errors) {
  double w = 0.0;
  for (const auto& e : errors) w = std::max(w, e.relative);
  return w;
}

namespace {

Tensor random_input(Shape shape, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = n(rng);
  return Tensor::parameter(std::move(shape), std::move(v));
}

std::vector<double> random_weights(std::size_t n, Rng& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> w(n);
  for (auto& x : w) x = d(rng);
  return w;
}

// Fixed random projection of a tensor to a scalar.
struct Projector {
  Rng rng{99};
  std::vector<std::vector<double>> weights;
  std::size_t next = 0;

  Tensor operator()(const Tensor& x) {
    if (next == weights.size()) weights.push_back(random_weights(x.numel(), rng));
    return ops::weighted_sum(x, weights[next++]);
  }
  void reset() { next = 0; }
};

std::vector<std::pair<std::string, Tensor>> with_params(const ParameterSet& params,
                                                         std::vector<std::pair<std::string, Tensor>> extra) {
  for (const auto& e : params.entries()) extra.emplace_back(e.name, e.tensor);
  return extra;
}

// Moves every parameter off its initial value so zero biases do not park
// ReLU inputs exactly on the kink.
void jitter(const ParameterSet& params, Rng& rng) {
  std::normal_distribution<double> n(0.0, 0.05);
  for (const auto& e : params.entries()) {
    Tensor t = e.tensor;
    for (double& v : t.mutable_values()) v += n(rng);
  }
}

CheckOptions options_for(const std::string& block, const std::string& corrupt, std::size_t coords) {
  CheckOptions o;
  o.max_coords = coords;
  if (block == corrupt) o.corrupt_scale = 1.5;
  return o;
}

bool every_tensor_checked(const std::vector<TensorError>& errors) {
  return std::all_of(errors.begin(), errors.end(), [](const TensorError& e) { return e.checked > 0; });
}

// Evaluates a block at a random point; a point where some tensor has no
// kink-free coordinate cannot be checked and is redrawn (never on error size).
BlockReport run_block(const std::string& block, double tolerance, std::uint64_t seed,
                      const std::function<std::vector<TensorError>(Rng&)>& body) {
  constexpr int kAttempts = 3;
  std::vector<TensorError> errors;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    Rng rng(seed + 1000003ull * static_cast<std::uint64_t>(attempt));
    errors = body(rng);
    if (every_tensor_checked(errors)) break;
  }
  BlockReport r{block, worst(errors), tolerance};
  for (const auto& e : errors) {
    r.checked += e.checked;
    r.skipped += e.skipped;
  }
  return r;
}

}  // namespace

config::RunConfig miniature(const config::RunConfig& base) {
  config::RunConfig c = base;
  c.data.input_size = 16;
  c.model.stage_channels = {4, 8, 16, 32};
  return c;
}

std::vector<std::string> block_names() { return {"attention", "dcf", "decoder", "losses", "encoder"}; }

std::vector<BlockReport> run_blocks(const config::RunConfig& base, const std::string& corrupt_block) {
  if (!corrupt_block.empty()) {
    const auto names = block_names();
    if (std::find(names.begin(), names.end(), corrupt_block) == names.end()) {
      throw ConfigError("unknown gradcheck block '" + corrupt_block + "'");
    }
  }
  const ModelConfig model_config = config::to_model_config(miniature(base));
  model_config.validate();
  const auto& hyper = model_config.encoder.hyper;
  std::vector<BlockReport> reports;
  std::uint64_t block_seed = base.seed;

  reports.push_back(run_block("attention", 1e-4, block_seed++, [&](Rng& rng) {
    ParameterSet params;
    const int c = 8;
    auto ca = attention::ChannelAttentionParams::create(params, "ca", c, hyper.ca_reduction, rng);
    auto sa = attention::SpatialAttentionParams::create(params, "sa", hyper.sa_kernel, rng);
    auto ec = attention::EcaParams::create(params, "eca", model_config.decoder.eca_kernel, rng);
    Tensor x = random_input({c, 6, 5}, rng);
    jitter(params, rng);
    Projector proj;
    auto loss = [&] {
      proj.reset();
      return ops::add_n({proj(attention::channel_attention(x, ca)),
                         proj(attention::spatial_attention(x, sa)), proj(attention::eca(x, ec))});
    };
    return check(loss, with_params(params, {{"x", x}}), options_for("attention", corrupt_block, 24));
  }));

  reports.push_back(run_block("dcf", 1e-4, block_seed++, [&](Rng& rng) {
    ParameterSet params;
    const int c = 8;
    auto p = dcf::DcfParams::create(params, "dcf", c, c, model_config.encoder.dcf_mode, hyper, rng);
    Tensor rgb = random_input({c, 6, 6}, rng), depth = random_input({c, 6, 6}, rng);
    jitter(params, rng);
    Projector proj;
    auto loss = [&] {
      proj.reset();
      auto out = dcf::dcf_forward({rgb, depth, 1}, p, model_config.encoder.dcf_mode);
      return ops::add_n({proj(out.fused), proj(out.next_depth), proj(out.q)});
    };
    return check(loss, with_params(params, {{"rgb", rgb}, {"depth", depth}}),
                 options_for("dcf", corrupt_block, 24));
  }));

  reports.push_back(run_block("decoder", 1e-4, block_seed++, [&](Rng& rng) {
    ParameterSet params;
    decoder::DecoderConfig dc = model_config.decoder;
    dc.width = 4;
    const std::array<int, 3> ch{6, 8, 10};
    decoder::FadDecoder dec(params, "decoder", dc, ch, ch, rng);
    const std::array<Tensor, 3> fused{random_input({6, 8, 8}, rng), random_input({8, 4, 4}, rng),
                                      random_input({10, 2, 2}, rng)};
    const std::array<Tensor, 3> rgb{random_input({6, 8, 8}, rng), random_input({8, 4, 4}, rng),
                                    random_input({10, 2, 2}, rng)};
    jitter(params, rng);
    Projector proj;
    auto loss = [&] {
      proj.reset();
      auto b = dec.forward(fused, rgb, 16);
      return ops::add_n({proj(b.logits[0]), proj(b.logits[1]), proj(b.logits[2])});
    };
    std::vector<std::pair<std::string, Tensor>> inputs;
    for (int k = 0; k < 3; ++k) {
      inputs.emplace_back("fused" + std::to_string(k + 1), fused[k]);
      inputs.emplace_back("rgb" + std::to_string(k + 1), rgb[k]);
    }
    return check(loss, with_params(params, inputs), options_for("decoder", corrupt_block, 24));
  }));

  reports.push_back(run_block("losses", 1e-4, block_seed++, [&](Rng& rng) {
    decoder::PredictionBundle bundle;
    std::vector<std::pair<std::string, Tensor>> inputs;
    for (int k = 0; k < 3; ++k) {
      bundle.logits[k] = random_input({1, 6, 6}, rng, 2.0);
      inputs.emplace_back("logits" + std::to_string(k + 1), bundle.logits[k]);
    }
    std::vector<double> target(36);
    std::bernoulli_distribution coin(0.4);
    for (auto& t : target) t = coin(rng) ? 1.0 : 0.0;
    const auto weights = config::to_loss_weights(base);
    auto loss = [&] { return losses::total_loss(bundle, target, weights).total; };
    return check(loss, inputs, options_for("losses", corrupt_block, 36));
  }));

  reports.push_back(run_block("encoder", 1e-3, block_seed++, [&](Rng& rng) {
    ParameterSet params;
    Rng model_rng(base.seed);
    encoder::TridentEncoder enc(params, "encoder", model_config.encoder, model_rng);
    const int s = model_config.encoder.input_size;
    Tensor rgb = random_input({3, s, s}, rng), depth = random_input({1, s, s}, rng, 0.5);
    jitter(params, rng);
    Projector proj;
    auto loss = [&] {
      proj.reset();
      auto out = enc.encode(rgb, depth);
      return ops::add_n({proj(out.fused[0]), proj(out.fused[1]), proj(out.fused[2])});
    };
    return check(loss, with_params(params, {{"rgb", rgb}, {"depth", depth}}),
                 options_for("encoder", corrupt_block, 4));
  }));
  return reports;
}

}  // namespace dafnet::gradcheck
