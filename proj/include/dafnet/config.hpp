#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dafnet/data.hpp"
#include "dafnet/losses.hpp"
#include "dafnet/metrics.hpp"
#include "dafnet/model.hpp"

// Run configuration: a flat, typed `section.key = value` text file.
//
//   # comment
//   model.dcf_mode = full
//   optim.lr = 1e-05
//
// Unknown keys and malformed values are ConfigErrors naming the key.
// Serialization writes every key in a fixed order with shortest
// round-trip number formatting, so serialize -> parse -> serialize is
// byte-identical.
namespace dafnet::config {

struct ModelSection {
  std::string rgb_backbone = "res2net_like";
  std::string depth_backbone = "resnet_like";
  std::array<int, 4> stage_channels{16, 32, 64, 128};
  int blocks_per_stage = 1;
  int res2net_scale = 4;
  std::array<int, 4> patch_sizes{4, 2, 1, 1};
  int embed_dim = 32;
  int vit_depth = 1;
  int vit_heads = 2;
  int mlp_ratio = 2;
  int ca_reduction = 4;
  int sa_kernel = 7;
  int daw_reduction = 4;
  std::string dcf_mode = "full";
  int daw_source_stage = 0;
  std::string encoder_mode = "full";
  int decoder_width = 16;
  int eca_kernel = 3;
  bool use_rmfe = true;
  bool use_geca = true;
  bool use_fam = true;
  bool use_rgb_residual = true;
};

struct DataSection {
  std::string train_root = "data/fixture";
  std::string train_split = "train";
  std::string eval_root = "data/fixture";
  std::string eval_split = "test";
  int input_size = 352;
  bool augment = true;
  double flip_prob = 0.5;
  double crop_prob = 0.5;
  double crop_max = 0.03;
  std::size_t max_samples = 0;  // 0: whole split
};

struct OptimSection {
  double lr = 1e-5;
  int batch_size = 4;
  int epochs = 100;
  int max_steps = 0;  // 0: run all epochs
  int lr_decay_every = 50;
  double lr_decay_factor = 0.1;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::array<double, 3> lambda{1.0, 0.5, 0.25};
};

struct EvalSection {
  std::string e_variant = "mean";
};

struct RunConfig {
  ModelSection model;
  DataSection data;
  OptimSection optim;
  EvalSection eval;
  std::uint64_t seed = 42;
  std::string output_dir = "runs/default";

  // Checks enumerations and ranges; throws ConfigError.
  void validate() const;
};

std::string serialize(const RunConfig& config);
RunConfig parse(const std::string& text);
RunConfig load(const std::filesystem::path& path);
void save(const RunConfig& config, const std::filesystem::path& path);

// Applies one `key = value` override.
void set_value(RunConfig& config, const std::string& key, const std::string& value);
std::string get_value(const RunConfig& config, const std::string& key);
// All keys in serialization order.
std::vector<std::string> keys();

// First key (in serialization order) whose value differs among keys that
// determine the network; empty when architecture-compatible.
std::string first_architecture_difference(const RunConfig& a, const RunConfig& b);

ModelConfig to_model_config(const RunConfig& config);
data::AugmentOptions to_augment_options(const RunConfig& config);
losses::LossWeights to_loss_weights(const RunConfig& config);
metrics::MetricOptions to_metric_options(const RunConfig& config);

}  // namespace dafnet::config
