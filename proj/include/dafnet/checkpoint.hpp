#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dafnet/config.hpp"
#include "dafnet/model.hpp"

// Binary checkpoint: magic, version, embedded run config, training step and
// every named parameter tensor as little-endian float64.
namespace dafnet::checkpoint {

inline constexpr char kMagic[8] = {'D', 'A', 'F', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kVersion = 1;

struct Metadata {
  config::RunConfig config;
  std::uint64_t step = 0;
};

void save(const std::filesystem::path& path, const DafNet& model, const Metadata& meta);

// Reads the header and embedded config only.
Metadata read_metadata(const std::filesystem::path& path);

// Copies stored tensors into `model`. Names and shapes must match exactly;
// the first missing, unexpected or mis-shaped key is a ConfigError.
void load_into(const std::filesystem::path& path, DafNet& model);

// Builds the model from the embedded config (ignoring its seed) and loads it.
DafNet load_model(const std::filesystem::path& path, Metadata* meta = nullptr);

}  // namespace dafnet::checkpoint
