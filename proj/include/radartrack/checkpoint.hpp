#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "radartrack/mlcrnn.hpp"

namespace radartrack::checkpoint {

/// Extra provenance stored next to the weights.
struct CheckpointInfo {
  std::uint64_t seed = 0;
  std::string loss;          // "ml" or "mse"
  std::string dataset_hash;
  std::string train_config_hash;
  int epochs = 0;
};

/// Writes `dir/meta.json` and `dir/params.bin`. The blob is the parameter
/// tensors in MlCrnnModel order, each as little-endian f32 values.
void save(const std::filesystem::path& dir, const mlcrnn::MlCrnnModel<float>& model,
          const CheckpointInfo& info);

struct Loaded {
  mlcrnn::MlCrnnModel<float> model;
  CheckpointInfo info;
};

/// Throws InvalidSpec when the stored architecture hash or blob size does not
/// match.
Loaded load(const std::filesystem::path& dir);

/// FNV-1a over params.bin.
std::string weights_hash(const std::filesystem::path& dir);

}  // namespace radartrack::checkpoint
