#pragma once
// Checkpoint container.
//
// Layout:
//   line 1   "rifenet-checkpoint 1"
//   line 2   manifest as one JSON object
//   rest     little-endian float64 payload; each tensor entry in the manifest
//            names its offset and element count.
//
// The manifest holds the format version, backbone id, C_merged, grid size m,
// the config hash and text, the iteration counter, and the parameter and
// optimizer-state tensor tables.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rifenet/config.hpp"
#include "rifenet/nn.hpp"

namespace rifenet {

inline constexpr int kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct CheckpointManifest {
  int format_version = kCheckpointVersion;
  std::string backbone;
  std::size_t merged_channels = 0;
  std::size_t grid = 0;
  std::string config_hash;
  int iteration = 0;
};

struct Checkpoint {
  CheckpointManifest manifest;
  RunConfig config;
  std::vector<NamedTensor> params;
  std::vector<NamedTensor> optimizer;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<NamedTensor> snapshot(const nn::ParamStore& store);
// Copies values by name; every parameter must be present with its shape.
void restore(nn::ParamStore& store, const std::vector<NamedTensor>& params);

// Throws CheckpointError when the manifest disagrees with the config.
void check_compatible(const CheckpointManifest& manifest, const RunConfig& cfg);

}  // namespace rifenet
