#pragma once
// Run configuration: a flat "key = value" text file with dotted sections.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "rifenet/model.hpp"

namespace rifenet {

inline constexpr int kConfigVersion = 1;

struct OptimizerConfig {
  std::string method = "sgd";  // sgd | adamw
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::string schedule = "poly";  // poly | constant
  double power = 0.9;
  int warmup = 0;  // linear warm-up iterations
  int iterations = 500;
  int accumulate = 1;  // episodes per optimizer step
  double clip_norm = 0.0;  // global gradient-norm clip, 0 = off
};

struct RunConfig {
  std::string dataset = "synthetic";
  std::string data_root;  // empty: generate the synthetic set in memory
  int synthetic_images = 200;
  std::uint64_t synthetic_seed = 0;
  int fold = 0;
  int shots = 1;
  bool class_consistent_unlabeled = true;
  bool augment_labeled = true;
  ModelConfig model;
  OptimizerConfig optim;
  std::uint64_t seed = 0;
  std::string log_path;         // JSON-lines; empty disables
  std::string checkpoint_path;  // empty disables
  int checkpoint_every = 0;     // 0: only at the end
  int val_every = 0;            // 0: no periodic validation
  int val_episodes = 20;
  int eval_episodes = 100;
};

// Canonical text: every key in a fixed order, one per line.
std::string serialize(const RunConfig& cfg);
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& cfg);

// "key=value"; throws ConfigError for unknown keys or bad values.
void apply_override(RunConfig& cfg, std::string_view assignment);
void set_value(RunConfig& cfg, std::string_view key, std::string_view value);
std::vector<std::string> config_keys();

// Range checks; throws ConfigError naming the offending key.
void validate(const RunConfig& cfg);

// FNV-1a over the canonical serialisation.
std::uint64_t config_hash(const RunConfig& cfg);
std::string hash_hex(std::uint64_t h);

}  // namespace rifenet
