#pragma once
// Frozen feature extractor and the shared mid-level feature merge.

#include <array>
#include <atomic>
#include <cstdint>

#include "rifenet/autograd.hpp"
#include "rifenet/nn.hpp"

namespace rifenet {

struct FeatureMap {
  ag::Var data;  // {C, H, W}
  int level = 0;
  int stride = 1;

  std::size_t channels() const { return data.shape()[0]; }
  std::size_t height() const { return data.shape()[1]; }
  std::size_t width() const { return data.shape()[2]; }
};

struct BackboneBundle {
  std::array<FeatureMap, 4> levels;  // levels 1..4 at index 0..3

  const FeatureMap& level(int l) const { return levels.at(static_cast<std::size_t>(l - 1)); }
  // Stage used for appearance guidance of local prototypes.
  const FeatureMap& low() const { return levels[0]; }
  // Stage used for the high-level prior mask.
  const FeatureMap& high() const { return levels[3]; }
};

// Four (conv3x3, instance norm, ReLU) stages with widths 32/64/128/128 and
// strides 2/4/8/8; the last stage is dilated instead of strided.
class TinyBackbone {
 public:
  static constexpr std::array<std::size_t, 4> kWidths{32, 64, 128, 128};
  static constexpr std::array<int, 4> kStrides{2, 4, 8, 8};

  TinyBackbone() = default;
  TinyBackbone(nn::ParamStore& store, int input_size, std::uint64_t seed, bool frozen);

  // image is a normalised {3, S, S} tensor with S == input_size.
  BackboneBundle extract(const Tensor& image) const;

  bool frozen() const { return frozen_; }
  int input_size() const { return input_size_; }
  std::uint64_t forward_count() const { return forwards_->load(); }
  void reset_forward_count() { forwards_->store(0); }

 private:
  int input_size_ = 0;
  bool frozen_ = true;
  std::array<nn::Conv3x3, 4> stages_;
  std::shared_ptr<std::atomic<std::uint64_t>> forwards_ = std::make_shared<std::atomic<std::uint64_t>>(0);
};

// ReLU(Conv1x1(concat(level a, level b))) with the coarser level resized to
// the finer one. One instance serves support, query and unlabeled inputs.
class FeatureMerge {
 public:
  FeatureMerge() = default;
  FeatureMerge(nn::ParamStore& store, std::size_t merged_channels, nn::Rng& rng, int level_a = 2, int level_b = 3);

  FeatureMap operator()(const BackboneBundle& bundle) const;
  FeatureMap operator()(const FeatureMap& a, const FeatureMap& b) const;

  const nn::Conv1x1& conv() const { return conv_; }

 private:
  int level_a_ = 2, level_b_ = 3;
  nn::Conv1x1 conv_;
};

}  // namespace rifenet
