#pragma once
// Prototype interaction, the residual classification head and mask decoding.

#include "rifenet/autograd.hpp"
#include "rifenet/image.hpp"
#include "rifenet/nn.hpp"

namespace rifenet {

// ReLU(Conv1x1([expand(P_s) | expand(P_q) | F | prior])) back to C_merged.
class PrototypeInteraction {
 public:
  PrototypeInteraction() = default;
  PrototypeInteraction(nn::ParamStore& store, std::size_t merged_channels, std::size_t local_channels, nn::Rng& rng);

  // global {Cm}; local {C', m, m} or undefined (treated as zeros); features
  // {Cm, H, W}; prior {H, W} or {H*W}.
  ag::Var operator()(const ag::Var& global, const ag::Var& local, const ag::Var& features, const Tensor& prior) const;

  std::size_t input_channels() const { return conv_.in_channels(); }
  const nn::Conv1x1& conv() const { return conv_; }

 private:
  std::size_t merged_ = 0, local_ = 0;
  nn::Conv1x1 conv_;
};

// F + ReLU(Conv3x3(F)), then a 1x1 map to two (background, foreground) logits.
class ClassifierHead {
 public:
  ClassifierHead() = default;
  ClassifierHead(nn::ParamStore& store, const std::string& name, std::size_t channels, nn::Rng& rng);

  ag::Var operator()(const ag::Var& features) const;

 private:
  nn::Conv3x3 refine_;
  nn::Conv1x1 out_;
};

// Foreground where the foreground logit is strictly larger; ties go to
// background.
Mask logits_to_mask(const Tensor& logits);

}  // namespace rifenet
