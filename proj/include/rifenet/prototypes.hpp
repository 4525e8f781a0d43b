#pragma once
// Global support prototypes, prior masks and local query prototypes.

#include <cstddef>
#include <vector>

#include "rifenet/autograd.hpp"
#include "rifenet/image.hpp"
#include "rifenet/nn.hpp"

namespace rifenet {

// Foreground-weighted mean of {C, H, W} features -> {C}. The mask is
// nearest-resized to H x W first; an empty result throws DegenerateMaskError.
ag::Var masked_average_pool(const ag::Var& features, const Mask& mask);

inline constexpr double kPriorEps = 1e-7;

// For every query location: max cosine similarity to any support foreground
// location. Returns {Hq, Wq} before normalisation.
Tensor prior_scores(const Tensor& query_features, const Tensor& support_features, const Mask& support_mask);
// Min-max normalised to [0, 1]: (s - min) / (max - min + eps). A constant map
// becomes all zeros.
Tensor normalize_prior(const Tensor& scores, double eps = kPriorEps);
Tensor prior_mask(const Tensor& query_features, const Tensor& support_features, const Mask& support_mask,
                  double eps = kPriorEps);

struct GridCell {
  std::size_t y0, y1, x0, x1;  // half-open source window
};

// Adaptive-pooling windows of an m x m grid over an H x W plane.
std::vector<GridCell> grid_geometry(std::size_t height, std::size_t width, std::size_t m);

struct LocalPrototypeGrid {
  ag::Var grid;  // {C', m, m}
  std::size_t m = 0;
  std::vector<GridCell> geometry;

  std::size_t count() const { return m * m; }
};

// features * guidance (broadcast over channels), average-pooled to m x m.
ag::Var guided_local_pool(const ag::Var& features, const Tensor& guidance, std::size_t m);

// Squeeze-and-excitation gates over the channels of a prototype grid.
class ChannelAttention {
 public:
  ChannelAttention() = default;
  ChannelAttention(nn::ParamStore& store, const std::string& name, std::size_t channels, std::size_t ratio,
                   nn::Rng& rng);

  // {C} gates in (0, 1).
  ag::Var gates(const ag::Var& grid) const;
  ag::Var operator()(const ag::Var& grid) const;

  ag::Var& fc2_weight() { return w2_; }
  ag::Var& fc2_bias() { return b2_; }

 private:
  ag::Var w1_, b1_, w2_, b2_;
};

// Guided pooling, 1x1 channel squeeze to C', then channel attention.
class LocalPrototypeGenerator {
 public:
  LocalPrototypeGenerator() = default;
  LocalPrototypeGenerator(nn::ParamStore& store, std::size_t in_channels, std::size_t out_channels,
                          std::size_t se_ratio, nn::Rng& rng);

  LocalPrototypeGrid operator()(const ag::Var& features, const Tensor& guidance, std::size_t m,
                                bool channel_attention = true) const;

  const nn::Conv1x1& squeeze() const { return squeeze_; }
  ChannelAttention& attention() { return attention_; }
  std::size_t out_channels() const { return squeeze_.out_channels(); }

 private:
  nn::Conv1x1 squeeze_;
  ChannelAttention attention_;
};

// {C} -> {C, H, W}
ag::Var expand_global(const ag::Var& prototype, std::size_t height, std::size_t width);
// {C', m, m} -> {C', H, W}; each cell tiles the region it was pooled from.
ag::Var expand_local(const ag::Var& grid, std::size_t height, std::size_t width);

}  // namespace rifenet
