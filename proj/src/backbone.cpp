#include "rifenet/backbone.hpp"

#include <optional>

#include "rifenet/errors.hpp"
#include "rifenet/seeding.hpp"

namespace rifenet {

TinyBackbone::TinyBackbone(nn::ParamStore& store, int input_size, std::uint64_t seed, bool frozen)
    : input_size_(input_size), frozen_(frozen) {
  if (input_size < 16) throw ConfigError("tiny backbone needs an input of at least 16 pixels");
  nn::Rng rng(derive_seed(seed, 0xbb));
  std::size_t in = 3;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t stride = i < 3 ? 2 : 1;
    const std::size_t dilation = i < 3 ? 1 : 2;
    stages_[i] = nn::Conv3x3(store, "backbone.stage" + std::to_string(i + 1), in, kWidths[i], stride, dilation, rng,
                             !frozen);
    in = kWidths[i];
  }
}

BackboneBundle TinyBackbone::extract(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != static_cast<std::size_t>(input_size_) ||
      image.dim(2) != static_cast<std::size_t>(input_size_))
    throw ContractError("backbone input " + shape_str(image.shape) + " does not match configured size " +
                        std::to_string(input_size_));
  forwards_->fetch_add(1);
  std::optional<ag::NoGradGuard> guard;
  if (frozen_) guard.emplace();
  BackboneBundle b;
  ag::Var x = ag::constant(image);
  for (std::size_t i = 0; i < 4; ++i) {
    ag::Var y = stages_[i](x);
    const Shape s = y.shape();
    y = ag::reshape(ag::layer_norm_rows(ag::reshape(y, {s[0], s[1] * s[2]}), nullptr, nullptr), s);
    x = ag::relu(y);
    b.levels[i] = FeatureMap{x, static_cast<int>(i + 1), kStrides[i]};
  }
  return b;
}

FeatureMerge::FeatureMerge(nn::ParamStore& store, std::size_t merged_channels, nn::Rng& rng, int level_a, int level_b)
    : level_a_(level_a), level_b_(level_b) {
  const std::size_t in = TinyBackbone::kWidths[static_cast<std::size_t>(level_a - 1)] +
                         TinyBackbone::kWidths[static_cast<std::size_t>(level_b - 1)];
  conv_ = nn::Conv1x1(store, "merge.conv", in, merged_channels, rng);
}

FeatureMap FeatureMerge::operator()(const BackboneBundle& bundle) const {
  return (*this)(bundle.level(level_a_), bundle.level(level_b_));
}

FeatureMap FeatureMerge::operator()(const FeatureMap& a, const FeatureMap& b) const {
  if (a.channels() + b.channels() != conv_.in_channels())
    throw ContractError("merge: expected " + std::to_string(conv_.in_channels()) + " input channels in total");
  const FeatureMap& fine = a.height() >= b.height() ? a : b;
  const FeatureMap& coarse = a.height() >= b.height() ? b : a;
  ag::Var resized = coarse.data;
  if (coarse.height() != fine.height() || coarse.width() != fine.width())
    resized = ag::spatial(coarse.data,
                          ag::SpatialMap::bilinear(coarse.height(), coarse.width(), fine.height(), fine.width()));
  // Channel order follows the level order, not the resolution order.
  const std::array<ag::Var, 2> parts = &fine == &a ? std::array<ag::Var, 2>{fine.data, resized}
                                                    : std::array<ag::Var, 2>{resized, fine.data};
  ag::Var merged = ag::relu(conv_(ag::concat_rows(parts)));
  return FeatureMap{merged, 0, fine.stride};
}

}  // namespace rifenet
