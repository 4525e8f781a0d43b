#include "rifenet/interaction.hpp"

#include "rifenet/errors.hpp"
#include "rifenet/prototypes.hpp"

namespace rifenet {

PrototypeInteraction::PrototypeInteraction(nn::ParamStore& store, std::size_t merged_channels,
                                           std::size_t local_channels, nn::Rng& rng)
    : merged_(merged_channels), local_(local_channels) {
  conv_ = nn::Conv1x1(store, "interact.conv", 2 * merged_channels + local_channels + 1, merged_channels, rng);
}

ag::Var PrototypeInteraction::operator()(const ag::Var& global, const ag::Var& local, const ag::Var& features,
                                         const Tensor& prior) const {
  const Shape& s = features.shape();
  if (s.size() != 3 || s[0] != merged_) throw ContractError("interact: features must be {" + std::to_string(merged_) + ", H, W}");
  const std::size_t h = s[1], w = s[2];
  if (global.size() != merged_) throw ContractError("interact: global prototype size mismatch");
  if (prior.size() != h * w) throw ContractError("interact: prior size differs from feature plane");
  ag::Var local_map = local.defined() ? expand_local(local, h, w) : ag::constant(Tensor({local_, h, w}, 0.0));
  if (local_map.shape()[0] != local_) throw ContractError("interact: local prototype channel mismatch");
  const std::array<ag::Var, 4> parts{expand_global(global, h, w), local_map, features,
                                     ag::constant(Tensor({1, h, w}, prior.data))};
  return ag::relu(conv_(ag::concat_rows(parts)));
}

ClassifierHead::ClassifierHead(nn::ParamStore& store, const std::string& name, std::size_t channels, nn::Rng& rng)
    : refine_(store, name + ".refine", channels, channels, 1, 1, rng), out_(store, name + ".out", channels, 2, rng) {}

ag::Var ClassifierHead::operator()(const ag::Var& features) const {
  return out_(ag::add(features, ag::relu(refine_(features))));
}

Mask logits_to_mask(const Tensor& logits) {
  if (logits.rank() != 3 || logits.dim(0) != 2) throw ContractError("logits must be {2, H, W}");
  const std::size_t n = logits.dim(1) * logits.dim(2);
  Mask m(static_cast<int>(logits.dim(1)), static_cast<int>(logits.dim(2)), 0);
  for (std::size_t i = 0; i < n; ++i) m.data[i] = logits.data[n + i] > logits.data[i] ? 1 : 0;
  return m;
}

}  // namespace rifenet
