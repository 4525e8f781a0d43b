#include "rifenet/losses.hpp"

#include "rifenet/errors.hpp"

namespace rifenet {

ag::Var foreground_probability(const ag::Var& logits) {
  const Shape& s = logits.shape();
  if (s.size() != 3 || s[0] != 2) throw ContractError("logits must be {2, H, W}");
  const ag::Var flat = ag::reshape(logits, {2, s[1] * s[2]});
  const ag::Var diff = ag::sub(ag::slice_rows(flat, 1, 2), ag::slice_rows(flat, 0, 1));
  return ag::reshape(ag::sigmoid(diff), {s[1] * s[2]});
}

ag::Var upsample_logits(const ag::Var& logits, std::size_t height, std::size_t width) {
  const Shape& s = logits.shape();
  if (s[1] == height && s[2] == width) return logits;
  return ag::spatial(logits, ag::SpatialMap::bilinear(s[1], s[2], height, width, false));
}

ag::Var dice(const ag::Var& probability, const Mask& target, std::span<const double> weights) {
  if (probability.size() != target.data.size())
    throw ContractError("dice: prediction has " + std::to_string(probability.size()) + " values, target " +
                        std::to_string(target.data.size()));
  return ag::dice_loss(probability, mask_tensor(target), weights, kDiceSmooth);
}

double final_loss(double main, double unlabeled, double beta) { return main + beta * unlabeled; }

ag::Var final_loss(const ag::Var& main, const ag::Var& unlabeled, double beta) {
  return ag::add(main, ag::scale(unlabeled, beta));
}

MainLoss main_loss(const ag::Var& query_logits, const Mask& truth, const ag::Var* aux_logits, double aux_weight) {
  MainLoss out;
  out.query = dice(foreground_probability(query_logits), truth);
  out.total = out.query;
  if (aux_logits) {
    out.aux = dice(foreground_probability(*aux_logits), truth);
    out.total = ag::add(out.query, ag::scale(out.aux, aux_weight));
  }
  return out;
}

}  // namespace rifenet
