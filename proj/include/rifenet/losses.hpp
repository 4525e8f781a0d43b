#pragma once
// Dice objectives and the loss composition used for training.

#include <span>

#include "rifenet/autograd.hpp"
#include "rifenet/image.hpp"

namespace rifenet {

inline constexpr double kDiceSmooth = 1.0;

// softmax(logits)[1] = sigmoid(l1 - l0) for {2, H, W} logits -> {H*W}.
ag::Var foreground_probability(const ag::Var& logits);
// Pixel-centre bilinear resize of {2, h, w} logits to {2, height, width}.
ag::Var upsample_logits(const ag::Var& logits, std::size_t height, std::size_t width);

// Dice on a probability raster and a binary mask of the same size.
ag::Var dice(const ag::Var& probability, const Mask& target, std::span<const double> weights = {});

struct LossReport {
  double main = 0.0;
  double aux = 0.0;
  double unlabeled = 0.0;
  double final = 0.0;
  double beta = 0.0;
};

double final_loss(double main, double unlabeled, double beta);
ag::Var final_loss(const ag::Var& main, const ag::Var& unlabeled, double beta);

struct MainLoss {
  ag::Var total;  // dice(query) + aux_weight * dice(aux)
  ag::Var query;
  ag::Var aux;    // undefined when the aux head is off
};

// Both logit maps must already be at the truth resolution.
MainLoss main_loss(const ag::Var& query_logits, const Mask& truth, const ag::Var* aux_logits, double aux_weight = 1.0);

}  // namespace rifenet
