#include "rifenet/attention.hpp"

#include <cmath>
#include <iostream>
#include <limits>

#include "rifenet/errors.hpp"

namespace rifenet {

std::vector<double> cycle_consistency_bias(const Tensor& scores, std::span<const std::uint8_t> labels,
                                           bool& all_masked) {
  const std::size_t nq = scores.dim(0), ns = scores.dim(1);
  if (labels.size() != ns) throw ContractError("cycle consistency: one label per support token required");
  // Best support token for each query token.
  std::vector<std::size_t> q2s(nq);
  for (std::size_t q = 0; q < nq; ++q) {
    const double* row = scores.ptr() + q * ns;
    std::size_t best = 0;
    for (std::size_t s = 1; s < ns; ++s)
      if (row[s] > row[best]) best = s;
    q2s[q] = best;
  }
  std::vector<double> bias(ns, 0.0);
  std::size_t masked = 0;
  for (std::size_t s = 0; s < ns; ++s) {
    std::size_t best_q = 0;
    for (std::size_t q = 1; q < nq; ++q)
      if (scores.data[q * ns + s] > scores.data[best_q * ns + s]) best_q = q;
    if (labels[q2s[best_q]] != labels[s]) {
      bias[s] = -std::numeric_limits<double>::infinity();
      ++masked;
    }
  }
  all_masked = masked == ns;
  if (all_masked) std::fill(bias.begin(), bias.end(), 0.0);
  return bias;
}

MultiHeadAttention::MultiHeadAttention(nn::ParamStore& store, const std::string& name, std::size_t dim,
                                       std::size_t heads, nn::Rng& rng)
    : dim_(dim), heads_(heads) {
  if (heads == 0 || dim % heads != 0)
    throw ConfigError("attention: embedding size " + std::to_string(dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  q_ = nn::Linear(store, name + ".q", dim, dim, rng);
  k_ = nn::Linear(store, name + ".k", dim, dim, rng);
  v_ = nn::Linear(store, name + ".v", dim, dim, rng);
  o_ = nn::Linear(store, name + ".out", dim, dim, rng);
}

ag::Var MultiHeadAttention::operator()(const ag::Var& queries, const ag::Var& keys,
                                       std::span<const std::uint8_t> key_labels, AttentionTrace* trace,
                                       bool cross) const {
  const ag::Var q = q_(queries), k = k_(keys), v = v_(keys);
  const std::size_t hd = dim_ / heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<ag::Var> outs;
  AttentionTrace::Call call;
  call.cross = cross;
  for (std::size_t h = 0; h < heads_; ++h) {
    const ag::Var qh = ag::slice_cols(q, h * hd, (h + 1) * hd);
    const ag::Var kh = ag::slice_cols(k, h * hd, (h + 1) * hd);
    const ag::Var vh = ag::slice_cols(v, h * hd, (h + 1) * hd);
    const ag::Var scores = ag::scale(ag::matmul(qh, kh, false, true), inv_sqrt);
    std::vector<double> bias;
    if (!key_labels.empty()) {
      bool all_masked = false;
      bias = cycle_consistency_bias(scores.value(), key_labels, all_masked);
      if (all_masked) {
        call.fallback = true;
        std::cerr << "warning: cycle-consistency masked every support token; using unmasked attention\n";
      }
    }
    const ag::Var attn = ag::softmax_rows(scores, bias);
    if (trace) {
      call.weights.push_back(attn.value());
      call.bias.push_back(bias);
    }
    outs.push_back(ag::matmul(attn, vh));
  }
  if (trace) trace->calls.push_back(std::move(call));
  return o_(heads_ == 1 ? outs[0] : ag::concat_cols(outs));
}

FeedForward::FeedForward(nn::ParamStore& store, const std::string& name, std::size_t dim, std::size_t hidden,
                         nn::Rng& rng)
    : fc1_(store, name + ".fc1", dim, hidden, rng), fc2_(store, name + ".fc2", hidden, dim, rng) {}

ag::Var FeedForward::operator()(const ag::Var& x) const { return fc2_(ag::relu(fc1_(x))); }

EncoderLayer::EncoderLayer(nn::ParamStore& store, const std::string& name, std::size_t dim,
                           const AttentionConfig& cfg, nn::Rng& rng)
    : cycle_(cfg.cycle_consistency) {
  const std::size_t hidden = cfg.ffn_dim ? cfg.ffn_dim : 2 * dim;
  self_attn_ = MultiHeadAttention(store, name + ".self_attn", dim, cfg.heads, rng);
  norm1_ = nn::LayerNorm(store, name + ".norm1", dim);
  self_ffn_ = FeedForward(store, name + ".self_ffn", dim, hidden, rng);
  norm2_ = nn::LayerNorm(store, name + ".norm2", dim);
  cross_attn_ = MultiHeadAttention(store, name + ".cross_attn", dim, cfg.heads, rng);
  norm3_ = nn::LayerNorm(store, name + ".norm3", dim);
  cross_ffn_ = FeedForward(store, name + ".cross_ffn", dim, hidden, rng);
  norm4_ = nn::LayerNorm(store, name + ".norm4", dim);
}

ag::Var EncoderLayer::operator()(const ag::Var& query_tokens, const ag::Var& support_tokens,
                                 std::span<const std::uint8_t> support_labels, AttentionTrace* trace) const {
  ag::Var x = norm1_(ag::add(query_tokens, self_attn_(query_tokens, query_tokens, {}, trace, false)));
  x = norm2_(ag::add(x, self_ffn_(x)));
  const auto labels = cycle_ ? support_labels : std::span<const std::uint8_t>{};
  x = norm3_(ag::add(x, cross_attn_(x, support_tokens, labels, trace, true)));
  return norm4_(ag::add(x, cross_ffn_(x)));
}

Tensor sinusoidal_positions(std::size_t height, std::size_t width, std::size_t dim) {
  Tensor pe({height * width, dim}, 0.0);
  const std::size_t half = dim / 2;
  auto encode = [](double pos, std::size_t i, std::size_t n) {
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i / 2) / static_cast<double>(n));
    return i % 2 == 0 ? std::sin(pos * freq) : std::cos(pos * freq);
  };
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      double* row = pe.ptr() + (y * width + x) * dim;
      for (std::size_t i = 0; i < half; ++i) row[i] = encode(static_cast<double>(y), i, half);
      for (std::size_t i = half; i < dim; ++i) row[i] = encode(static_cast<double>(x), i - half, dim - half);
    }
  return pe;
}

FeatureActivation::FeatureActivation(nn::ParamStore& store, std::size_t dim, const AttentionConfig& cfg,
                                     nn::Rng& rng)
    : dim_(dim) {
  if (cfg.layers == 0) throw ConfigError("attention needs at least one layer");
  for (std::size_t i = 0; i < cfg.layers; ++i)
    layers_.emplace_back(store, "activation.layer" + std::to_string(i), dim, cfg, rng);
}

namespace {

ag::Var to_tokens(const ag::Var& map) {
  const Shape& s = map.shape();
  ag::Var tokens = ag::transpose(ag::reshape(map, {s[0], s[1] * s[2]}));
  return ag::add(tokens, ag::constant(sinusoidal_positions(s[1], s[2], s[0])));
}

}  // namespace

ag::Var FeatureActivation::operator()(const ag::Var& query, std::span<const ag::Var> support,
                                      std::span<const std::uint8_t> support_labels, AttentionTrace* trace) const {
  const Shape& s = query.shape();
  if (s.size() != 3 || s[0] != dim_) throw ContractError("activation: query must be {C, H, W} with C = " + std::to_string(dim_));
  std::vector<ag::Var> support_tokens;
  for (const ag::Var& m : support) support_tokens.push_back(to_tokens(m));
  const ag::Var keys = support_tokens.size() == 1 ? support_tokens[0] : ag::concat_rows(support_tokens);
  if (!support_labels.empty() && support_labels.size() != keys.shape()[0])
    throw ContractError("activation: support label count differs from support token count");
  ag::Var x = to_tokens(query);
  for (const auto& layer : layers_) x = layer(x, keys, support_labels, trace);
  return ag::reshape(ag::transpose(x), s);
}

}  // namespace rifenet
