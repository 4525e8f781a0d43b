#pragma once
// Transformer feature activation: self-attention over query tokens, then
// cross-attention from query to support tokens with cycle-consistency masking.

#include <cstdint>
#include <span>
#include <vector>

#include "rifenet/autograd.hpp"
#include "rifenet/nn.hpp"

namespace rifenet {

struct AttentionConfig {
  std::size_t layers = 2;
  std::size_t heads = 8;
  std::size_t ffn_dim = 0;  // 0 = twice the embedding size
  bool cycle_consistency = true;
};

// Per-head record of one attention call, filled when a trace is requested.
struct AttentionTrace {
  struct Call {
    bool cross = false;
    std::vector<Tensor> weights;             // per head, {Nq, Nk}, post-softmax
    std::vector<std::vector<double>> bias;   // per head column bias (cross only)
    bool fallback = false;                   // every support token was masked
  };
  std::vector<Call> calls;
};

// Column bias for one head's affinity matrix {Nq, Ns}: support token s is
// masked (-inf) when the support token most attended by s's best-matching
// query token carries a different label than s. all_masked is set when no
// column survives, in which case the returned bias is all zeros.
std::vector<double> cycle_consistency_bias(const Tensor& scores, std::span<const std::uint8_t> labels,
                                           bool& all_masked);

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(nn::ParamStore& store, const std::string& name, std::size_t dim, std::size_t heads, nn::Rng& rng);

  // queries {Nq, D}, keys {Nk, D}. key_labels enables cycle-consistency masking.
  ag::Var operator()(const ag::Var& queries, const ag::Var& keys, std::span<const std::uint8_t> key_labels = {},
                     AttentionTrace* trace = nullptr, bool cross = false) const;

  nn::Linear& q_proj() { return q_; }
  nn::Linear& k_proj() { return k_; }
  nn::Linear& v_proj() { return v_; }
  nn::Linear& out_proj() { return o_; }

 private:
  std::size_t dim_ = 0, heads_ = 1;
  nn::Linear q_, k_, v_, o_;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(nn::ParamStore& store, const std::string& name, std::size_t dim, std::size_t hidden, nn::Rng& rng);
  ag::Var operator()(const ag::Var& x) const;

 private:
  nn::Linear fc1_, fc2_;
};

// Post-norm encoder layer: [self-attn + FFN] then [cross-attn + FFN].
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(nn::ParamStore& store, const std::string& name, std::size_t dim, const AttentionConfig& cfg,
               nn::Rng& rng);

  ag::Var operator()(const ag::Var& query_tokens, const ag::Var& support_tokens,
                     std::span<const std::uint8_t> support_labels, AttentionTrace* trace) const;

 private:
  bool cycle_ = true;
  MultiHeadAttention self_attn_, cross_attn_;
  FeedForward self_ffn_, cross_ffn_;
  nn::LayerNorm norm1_, norm2_, norm3_, norm4_;
};

// Fixed 2-D sinusoidal encoding {H*W, D}: first half of the channels encodes
// rows, second half columns.
Tensor sinusoidal_positions(std::size_t height, std::size_t width, std::size_t dim);

class FeatureActivation {
 public:
  FeatureActivation() = default;
  FeatureActivation(nn::ParamStore& store, std::size_t dim, const AttentionConfig& cfg, nn::Rng& rng);

  // query {C, H, W}; support is a list of {C, Hs, Ws} maps whose tokens are
  // concatenated, with matching per-token 0/1 labels. Returns {C, H, W}.
  ag::Var operator()(const ag::Var& query, std::span<const ag::Var> support,
                     std::span<const std::uint8_t> support_labels, AttentionTrace* trace = nullptr) const;

 private:
  std::size_t dim_ = 0;
  std::vector<EncoderLayer> layers_;
};

}  // namespace rifenet
