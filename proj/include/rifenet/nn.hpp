#pragma once
// Parameter registry and the small set of layers the model is built from.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rifenet/autograd.hpp"

namespace rifenet::nn {

using Rng = std::mt19937_64;

struct NamedParam {
  std::string name;
  ag::Var var;
  bool trainable = true;
};

// Flat, ordered list of named tensors. Names are dotted paths such as
// "interact.conv.weight"; the order is the registration order and is what
// checkpoints and optimizers iterate over.
class ParamStore {
 public:
  ag::Var add(std::string name, Tensor init, bool trainable = true);

  const std::vector<NamedParam>& params() const { return params_; }
  std::vector<NamedParam>& params() { return params_; }
  const NamedParam* find(const std::string& name) const;
  void zero_grad();
  std::size_t scalar_count(bool trainable_only = false) const;

 private:
  std::vector<NamedParam> params_;
};

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng);
Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// Pointwise channel mixing on {C_in, ...} -> {C_out, ...}.
class Conv1x1 {
 public:
  Conv1x1() = default;
  Conv1x1(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
          bool trainable = true);

  ag::Var operator()(const ag::Var& x) const;

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  const ag::Var& weight() const { return weight_; }
  const ag::Var& bias() const { return bias_; }

 private:
  std::size_t in_ = 0, out_ = 0;
  ag::Var weight_, bias_;
};

class Conv3x3 {
 public:
  Conv3x3() = default;
  Conv3x3(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::size_t stride,
          std::size_t dilation, Rng& rng, bool trainable = true);

  // Padding equals the dilation, so stride 1 preserves the spatial size.
  ag::Var operator()(const ag::Var& x) const;

  const ag::Var& weight() const { return weight_; }

 private:
  std::size_t in_ = 0, out_ = 0, stride_ = 1, dilation_ = 1;
  ag::Var weight_, bias_;
};

// Token-major affine map {N, in} -> {N, out}.
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng);

  ag::Var operator()(const ag::Var& x) const;

  const ag::Var& weight() const { return weight_; }
  const ag::Var& bias() const { return bias_; }

 private:
  ag::Var weight_, bias_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, std::size_t dim);

  ag::Var operator()(const ag::Var& x) const;

 private:
  ag::Var gamma_, beta_;
};

}  // namespace rifenet::nn
