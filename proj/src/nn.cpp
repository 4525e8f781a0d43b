#include "rifenet/nn.hpp"

#include <cmath>

#include "rifenet/errors.hpp"

namespace rifenet::nn {

ag::Var ParamStore::add(std::string name, Tensor init, bool trainable) {
  if (find(name) != nullptr) throw ContractError("duplicate parameter name: " + name);
  ag::Var v(std::move(init), trainable);
  params_.push_back({std::move(name), v, trainable});
  return v;
}

const NamedParam* ParamStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

std::size_t ParamStore::scalar_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (!trainable_only || p.trainable) n += p.var.size();
  return n;
}

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.data) v = dist(rng);
  return t;
}

Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.data) v = dist(rng);
  return t;
}

Conv1x1::Conv1x1(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                 bool trainable)
    : in_(in), out_(out) {
  weight_ = store.add(name + ".weight", kaiming_uniform({out, in}, in, rng), trainable);
  bias_ = store.add(name + ".bias", Tensor({out}, 0.0), trainable);
}

ag::Var Conv1x1::operator()(const ag::Var& x) const {
  const Shape& s = x.shape();
  if (s.empty() || s[0] != in_)
    throw ContractError("Conv1x1: expected " + std::to_string(in_) + " input channels, got " + shape_str(s));
  Shape out_shape = s;
  out_shape[0] = out_;
  ag::Var flat = ag::reshape(x, {in_, x.size() / in_});
  ag::Var y = ag::add_row_bias(ag::matmul(weight_, flat), bias_);
  return ag::reshape(y, std::move(out_shape));
}

Conv3x3::Conv3x3(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::size_t stride,
                 std::size_t dilation, Rng& rng, bool trainable)
    : in_(in), out_(out), stride_(stride), dilation_(dilation) {
  weight_ = store.add(name + ".weight", kaiming_uniform({out, in * 9}, in * 9, rng), trainable);
  bias_ = store.add(name + ".bias", Tensor({out}, 0.0), trainable);
}

ag::Var Conv3x3::operator()(const ag::Var& x) const {
  const Shape& s = x.shape();
  if (s.size() != 3 || s[0] != in_) throw ContractError("Conv3x3: bad input shape " + shape_str(s));
  const std::size_t H = s[1], W = s[2];
  const std::size_t Ho = (H + 2 * dilation_ - 2 * dilation_ - 1) / stride_ + 1;
  const std::size_t Wo = (W + 2 * dilation_ - 2 * dilation_ - 1) / stride_ + 1;
  ag::Var cols = ag::im2col(x, 3, stride_, dilation_, dilation_);
  ag::Var y = ag::add_row_bias(ag::matmul(weight_, cols), bias_);
  return ag::reshape(y, {out_, Ho, Wo});
}

Linear::Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  weight_ = store.add(name + ".weight", xavier_uniform({in, out}, in, out, rng));
  bias_ = store.add(name + ".bias", Tensor({out}, 0.0));
}

ag::Var Linear::operator()(const ag::Var& x) const { return ag::add_col_bias(ag::matmul(x, weight_), bias_); }

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, std::size_t dim) {
  gamma_ = store.add(name + ".gamma", Tensor({dim}, 1.0));
  beta_ = store.add(name + ".beta", Tensor({dim}, 0.0));
}

ag::Var LayerNorm::operator()(const ag::Var& x) const { return ag::layer_norm_rows(x, &gamma_, &beta_); }

}  // namespace rifenet::nn
