#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "rifenet/attention.hpp"

using namespace rifenet;

namespace {

Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& perm) {
  Tensor out(t.shape);
  const std::size_t d = t.dim(1);
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t c = 0; c < d; ++c) out.at(i, c) = t.at(perm[i], c);
  return out;
}

}  // namespace

TEST_CASE("cycle bias masks the token whose cycle lands on the other label") {
  // Both query tokens prefer support token 0, so token 1's best query maps
  // back to token 0, which has the other label.
  const Tensor scores({2, 2}, std::vector<double>{5, 1, 4, 3});
  const std::uint8_t labels[] = {1, 0};
  bool all = false;
  const auto bias = cycle_consistency_bias(scores, labels, all);
  CHECK_FALSE(all);
  CHECK(bias[0] == 0.0);
  CHECK(std::isinf(bias[1]));
  CHECK(bias[1] < 0);
  const ag::Var attn = ag::softmax_rows(ag::constant(scores), bias);
  CHECK(attn.value().at(0, 1) == 0.0);
  CHECK(attn.value().at(1, 1) == 0.0);
  CHECK(attn.value().at(0, 0) == 1.0);
}

TEST_CASE("cycle bias keeps consistent tokens and falls back when all are masked") {
  const Tensor agree({2, 2}, std::vector<double>{5, 1, 1, 5});
  const std::uint8_t labels[] = {1, 0};
  bool all = true;
  auto bias = cycle_consistency_bias(agree, labels, all);
  CHECK_FALSE(all);
  CHECK(bias == std::vector<double>{0.0, 0.0});
  // One support token whose best query's best support is itself is always
  // kept, so all-masked needs every column to fail; two tokens with equal
  // labels never fail.
  const std::uint8_t same[] = {1, 1};
  bias = cycle_consistency_bias(Tensor({2, 2}, std::vector<double>{5, 1, 4, 3}), same, all);
  CHECK_FALSE(all);
  CHECK(bias == std::vector<double>{0.0, 0.0});
}

TEST_CASE("attention rows are distributions") {
  nn::ParamStore store;
  nn::Rng rng(3);
  MultiHeadAttention mha(store, "t", 16, 4, rng);
  std::mt19937_64 r(1);
  const Tensor q = oracle::random_tensor({7, 16}, r), k = oracle::random_tensor({9, 16}, r);
  std::vector<std::uint8_t> labels(9);
  for (std::size_t i = 0; i < 9; ++i) labels[i] = i % 3 == 0;
  AttentionTrace trace;
  const ag::Var y = mha(ag::constant(q), ag::constant(k), labels, &trace, true);
  CHECK(y.shape() == Shape{7, 16});
  REQUIRE(trace.calls.size() == 1);
  REQUIRE(trace.calls[0].weights.size() == 4);
  for (std::size_t h = 0; h < 4; ++h) {
    const Tensor& w = trace.calls[0].weights[h];
    for (std::size_t i = 0; i < 7; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 9; ++j) {
        CHECK(w.at(i, j) >= 0.0);
        s += w.at(i, j);
        if (std::isinf(trace.calls[0].bias[h][j])) CHECK(w.at(i, j) == 0.0);
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("attention is permutation equivariant in queries and invariant in keys") {
  nn::ParamStore store;
  nn::Rng rng(5);
  MultiHeadAttention mha(store, "t", 8, 2, rng);
  std::mt19937_64 r(2);
  const Tensor q = oracle::random_tensor({5, 8}, r), k = oracle::random_tensor({6, 8}, r);
  const std::vector<std::size_t> pq{3, 0, 4, 1, 2}, pk{5, 2, 0, 1, 4, 3};
  const Tensor base = mha(ag::constant(q), ag::constant(k)).value();
  const Tensor moved = mha(ag::constant(permute_rows(q, pq)), ag::constant(permute_rows(k, pk))).value();
  const Tensor expect = permute_rows(base, pq);
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(moved.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-12));
}

TEST_CASE("sinusoidal positions") {
  const Tensor pe = sinusoidal_positions(3, 4, 8);
  CHECK(pe.shape == Shape{12, 8});
  // Row (y) channels agree along a row, column (x) channels along a column.
  for (std::size_t x = 0; x < 4; ++x)
    for (std::size_t c = 0; c < 4; ++c) CHECK(pe.at(x, c) == pe.at(0, c));
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t c = 4; c < 8; ++c) CHECK(pe.at(y * 4, c) == pe.at(0, c));
  CHECK(pe.at(0, 0) == 0.0);
  CHECK(pe.at(0, 1) == 1.0);
  for (double v : pe.data) CHECK(std::abs(v) <= 1.0);
}

TEST_CASE("feature activation keeps the feature shape and records every call") {
  nn::ParamStore store;
  nn::Rng rng(7);
  AttentionConfig cfg{2, 4, 0, true};
  FeatureActivation act(store, 16, cfg, rng);
  std::mt19937_64 r(4);
  const ag::Var q = ag::constant(oracle::random_tensor({16, 4, 4}, r));
  std::vector<ag::Var> support{ag::constant(oracle::random_tensor({16, 4, 4}, r)),
                               ag::constant(oracle::random_tensor({16, 4, 4}, r))};
  std::vector<std::uint8_t> labels(32, 0);
  for (std::size_t i = 0; i < 32; i += 3) labels[i] = 1;
  AttentionTrace trace;
  const ag::Var y = act(q, support, labels, &trace);
  CHECK(y.shape() == Shape{16, 4, 4});
  CHECK(y.value().all_finite());
  REQUIRE(trace.calls.size() == 4);  // self + cross per layer
  CHECK_FALSE(trace.calls[0].cross);
  CHECK(trace.calls[1].cross);
  CHECK(trace.calls[1].weights[0].dim(1) == 32);
  std::size_t names = 0;
  for (const auto& p : store.params())
    if (p.name.rfind("activation.layer1.cross_attn", 0) == 0) ++names;
  CHECK(names == 8);  // q, k, v, out weights and biases
}
