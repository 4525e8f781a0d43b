#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "rifenet/autograd.hpp"

using namespace rifenet;
using ag::Var;

namespace {

std::mt19937_64 g_rng(1234);

Var param(Shape s) { return ag::parameter(oracle::random_tensor(std::move(s), g_rng)); }

// Random fixed projection to a scalar so every output element matters.
Var project(const Var& y) {
  std::mt19937_64 rng(77);
  return ag::sum(ag::mul(y, ag::constant(oracle::random_tensor(y.shape(), rng))));
}

void expect_grad(const std::function<Var(const std::vector<Var>&)>& f, std::vector<Var> in, double tol = 1e-6) {
  CHECK(gradcheck::max_error(f, in) < tol);
}

}  // namespace

TEST_CASE("elementwise and matmul gradients") {
  expect_grad([](auto& v) { return project(ag::add(v[0], v[1])); }, {param({3, 4}), param({3, 4})});
  expect_grad([](auto& v) { return project(ag::sub(v[0], v[1])); }, {param({3, 4}), param({3, 4})});
  expect_grad([](auto& v) { return project(ag::mul(v[0], v[1])); }, {param({5}), param({5})});
  expect_grad([](auto& v) { return project(ag::scale(ag::add_scalar(v[0], 0.3), -2.5)); }, {param({6})});
  expect_grad([](auto& v) { return project(ag::sigmoid(v[0])); }, {param({7})});
  expect_grad([](auto& v) { return project(ag::relu(v[0])); }, {param({9})});
  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      Shape sa = ta ? Shape{4, 3} : Shape{3, 4};
      Shape sb = tb ? Shape{5, 4} : Shape{4, 5};
      expect_grad([ta, tb](auto& v) { return project(ag::matmul(v[0], v[1], ta, tb)); }, {param(sa), param(sb)});
    }
  expect_grad([](auto& v) { return project(ag::transpose(v[0])); }, {param({2, 5})});
}

TEST_CASE("broadcast and reduction gradients") {
  expect_grad([](auto& v) { return project(ag::add_row_bias(v[0], v[1])); }, {param({3, 4}), param({3})});
  expect_grad([](auto& v) { return project(ag::add_col_bias(v[0], v[1])); }, {param({3, 4}), param({4})});
  expect_grad([](auto& v) { return project(ag::mul_rows(v[0], v[1])); }, {param({3, 4}), param({3})});
  expect_grad([](auto& v) { return project(ag::mul_cols(v[0], v[1])); }, {param({3, 4}), param({4})});
  expect_grad([](auto& v) { return project(ag::row_mean(v[0])); }, {param({3, 4})});
  expect_grad([](auto& v) { return ag::sum(v[0]); }, {param({2, 3})});
}

TEST_CASE("concat and slice gradients") {
  expect_grad(
      [](auto& v) {
        std::vector<Var> parts{v[0], v[1]};
        return project(ag::concat_rows(parts));
      },
      {param({2, 3}), param({4, 3})});
  expect_grad(
      [](auto& v) {
        std::vector<Var> parts{v[0], v[1]};
        return project(ag::concat_cols(parts));
      },
      {param({3, 2}), param({3, 5})});
  expect_grad([](auto& v) { return project(ag::slice_rows(v[0], 1, 3)); }, {param({4, 3})});
  expect_grad([](auto& v) { return project(ag::slice_cols(v[0], 2, 5)); }, {param({3, 6})});
}

TEST_CASE("softmax and layer norm gradients") {
  expect_grad([](auto& v) { return project(ag::softmax_rows(v[0])); }, {param({3, 5})});
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> bias{0.0, -inf, 0.5, 0.0, -inf};
  expect_grad([&](auto& v) { return project(ag::softmax_rows(v[0], bias)); }, {param({3, 5})});
  expect_grad([](auto& v) { return project(ag::layer_norm_rows(v[0], &v[1], &v[2])); },
              {param({4, 6}), param({6}), param({6})}, 1e-5);
  expect_grad([](auto& v) { return project(ag::layer_norm_rows(v[0], nullptr, nullptr)); }, {param({3, 8})}, 1e-5);
}

TEST_CASE("softmax rows sum to one and masked columns are exactly zero") {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> bias{0.0, -inf, 0.0};
  Var y = ag::softmax_rows(ag::constant(oracle::random_tensor({4, 3}, g_rng, -5, 5)), bias);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 3; ++c) s += y.value().at(r, c);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(y.value().at(r, 1) == 0.0);
  }
}

TEST_CASE("im2col and spatial map gradients") {
  expect_grad([](auto& v) { return project(ag::im2col(v[0], 3, 1, 1, 1)); }, {param({2, 5, 5})});
  expect_grad([](auto& v) { return project(ag::im2col(v[0], 3, 2, 2, 2)); }, {param({2, 7, 6})});
  for (bool ac : {true, false}) {
    const auto map = ag::SpatialMap::bilinear(3, 4, 7, 9, ac);
    expect_grad([&](auto& v) { return project(ag::spatial(v[0], map)); }, {param({2, 3, 4})});
  }
  const auto pool = ag::SpatialMap::adaptive_avg_pool(6, 5, 2, 2);
  expect_grad([&](auto& v) { return project(ag::spatial(v[0], pool)); }, {param({2, 6, 5})});
}

TEST_CASE("im2col matches a direct convolution") {
  const Tensor x = oracle::random_tensor({2, 5, 6}, g_rng);
  const Tensor w = oracle::random_tensor({3, 2 * 9}, g_rng);
  for (std::size_t stride : {1u, 2u})
    for (std::size_t dil : {1u, 2u}) {
      const std::size_t pad = dil;
      Var cols = ag::im2col(ag::constant(x), 3, stride, pad, dil);
      Var y = ag::matmul(ag::constant(w), cols);
      const std::size_t Ho = (5 + 2 * pad - dil * 2 - 1) / stride + 1, Wo = (6 + 2 * pad - dil * 2 - 1) / stride + 1;
      REQUIRE(y.value().dim(1) == Ho * Wo);
      for (std::size_t o = 0; o < 3; ++o)
        for (std::size_t oy = 0; oy < Ho; ++oy)
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            double acc = 0;
            for (std::size_t c = 0; c < 2; ++c)
              for (std::size_t ky = 0; ky < 3; ++ky)
                for (std::size_t kx = 0; kx < 3; ++kx) {
                  const long iy = static_cast<long>(oy * stride + ky * dil) - static_cast<long>(pad);
                  const long ix = static_cast<long>(ox * stride + kx * dil) - static_cast<long>(pad);
                  if (iy < 0 || ix < 0 || iy >= 5 || ix >= 6) continue;
                  acc += w.at(o, c * 9 + ky * 3 + kx) * x.at(c, iy, ix);
                }
            CHECK(y.value().at(o, oy * Wo + ox) == doctest::Approx(acc).epsilon(1e-12));
          }
    }
}

TEST_CASE("bilinear maps preserve constants and hit corners") {
  const Tensor ones({1, 4, 5}, 1.0);
  for (bool ac : {true, false}) {
    const Tensor up = ag::SpatialMap::bilinear(4, 5, 9, 11, ac).apply(ones);
    for (double v : up.data) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  }
  const Tensor x = oracle::random_tensor({1, 3, 3}, g_rng);
  const Tensor up = ag::SpatialMap::bilinear(3, 3, 7, 7, true).apply(x);
  CHECK(up.at(0, 0, 0) == x.at(0, 0, 0));
  CHECK(up.at(0, 6, 6) == x.at(0, 2, 2));
  CHECK(up.at(0, 6, 0) == x.at(0, 2, 0));
}

TEST_CASE("no-grad guard records no history") {
  Var a = param({3});
  {
    ag::NoGradGuard guard;
    Var y = ag::scale(a, 2.0);
    CHECK_FALSE(y.requires_grad());
    CHECK(y.node()->parents.empty());
  }
  CHECK(ag::grad_enabled());
  CHECK(ag::scale(a, 2.0).requires_grad());
}

TEST_CASE("detach cuts the gradient path") {
  Var a = param({4});
  Var y = ag::add(ag::sum(ag::mul(a, a.detach())), ag::sum(a));
  a.zero_grad();
  ag::backward(y);
  for (std::size_t i = 0; i < 4; ++i) CHECK(a.grad().data[i] == doctest::Approx(a.value().data[i] + 1.0));
}

TEST_CASE("gradients accumulate over shared subgraphs") {
  Var a = param({2});
  Var b = ag::scale(a, 3.0);
  Var y = ag::sum(ag::add(b, b));
  a.zero_grad();
  ag::backward(y);
  CHECK(a.grad().data[0] == doctest::Approx(6.0));
  CHECK(a.grad().data[1] == doctest::Approx(6.0));
}

TEST_CASE("dice loss closed forms and gradient") {
  Tensor t({4}, std::vector<double>{1, 0, 1, 0});
  Var same = ag::constant(t);
  CHECK(ag::dice_loss(same, t).item() == doctest::Approx(0.0).epsilon(1e-15));
  std::vector<double> w{1, 1, 0, 1};
  expect_grad([&](auto& v) { return ag::dice_loss(ag::sigmoid(v[0]), t, w); }, {param({4})});
  // Weighted dice equals the oracle on the kept pixels.
  Var p = ag::constant(Tensor({4}, std::vector<double>{0.2, 0.7, 0.9, 0.1}));
  CHECK(ag::dice_loss(p, t, w).item() ==
        doctest::Approx(oracle::dice({0.2, 0.7, 0.1}, {1, 0, 0}, 1.0)).epsilon(1e-12));
}
