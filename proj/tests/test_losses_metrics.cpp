#include <cmath>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "rifenet/errors.hpp"
#include "rifenet/interaction.hpp"
#include "rifenet/losses.hpp"
#include "rifenet/metrics.hpp"

using namespace rifenet;

namespace {

Mask half_mask(int n, int ones) {
  Mask m(10, n / 10);
  for (int i = 0; i < ones; ++i) m.data[i] = 1;
  return m;
}

}  // namespace

TEST_CASE("dice closed forms") {
  const Mask t = half_mask(100, 50);
  const Tensor same = mask_tensor(t);
  CHECK(dice(ag::constant(same), t).item() == 0.0);
  Tensor comp = same;
  for (double& v : comp.data) v = 1.0 - v;
  CHECK(std::abs(dice(ag::constant(comp), t).item() - (1.0 - 1.0 / 101.0)) <= 1e-12);
  // Empty target and empty prediction: smoothing makes it a perfect match.
  CHECK(dice(ag::constant(Tensor({4}, 0.0)), Mask(2, 2)).item() == 0.0);
  CHECK_THROWS_AS(dice(ag::constant(Tensor({3}, 0.0)), Mask(2, 2)), ContractError);
}

TEST_CASE("dice matches the oracle on soft predictions") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor p = oracle::random_tensor({36}, rng, 0.0, 1.0);
    const Mask t = oracle::random_mask(6, 6, rng);
    const Tensor tt = mask_tensor(t);
    CHECK(dice(ag::constant(p), t).item() == doctest::Approx(oracle::dice(p.data, tt.data, 1.0)).epsilon(1e-12));
  }
}

TEST_CASE("dice gradient through the logit difference") {
  std::mt19937_64 rng(10);
  const Mask t = oracle::random_mask(3, 4, rng);
  std::vector<ag::Var> in{ag::parameter(oracle::random_tensor({2, 3, 4}, rng, -2, 2))};
  CHECK(gradcheck::max_error([&](auto& v) { return dice(foreground_probability(v[0]), t); }, in) < 1e-6);
}

TEST_CASE("foreground probability is the two-way softmax") {
  Tensor l({2, 1, 2}, std::vector<double>{0.3, -1.0, 1.2, 2.0});
  const ag::Var p = foreground_probability(ag::constant(l));
  CHECK(p.value().data[0] == doctest::Approx(std::exp(1.2) / (std::exp(0.3) + std::exp(1.2))));
  CHECK(p.value().data[1] == doctest::Approx(std::exp(2.0) / (std::exp(-1.0) + std::exp(2.0))));
  const Mask m = logits_to_mask(l);
  CHECK(m.data == std::vector<std::uint8_t>{1, 1});
  const Mask tie = logits_to_mask(Tensor({2, 1, 1}, std::vector<double>{0.5, 0.5}));
  CHECK(tie.data[0] == 0);
}

TEST_CASE("upsampled logits keep the plane mean for constant maps") {
  const ag::Var up = upsample_logits(ag::constant(Tensor({2, 4, 4}, 0.7)), 16, 16);
  CHECK(up.shape() == Shape{2, 16, 16});
  for (double v : up.value().data) CHECK(v == doctest::Approx(0.7));
}

TEST_CASE("loss composition") {
  CHECK(final_loss(0.4, 0.3, 0.5) == 0.4 + 0.5 * 0.3);
  CHECK(final_loss(0.4, 0.3, 0.0) == 0.4);
  const ag::Var m = ag::constant(Tensor({1}, 0.37)), u = ag::constant(Tensor({1}, 0.11));
  CHECK(final_loss(m, u, 0.5).item() == 0.37 + 0.5 * 0.11);

  std::mt19937_64 rng(2);
  const Mask t = oracle::random_mask(4, 4, rng);
  const ag::Var q = ag::constant(oracle::random_tensor({2, 4, 4}, rng));
  const ag::Var a = ag::constant(oracle::random_tensor({2, 4, 4}, rng));
  const MainLoss with = main_loss(q, t, &a, 0.4);
  CHECK(with.total.item() == doctest::Approx(with.query.item() + 0.4 * with.aux.item()).epsilon(1e-15));
  const MainLoss without = main_loss(q, t, nullptr);
  CHECK_FALSE(without.aux.defined());
  CHECK(without.total.item() == without.query.item());
}

TEST_CASE("pooled mIoU differs from the per-episode mean") {
  MetricAccumulator acc({1, 2}, 0);
  const auto e1 = fixture::episode_50_100(), e2 = fixture::episode_15_20();
  acc.update(e1.prediction, e1.truth, 1);
  acc.update(e2.prediction, e2.truth, 1);
  CHECK(acc.counter(1).intersection == 65);
  CHECK(acc.counter(1).union_ == 120);
  CHECK(acc.miou() == doctest::Approx(65.0 / 120.0).epsilon(1e-15));
  CHECK(acc.miou_episode_mean() == doctest::Approx(0.625).epsilon(1e-15));
  CHECK(acc.fb_iou() == doctest::Approx(0.5 * (65.0 / 120.0 + 130.0 / 185.0)).epsilon(1e-15));
  CHECK(acc.episodes() == 2);
}

TEST_CASE("mIoU averages over classes that were seen") {
  MetricAccumulator acc({1, 2, 3}, 1);
  const auto a = fixture::episode_30_40(), b = fixture::episode_10_50();
  acc.update(a.prediction, a.truth, 1);
  acc.update(b.prediction, b.truth, 2);
  CHECK(acc.miou() == doctest::Approx(0.5 * (0.75 + 0.2)));
  CHECK(acc.fb_iou() == doctest::Approx(0.5 * (40.0 / 90.0 + 50.0 / 100.0)));
  CHECK_THROWS_AS(acc.update(a.prediction, a.truth, 7), ContractError);
  CHECK_THROWS_AS(acc.update(Mask(2, 2), Mask(3, 3), 1), ContractError);
}

TEST_CASE("merging accumulators equals accumulating everything in one") {
  const auto a = fixture::episode_50_100(), b = fixture::episode_15_20(), c = fixture::episode_10_50();
  MetricAccumulator whole({1, 2}), left({1, 2}), right({1, 2});
  whole.update(a.prediction, a.truth, 1);
  whole.update(b.prediction, b.truth, 2);
  whole.update(c.prediction, c.truth, 1);
  left.update(a.prediction, a.truth, 1);
  right.update(b.prediction, b.truth, 2);
  right.update(c.prediction, c.truth, 1);
  MetricAccumulator lr = left, rl = right;
  lr.merge(right);
  rl.merge(left);
  CHECK(lr.miou() == whole.miou());
  CHECK(rl.miou() == whole.miou());
  CHECK(lr.fb_iou() == whole.fb_iou());
  CHECK(lr.episodes() == 3);
}

TEST_CASE("empty union counts as a perfect episode") {
  IoUCounter c;
  CHECK(c.iou() == 1.0);
  MetricAccumulator acc({4});
  acc.update(Mask(3, 3), Mask(3, 3), 4);
  CHECK(acc.miou() == 1.0);
}
