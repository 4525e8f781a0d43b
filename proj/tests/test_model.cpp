#include <set>

#include "doctest.h"
#include "model_fixture.hpp"
#include "rifenet/errors.hpp"
#include "rifenet/model.hpp"

using namespace rifenet;

namespace {

std::vector<double> gradients(RiFeNet& model, const ag::Var& loss) {
  model.params().zero_grad();
  ag::backward(loss);
  std::vector<double> g;
  for (const auto& p : model.params().params()) {
    if (!p.trainable) continue;
    if (p.var.has_grad())
      g.insert(g.end(), p.var.grad().data.begin(), p.var.grad().data.end());
    else
      g.insert(g.end(), p.var.size(), 0.0);
  }
  return g;
}

}  // namespace

TEST_CASE("parameter manifest has nothing exclusive to the unlabeled branch") {
  const RiFeNet with(fixture::small_model(32, 2)), without(fixture::small_model(32, 0));
  std::vector<std::string> a, b;
  for (const auto& p : with.params().params()) a.push_back(p.name);
  for (const auto& p : without.params().params()) b.push_back(p.name);
  CHECK(a == b);
  for (const auto& n : a) CHECK(n.find("unlabel") == std::string::npos);
  std::set<std::string> unique(a.begin(), a.end());
  CHECK(unique.size() == a.size());
  CHECK(unique.contains("interact.conv.weight"));
  CHECK(unique.contains("aux.out.weight"));
}

TEST_CASE("interaction input width is 2*Cm + C' + 1") {
  nn::ParamStore store;
  nn::Rng rng(1);
  PrototypeInteraction pi(store, 16, 8, rng);
  CHECK(pi.input_channels() == 2 * 16 + 8 + 1);
}

TEST_CASE("shared merge: query and unlabeled paths give identical features") {
  const RiFeNet model(fixture::small_model());
  const Episode ep = fixture::episode(Phase::Train, 1, 2, 3);
  const Encoded a = model.encode(ep.unlabeled[0]);
  const Encoded b = model.encode(ep.unlabeled[0]);
  CHECK(a.merged.data.value().data == b.merged.data.value().data);
}

TEST_CASE("training forward shapes and loss report") {
  RiFeNet model(fixture::small_model());
  const Episode ep = fixture::episode(Phase::Train, 1, 2, 11);
  AttentionTrace trace;
  const TrainingForward f = model.forward_train(ep, &trace);
  CHECK(f.query_logits.shape() == Shape{2, 32, 32});
  CHECK(f.query.logits.shape() == Shape{2, 8, 8});
  CHECK(f.query.local.count() == 4);
  CHECK(f.unlabeled_views.size() == 2);
  CHECK(f.report.final == f.final.item());
  CHECK(f.report.final == f.report.main + 0.5 * f.report.unlabeled);
  CHECK(f.report.beta == 0.5);
  CHECK(trace.calls.size() == 2);  // one layer: self + cross on the query only
  for (const auto& v : f.unlabeled_views) {
    CHECK(v.weak_logits.shape() == Shape{2, 32, 32});
    CHECK(v.strong_logits.shape() == Shape{2, 32, 32});
    CHECK(v.weak_geometry == v.strong_geometry);
    CHECK(v.pseudo_label == logits_to_mask(v.weak_logits.value()));
  }
}

TEST_CASE("unlabeled count 0 contributes exactly zero") {
  RiFeNet model(fixture::small_model(32, 0));
  const Episode ep = fixture::episode(Phase::Train, 1, 0, 11);
  const TrainingForward f = model.forward_train(ep);
  CHECK(f.unlabeled_views.empty());
  CHECK(f.report.unlabeled == 0.0);
  CHECK(f.report.final == f.report.main);
}

TEST_CASE("pseudo-label side carries no gradient") {
  RiFeNet model(fixture::small_model());
  const Episode ep = fixture::episode(Phase::Train, 1, 2, 5);
  const TrainingForward f = model.forward_train(ep);
  model.params().zero_grad();
  ag::backward(f.unlabeled);
  for (const auto& v : f.unlabeled_views) {
    CHECK_FALSE(v.weak_logits.requires_grad());
    CHECK_FALSE(v.weak_logits.has_grad());
    CHECK(v.strong_logits.requires_grad());
  }
  double norm = 0;
  for (const auto& p : model.params().params())
    if (p.var.has_grad())
      for (double g : p.var.grad().data) norm += g * g;
  CHECK(norm > 0);  // the strong side does train
}

TEST_CASE("beta 0 gives the same gradients as no unlabeled images") {
  RiFeNet model(fixture::small_model(32, 2));
  const Episode with = fixture::episode(Phase::Train, 1, 2, 21);
  const Episode without = fixture::episode(Phase::Train, 1, 0, 21);
  const auto g0 = gradients(model, model.forward_train(with, 0.0).final);
  const auto g1 = gradients(model, model.forward_train(without, 0.0).final);
  CHECK(g0 == g1);
  const auto g2 = gradients(model, model.forward_train(with, 0.5).final);
  CHECK(g0 != g2);
}

TEST_CASE("unlabeled weight schedule") {
  UnlabeledOptions o;
  o.loss_weight = 0.5;
  CHECK(o.weight_at(0) == 0.5);
  o.delay = 10;
  o.rampup = 4;
  CHECK(o.weight_at(9) == 0.0);
  CHECK(o.weight_at(10) == 0.125);
  CHECK(o.weight_at(13) == 0.5);
  CHECK(o.weight_at(1000) == 0.5);
}

TEST_CASE("unlabeled branch refuses test episodes") {
  RiFeNet model(fixture::small_model());
  Episode ep = fixture::episode(Phase::Test, 1, 0, 2);
  CHECK_THROWS_AS(model.forward_train(ep), ContractError);
  const SupportContext ctx = model.encode_support(ep.support);
  ep.unlabeled.push_back(ep.query.image);
  CHECK_THROWS_AS(model.unlabeled_forward(ep, ctx, LocalPrototypeGrid{}), ContractError);
}

TEST_CASE("predict runs K+1 backbone forwards without a tape") {
  RiFeNet model(fixture::small_model());
  for (int shots : {1, 5}) {
    const Episode ep = fixture::episode(Phase::Test, shots, 0, 4);
    model.backbone().reset_forward_count();
    const Prediction p = model.predict(ep.support, ep.query.image);
    CHECK(model.backbone().forward_count() == static_cast<std::uint64_t>(shots + 1));
    CHECK(p.logits.shape == Shape{2, 32, 32});
    CHECK(p.mask.height == 32);
    CHECK(p.foreground.size() == 32 * 32);
    CHECK(p.local_grid.shape == Shape{8, 2, 2});
    for (double v : p.prior.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  const Episode ep = fixture::episode(Phase::Test, 1, 0, 4);
  CHECK_THROWS_AS(model.predict(ep.support, Image(16, 16)), ContractError);
  CHECK_THROWS_AS(model.predict({}, ep.query.image), ContractError);
}

TEST_CASE("prediction is deterministic and independent of training state") {
  const RiFeNet a(fixture::small_model()), b(fixture::small_model());
  const Episode ep = fixture::episode(Phase::Test, 1, 0, 9);
  CHECK(a.predict(ep.support, ep.query.image).logits.data == b.predict(ep.support, ep.query.image).logits.data);
}

TEST_CASE("every prototype mode and guidance source runs") {
  const Episode ep = fixture::episode(Phase::Train, 1, 1, 13);
  for (PrototypeMode mode :
       {PrototypeMode::Global, PrototypeMode::GlobalGlobal, PrototypeMode::GlobalLocalNoCA, PrototypeMode::GlobalLocalCA})
    for (GuidanceSource g : {GuidanceSource::Low, GuidanceSource::High, GuidanceSource::Both})
      for (bool guide : {true, false}) {
        ModelConfig cfg = fixture::small_model(32, 1);
        cfg.prototypes = mode;
        cfg.guidance = g;
        cfg.unlabeled.guide = guide;
        const RiFeNet model(cfg);
        const TrainingForward f = model.forward_train(ep);
        CHECK(std::isfinite(f.report.final));
        CHECK(f.query.local.grid.defined() == (mode != PrototypeMode::Global));
        CHECK(parse_prototype_mode(prototype_mode_name(mode)) == mode);
        CHECK(parse_guidance(guidance_name(g)) == g);
      }
  CHECK_THROWS_AS(parse_prototype_mode("lp"), ConfigError);
}

TEST_CASE("multi-shot support averages prototypes and concatenates tokens") {
  const RiFeNet model(fixture::small_model());
  const Episode ep = fixture::episode(Phase::Test, 5, 0, 8);
  const SupportContext ctx = model.encode_support(ep.support);
  CHECK(ctx.augmented.size() == 5);
  CHECK(ctx.token_labels.size() == 5 * 8 * 8);
  Tensor mean({16}, 0.0);
  for (const auto& s : ep.support) {
    const ag::Var p = masked_average_pool(model.encode(s.image).merged.data, s.mask);
    for (std::size_t i = 0; i < 16; ++i) mean.data[i] += p.value().data[i] / 5.0;
  }
  for (std::size_t i = 0; i < 16; ++i) CHECK(ctx.global.value().data[i] == doctest::Approx(mean.data[i]).epsilon(1e-12));
}
