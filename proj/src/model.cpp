#include "rifenet/model.hpp"

#include <algorithm>
#include <cmath>

#include "rifenet/errors.hpp"
#include "rifenet/seeding.hpp"

namespace rifenet {

PrototypeMode parse_prototype_mode(const std::string& s) {
  if (s == "gp") return PrototypeMode::Global;
  if (s == "gp+gp") return PrototypeMode::GlobalGlobal;
  if (s == "gp+lp-noCA") return PrototypeMode::GlobalLocalNoCA;
  if (s == "gp+lp-CA") return PrototypeMode::GlobalLocalCA;
  throw ConfigError("unknown prototype mode '" + s + "' (gp, gp+gp, gp+lp-noCA, gp+lp-CA)");
}

std::string prototype_mode_name(PrototypeMode m) {
  switch (m) {
    case PrototypeMode::Global: return "gp";
    case PrototypeMode::GlobalGlobal: return "gp+gp";
    case PrototypeMode::GlobalLocalNoCA: return "gp+lp-noCA";
    case PrototypeMode::GlobalLocalCA: return "gp+lp-CA";
  }
  return "?";
}

GuidanceSource parse_guidance(const std::string& s) {
  if (s == "low") return GuidanceSource::Low;
  if (s == "high") return GuidanceSource::High;
  if (s == "both") return GuidanceSource::Both;
  throw ConfigError("unknown guidance source '" + s + "' (low, high, both)");
}

std::string guidance_name(GuidanceSource g) {
  switch (g) {
    case GuidanceSource::Low: return "low";
    case GuidanceSource::High: return "high";
    case GuidanceSource::Both: return "both";
  }
  return "?";
}

RiFeNet::RiFeNet(const ModelConfig& config) : config_(config) {
  if (config.backbone != "tiny") throw ConfigError("unsupported backbone '" + config.backbone + "' (only 'tiny')");
  nn::Rng rng(derive_seed(config.seed, 0x3d));
  backbone_ = TinyBackbone(store_, config.input_size, config.seed, config.backbone_frozen);
  merge_ = FeatureMerge(store_, config.merged_channels, rng);
  local_ = LocalPrototypeGenerator(store_, config.merged_channels, config.local_channels, config.se_ratio, rng);
  interact_ = PrototypeInteraction(store_, config.merged_channels, config.local_channels, rng);
  activation_ = FeatureActivation(store_, config.merged_channels, config.attention, rng);
  classifier_ = ClassifierHead(store_, "classifier", config.merged_channels, rng);
  aux_ = nn::Conv1x1(store_, "aux.out", config.merged_channels, 2, rng);
}

Encoded RiFeNet::encode(const Image& image) const {
  Encoded e;
  e.bundle = backbone_.extract(to_tensor(image, norm_));
  e.merged = merge_(e.bundle);
  return e;
}

Tensor RiFeNet::resize_map(const Tensor& map, std::size_t h, std::size_t w) const {
  const std::size_t in_h = map.dim(0), in_w = map.dim(1);
  if (in_h == h && in_w == w) return map;
  Tensor out = ag::SpatialMap::bilinear(in_h, in_w, h, w).apply(Tensor({1, in_h, in_w}, map.data));
  out.shape = {h, w};
  return out;
}

Tensor RiFeNet::support_prior(const SupportContext& ctx, const Encoded& target, bool high) const {
  const FeatureMap& q = high ? target.bundle.high() : target.bundle.low();
  Tensor acc;
  for (std::size_t k = 0; k < ctx.shots.size(); ++k) {
    const FeatureMap& s = high ? ctx.shots[k].bundle.high() : ctx.shots[k].bundle.low();
    Tensor p = prior_mask(q.data.value(), s.data.value(), ctx.masks[k]);
    if (acc.data.empty())
      acc = std::move(p);
    else
      for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += p.data[i];
  }
  for (double& v : acc.data) v /= static_cast<double>(ctx.shots.size());
  return resize_map(acc, target.merged.height(), target.merged.width());
}

Tensor RiFeNet::guidance_for(const SupportContext& ctx, const Encoded& target) const {
  switch (config_.guidance) {
    case GuidanceSource::Low: return support_prior(ctx, target, false);
    case GuidanceSource::High: return support_prior(ctx, target, true);
    case GuidanceSource::Both: {
      Tensor a = support_prior(ctx, target, false);
      const Tensor b = support_prior(ctx, target, true);
      for (std::size_t i = 0; i < a.size(); ++i) a.data[i] *= b.data[i];
      return a;
    }
  }
  return {};
}

LocalPrototypeGrid RiFeNet::make_local(const ag::Var& features, const Tensor& guidance) const {
  return local_(features, guidance, config_.grid, config_.prototypes == PrototypeMode::GlobalLocalCA);
}

ag::Var RiFeNet::local_slot(const ag::Var& global, const LocalPrototypeGrid& grid) const {
  switch (config_.prototypes) {
    case PrototypeMode::Global: return {};
    case PrototypeMode::GlobalGlobal: return local_.squeeze()(ag::reshape(global, {global.size(), 1, 1}));
    default: return grid.grid;
  }
}

SupportContext RiFeNet::encode_support(std::span<const SamplePair> support) const {
  if (support.empty()) throw ContractError("at least one support pair is required");
  SupportContext ctx;
  std::vector<ag::Var> globals;
  for (const SamplePair& s : support) {
    ctx.shots.push_back(encode(s.image));
    ctx.masks.push_back(s.mask);
    globals.push_back(masked_average_pool(ctx.shots.back().merged.data, s.mask));
  }
  ctx.global = globals[0];
  if (globals.size() > 1) {
    for (std::size_t k = 1; k < globals.size(); ++k) ctx.global = ag::add(ctx.global, globals[k]);
    ctx.global = ag::scale(ctx.global, 1.0 / static_cast<double>(globals.size()));
  }
  for (std::size_t k = 0; k < ctx.shots.size(); ++k) {
    const FeatureMap& f = ctx.shots[k].merged;
    const Mask m = resize_nearest(ctx.masks[k], static_cast<int>(f.height()), static_cast<int>(f.width()));
    Tensor mask_map({f.height(), f.width()});
    for (std::size_t i = 0; i < m.data.size(); ++i) mask_map.data[i] = m.data[i];
    const LocalPrototypeGrid local =
        config_.prototypes == PrototypeMode::Global ? LocalPrototypeGrid{} : make_local(f.data, mask_map);
    ctx.augmented.push_back(interact_(ctx.global, local_slot(ctx.global, local), f.data, mask_map));
    ctx.token_labels.insert(ctx.token_labels.end(), m.data.begin(), m.data.end());
  }
  return ctx;
}

ag::Var RiFeNet::head(const SupportContext& ctx, const ag::Var& augmented, AttentionTrace* trace) const {
  return classifier_(activation_(augmented, ctx.augmented, ctx.token_labels, trace));
}

QueryOutput RiFeNet::forward_query(const SupportContext& ctx, const Encoded& query, AttentionTrace* trace) const {
  QueryOutput out;
  const FeatureMap& f = query.merged;
  out.prior = support_prior(ctx, query, true);
  out.guidance = guidance_for(ctx, query);
  if (config_.prototypes != PrototypeMode::Global) out.local = make_local(f.data, out.guidance);
  out.augmented = interact_(ctx.global, local_slot(ctx.global, out.local), f.data, out.prior);
  out.logits = head(ctx, out.augmented, trace);
  if (config_.aux_head) out.aux_logits = aux_(out.augmented);
  return out;
}

std::vector<UnlabeledForward> RiFeNet::unlabeled_forward(const Episode& episode, const SupportContext& ctx,
                                                         const LocalPrototypeGrid& query_local) const {
  if (episode.phase != Phase::Train) throw ContractError("the unlabeled branch is training-only");
  const UnlabeledOptions& opt = config_.unlabeled;
  const std::size_t S = static_cast<std::size_t>(config_.input_size);
  std::vector<UnlabeledForward> out;
  for (std::size_t u = 0; u < episode.unlabeled.size(); ++u) {
    const Image& img = episode.unlabeled[u];
    const std::uint64_t seed = derive_seed(episode.seed, 200 + u);
    const Augmented weak = augment(img, nullptr, AugmentationPolicy::weak(), seed);
    const Augmented strong =
        augment(img, nullptr, AugmentationPolicy::strong(), opt.shared_geometry ? seed : derive_seed(seed, 1));

    auto branch = [&](const Augmented& view) {
      const Encoded e = encode(view.image);
      const Tensor prior = support_prior(ctx, e, true);
      LocalPrototypeGrid local = query_local;
      if (!opt.guide && config_.prototypes != PrototypeMode::Global)
        local = make_local(e.merged.data, guidance_for(ctx, e));
      const ag::Var augmented = interact_(ctx.global, local_slot(ctx.global, local), e.merged.data, prior);
      return upsample_logits(head(ctx, augmented, nullptr), S, S);
    };

    UnlabeledForward r;
    r.weak_geometry = weak.geometry;
    r.strong_geometry = strong.geometry;
    {
      // Pseudo-label side: no tape, so nothing can flow back through it.
      ag::NoGradGuard no_grad;
      r.weak_logits = branch(weak);
    }
    const FrameAlignment align = align_map(strong.geometry, weak.geometry);
    const ag::Var strong_logits = branch(strong);
    r.strong_logits = align.identity ? strong_logits : ag::spatial(strong_logits, align.map);

    const Tensor& wl = r.weak_logits.value();
    r.pseudo_label = logits_to_mask(wl);
    const std::size_t n = S * S;
    r.target = Tensor({n});
    r.weights = align.valid;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = 1.0 / (1.0 + std::exp(wl.data[i] - wl.data[n + i]));
      r.target.data[i] = opt.soft_labels ? p : r.pseudo_label.data[i];
      if (opt.confidence > 0 && std::max(p, 1.0 - p) < opt.confidence) r.weights[i] = 0.0;
    }
    r.loss = ag::dice_loss(foreground_probability(r.strong_logits), r.target, r.weights, kDiceSmooth);
    out.push_back(std::move(r));
  }
  return out;
}

double UnlabeledOptions::weight_at(int iteration) const {
  if (iteration < delay) return 0.0;
  if (rampup <= 0) return loss_weight;
  const double t = static_cast<double>(iteration - delay + 1) / rampup;
  return t >= 1.0 ? loss_weight : loss_weight * t;
}

TrainingForward RiFeNet::forward_train(const Episode& episode, AttentionTrace* trace) const {
  return forward_train(episode, config_.unlabeled.loss_weight, trace);
}

TrainingForward RiFeNet::forward_train(const Episode& episode, double beta, AttentionTrace* trace) const {
  if (episode.phase != Phase::Train) throw ContractError("forward_train needs a training episode");
  const std::size_t S = static_cast<std::size_t>(config_.input_size);
  TrainingForward out;
  const SupportContext ctx = encode_support(episode.support);
  const Encoded q = encode(episode.query.image);
  out.query = forward_query(ctx, q, trace);
  out.query_logits = upsample_logits(out.query.logits, S, S);
  ag::Var aux_up;
  if (out.query.aux_logits.defined()) aux_up = upsample_logits(out.query.aux_logits, S, S);
  const MainLoss main =
      main_loss(out.query_logits, episode.query.mask, aux_up.defined() ? &aux_up : nullptr, config_.aux_weight);
  out.main = main.total;

  out.unlabeled_views = unlabeled_forward(episode, ctx, out.query.local);
  if (out.unlabeled_views.empty()) {
    out.unlabeled = ag::constant(Tensor({1}, 0.0));
  } else {
    std::vector<ag::Var> losses;
    for (const auto& v : out.unlabeled_views) losses.push_back(v.loss);
    out.unlabeled = losses[0];
    for (std::size_t i = 1; i < losses.size(); ++i) out.unlabeled = ag::add(out.unlabeled, losses[i]);
    out.unlabeled = ag::scale(out.unlabeled, 1.0 / static_cast<double>(losses.size()));
  }
  out.final = final_loss(out.main, out.unlabeled, beta);
  out.report.main = out.main.item();
  out.report.aux = main.aux.defined() ? main.aux.item() : 0.0;
  out.report.unlabeled = out.unlabeled.item();
  out.report.beta = beta;
  out.report.final = out.final.item();
  return out;
}

Prediction RiFeNet::predict(std::span<const SamplePair> support, const Image& query) const {
  ag::NoGradGuard guard;
  const std::size_t S = static_cast<std::size_t>(config_.input_size);
  if (query.height != config_.input_size || query.width != config_.input_size)
    throw ContractError("query image must be " + std::to_string(S) + "x" + std::to_string(S));
  const SupportContext ctx = encode_support(support);
  const QueryOutput q = forward_query(ctx, encode(query), nullptr);
  Prediction p;
  p.logits = upsample_logits(q.logits, S, S).value();
  p.mask = logits_to_mask(p.logits);
  p.foreground = foreground_probability(ag::constant(p.logits)).value();
  p.prior = q.prior;
  p.guidance = q.guidance;
  if (q.local.grid.defined()) p.local_grid = q.local.grid.value();
  return p;
}

}  // namespace rifenet
