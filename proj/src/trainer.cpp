#include "rifenet/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "rifenet/errors.hpp"
#include "rifenet/seeding.hpp"
#include "rifenet/synthetic.hpp"

namespace rifenet {

Optimizer::Optimizer(const OptimizerConfig& cfg, nn::ParamStore& store) : cfg_(cfg), store_(&store) {
  for (const auto& p : store.params()) {
    first_.emplace_back(p.var.shape(), 0.0);
    second_.emplace_back(cfg.method == "adamw" ? Tensor(p.var.shape(), 0.0) : Tensor());
  }
}

double Optimizer::learning_rate(int iteration) const {
  double lr = cfg_.lr;
  if (cfg_.warmup > 0 && iteration < cfg_.warmup) lr *= static_cast<double>(iteration + 1) / cfg_.warmup;
  if (cfg_.schedule == "constant" || cfg_.iterations <= 0) return lr;
  const double t = std::min(1.0, static_cast<double>(iteration) / cfg_.iterations);
  return lr * std::pow(1.0 - t, cfg_.power);
}

void Optimizer::step(int iteration, double grad_scale) {
  const double lr = learning_rate(iteration);
  steps_ += 1;
  auto& params = store_->params();
  if (cfg_.clip_norm > 0) {
    double sq = 0.0;
    for (const auto& p : params)
      if (p.trainable && p.var.has_grad())
        for (double g : p.var.grad().data) sq += g * g;
    const double norm = grad_scale * std::sqrt(sq);
    if (norm > cfg_.clip_norm) grad_scale *= cfg_.clip_norm / norm;
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.trainable || !p.var.has_grad()) continue;
    double* w = p.var.mutable_value().ptr();
    const double* g = p.var.grad().ptr();
    double* m = first_[i].ptr();
    const std::size_t n = p.var.size();
    if (cfg_.method == "sgd") {
      for (std::size_t j = 0; j < n; ++j) {
        m[j] = cfg_.momentum * m[j] + grad_scale * g[j] + cfg_.weight_decay * w[j];
        w[j] -= lr * m[j];
      }
    } else {
      constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      double* v = second_[i].ptr();
      const double c1 = 1.0 - std::pow(b1, steps_), c2 = 1.0 - std::pow(b2, steps_);
      for (std::size_t j = 0; j < n; ++j) {
        const double gj = grad_scale * g[j];
        m[j] = b1 * m[j] + (1 - b1) * gj;
        v[j] = b2 * v[j] + (1 - b2) * gj * gj;
        w[j] -= lr * (m[j] / c1 / (std::sqrt(v[j] / c2) + eps) + cfg_.weight_decay * w[j]);
      }
    }
  }
}

std::vector<NamedTensor> Optimizer::state() const {
  std::vector<NamedTensor> out;
  out.push_back({"optimizer.steps", Tensor({1}, steps_)});
  const auto& params = store_->params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back({"optimizer.m." + params[i].name, first_[i]});
    if (!second_[i].data.empty()) out.push_back({"optimizer.v." + params[i].name, second_[i]});
  }
  return out;
}

void Optimizer::load_state(const std::vector<NamedTensor>& state) {
  auto find = [&](const std::string& name) -> const Tensor* {
    for (const auto& t : state)
      if (t.name == name) return &t.tensor;
    return nullptr;
  };
  const Tensor* steps = find("optimizer.steps");
  if (!steps) throw CheckpointError("checkpoint lacks optimizer state");
  steps_ = steps->data.at(0);
  const auto& params = store_->params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor* m = find("optimizer.m." + params[i].name);
    if (!m || m->shape != first_[i].shape) throw CheckpointError("optimizer state for '" + params[i].name + "' missing or misshapen");
    first_[i] = *m;
    if (!second_[i].data.empty()) {
      const Tensor* v = find("optimizer.v." + params[i].name);
      if (!v || v->shape != second_[i].shape) throw CheckpointError("optimizer state for '" + params[i].name + "' missing or misshapen");
      second_[i] = *v;
    }
  }
}

LoadedData load_data(const RunConfig& cfg) {
  LoadedData d;
  const DatasetKind kind = parse_dataset(cfg.dataset);
  d.fold = make_folds(kind, cfg.fold);
  if (kind == DatasetKind::Synthetic && cfg.data_root.empty())
    d.dataset = synthetic_dataset(cfg.synthetic_images, cfg.model.input_size, cfg.synthetic_seed);
  else if (cfg.data_root.empty())
    throw ConfigError("data.root is required for dataset '" + cfg.dataset + "'");
  else
    d.dataset = load_dataset(cfg.data_root, kind, cfg.model.input_size);
  return d;
}

SamplerOptions sampler_options(const RunConfig& cfg, Phase phase) {
  SamplerOptions o;
  o.class_consistent_unlabeled = cfg.class_consistent_unlabeled;
  o.augment_labeled = phase == Phase::Train && cfg.augment_labeled;
  return o;
}

namespace {

bool masks_survive(const Episode& ep, int feature_size) {
  for (const auto& s : ep.support)
    if (resize_nearest(s.mask, feature_size, feature_size).count_nonzero() == 0) return false;
  return true;
}

// Coarsest plane a support mask is resampled to (the prior-mask level).
int feature_size(const ModelConfig& m) { return m.input_size / TinyBackbone::kStrides[3]; }

}  // namespace

Episode sample_usable_episode(const Dataset& ds, const FoldSpec& fold, Phase phase, int shots, int unlabeled,
                              std::uint64_t seed, const SamplerOptions& options, int fsize) {
  for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
    Episode ep = sample_episode(ds, fold, phase, shots, unlabeled, attempt == 0 ? seed : derive_seed(seed, 0x5a + attempt),
                                options);
    if (masks_survive(ep, fsize)) return ep;
  }
  throw SamplingError("no episode with usable support masks after " + std::to_string(options.max_attempts) + " attempts");
}

Trainer::Trainer(const RunConfig& cfg, const Dataset& dataset, const FoldSpec& fold)
    : cfg_(cfg), dataset_(&dataset), fold_(fold) {
  verify_fold_hygiene(fold_);
  validate(cfg_);
  model_ = std::make_unique<RiFeNet>(cfg_.model);
  model_->set_normalization(dataset.norm);
  optimizer_ = std::make_unique<Optimizer>(cfg_.optim, model_->params());
}

std::uint64_t Trainer::episode_seed(int iteration, int slot) const {
  return derive_seed(derive_seed(cfg_.seed, static_cast<std::uint64_t>(iteration)), static_cast<std::uint64_t>(slot));
}

LossReport Trainer::step() {
  model_->params().zero_grad();
  const int acc = cfg_.optim.accumulate;
  LossReport avg;
  avg.beta = cfg_.model.unlabeled.weight_at(iteration_);
  const SamplerOptions opts = sampler_options(cfg_, Phase::Train);
  for (int a = 0; a < acc; ++a) {
    const Episode ep = sample_usable_episode(*dataset_, fold_, Phase::Train, cfg_.shots, cfg_.model.unlabeled.count,
                                             episode_seed(iteration_, a), opts, feature_size(cfg_.model));
    const TrainingForward fwd = model_->forward_train(ep, avg.beta);
    ag::backward(fwd.final);
    avg.main += fwd.report.main / acc;
    avg.aux += fwd.report.aux / acc;
    avg.unlabeled += fwd.report.unlabeled / acc;
    avg.final += fwd.report.final / acc;
  }
  optimizer_->step(iteration_, 1.0 / acc);
  ++iteration_;
  history_.push_back(avg);
  return avg;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.config = cfg_;
  ck.manifest.backbone = cfg_.model.backbone;
  ck.manifest.merged_channels = cfg_.model.merged_channels;
  ck.manifest.grid = cfg_.model.grid;
  ck.manifest.config_hash = hash_hex(config_hash(cfg_));
  ck.manifest.iteration = iteration_;
  ck.params = snapshot(model_->params());
  ck.optimizer = optimizer_->state();
  return ck;
}

void Trainer::resume(const Checkpoint& ckpt) {
  check_compatible(ckpt.manifest, cfg_);
  restore(model_->params(), ckpt.params);
  optimizer_->load_state(ckpt.optimizer);
  iteration_ = ckpt.manifest.iteration;
}

void Trainer::run(std::ostream* log) {
  const int total = cfg_.optim.iterations;
  const int window = cfg_.val_every > 0 ? cfg_.val_every : std::max(1, total);
  LossReport sum;
  int in_window = 0;
  while (iteration_ < total) {
    const double lr = optimizer_->learning_rate(iteration_);
    const LossReport r = step();
    sum.main += r.main;
    sum.aux += r.aux;
    sum.unlabeled += r.unlabeled;
    sum.final += r.final;
    ++in_window;
    if (log) {
      nlohmann::json j{{"iter", iteration_}, {"lr", lr},          {"main", r.main}, {"aux", r.aux},
                       {"unlabeled", r.unlabeled}, {"final", r.final}, {"beta", r.beta}};
      *log << j.dump() << '\n';
    }
    if (iteration_ % window == 0 || iteration_ == total) {
      if (log) {
        nlohmann::json j{{"epoch", (iteration_ + window - 1) / window},
                         {"fold", cfg_.fold},
                         {"shots", cfg_.shots},
                         {"main", sum.main / in_window},
                         {"aux", sum.aux / in_window},
                         {"unlabeled", sum.unlabeled / in_window},
                         {"final", sum.final / in_window}};
        if (cfg_.val_every > 0) {
          const EvalReport v = validate(*model_, *dataset_, fold_, cfg_.shots, cfg_.val_episodes, cfg_.seed);
          j["mIoU"] = v.miou;
          j["FB-IoU"] = v.fb_iou;
        }
        *log << j.dump() << '\n';
        log->flush();
      }
      sum = {};
      in_window = 0;
    }
    if (!cfg_.checkpoint_path.empty() && cfg_.checkpoint_every > 0 && iteration_ % cfg_.checkpoint_every == 0)
      save_checkpoint(cfg_.checkpoint_path, checkpoint());
  }
  if (!cfg_.checkpoint_path.empty()) save_checkpoint(cfg_.checkpoint_path, checkpoint());
}

namespace {

EvalReport evaluate_classes(const RiFeNet& model, const Dataset& dataset, const FoldSpec& fold, int shots,
                            int episodes, const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("at least one evaluation seed is required");
  if (episodes < 1) throw ConfigError("episodes must be >= 1");
  EvalReport r;
  r.fold = fold.fold_index;
  r.shots = shots;
  r.episodes = episodes;
  SamplerOptions opts;
  opts.augment_labeled = false;
  const int fsize = feature_size(model.config());
  const std::uint64_t before = model.backbone().forward_count();
  for (std::uint64_t seed : seeds) {
    MetricAccumulator acc(fold.test_classes, fold.fold_index);
    for (int e = 0; e < episodes; ++e) {
      const Episode ep = sample_usable_episode(dataset, fold, Phase::Test, shots, 0,
                                               derive_seed(derive_seed(seed, 0xe7a1), static_cast<std::uint64_t>(e)),
                                               opts, fsize);
      const Prediction p = model.predict(ep.support, ep.query.image);
      acc.update(p.mask, ep.query.mask, ep.class_id);
    }
    r.seeds.push_back({seed, acc.miou(), acc.fb_iou(), acc.miou_episode_mean()});
    r.miou += acc.miou() / static_cast<double>(seeds.size());
    r.fb_iou += acc.fb_iou() / static_cast<double>(seeds.size());
  }
  r.forwards_per_episode = static_cast<double>(model.backbone().forward_count() - before) /
                           static_cast<double>(episodes * seeds.size());
  return r;
}

}  // namespace

EvalReport evaluate(const RiFeNet& model, const Dataset& dataset, const FoldSpec& fold, int shots, int episodes,
                    const std::vector<std::uint64_t>& seeds) {
  return evaluate_classes(model, dataset, fold, shots, episodes, seeds);
}

EvalReport validate(const RiFeNet& model, const Dataset& dataset, const FoldSpec& fold, int shots, int episodes,
                    std::uint64_t seed) {
  FoldSpec held_in = fold;
  held_in.test_classes = fold.train_classes;
  return evaluate_classes(model, dataset, held_in, shots, episodes, {derive_seed(seed, 0x7a1)});
}

std::string report_json(const EvalReport& r) {
  nlohmann::json j{{"fold", r.fold},     {"shots", r.shots},   {"episodes", r.episodes},
                   {"mIoU", r.miou},     {"FB-IoU", r.fb_iou}, {"backbone_forwards_per_episode", r.forwards_per_episode}};
  j["seeds"] = nlohmann::json::array();
  for (const auto& s : r.seeds)
    j["seeds"].push_back({{"seed", s.seed}, {"mIoU", s.miou}, {"FB-IoU", s.fb_iou}, {"mIoU_episode_mean", s.miou_episode_mean}});
  return j.dump(2);
}

AblationAxis parse_axis(const std::string& s) {
  if (s == "unlabeled_count") return AblationAxis::UnlabeledCount;
  if (s == "guide") return AblationAxis::Guide;
  if (s == "prototypes") return AblationAxis::Prototypes;
  if (s == "beta") return AblationAxis::Beta;
  throw ConfigError("unknown ablation axis '" + s + "' (unlabeled_count, guide, prototypes, beta)");
}

std::string axis_name(AblationAxis a) {
  switch (a) {
    case AblationAxis::UnlabeledCount: return "unlabeled_count";
    case AblationAxis::Guide: return "guide";
    case AblationAxis::Prototypes: return "prototypes";
    case AblationAxis::Beta: return "beta";
  }
  return "?";
}

void apply_axis(RunConfig& cfg, AblationAxis axis, const std::string& value) {
  switch (axis) {
    case AblationAxis::UnlabeledCount: set_value(cfg, "unlabeled.count", value); break;
    case AblationAxis::Guide: set_value(cfg, "unlabeled.guide", value); break;
    case AblationAxis::Prototypes: set_value(cfg, "model.prototypes", value); break;
    case AblationAxis::Beta: set_value(cfg, "unlabeled.loss_weight", value); break;
  }
}

std::vector<AblationRow> run_ablation(const RunConfig& base, AblationAxis axis, const std::vector<std::string>& values,
                                      const std::vector<std::uint64_t>& eval_seeds, std::ostream* log) {
  if (values.empty()) throw ConfigError("ablation needs at least one value");
  // Validate every point before spending compute on any of them.
  std::vector<RunConfig> configs;
  for (const auto& v : values) {
    RunConfig c = base;
    apply_axis(c, axis, v);
    c.checkpoint_path.clear();
    validate(c);
    configs.push_back(std::move(c));
  }
  const LoadedData data = load_data(base);
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    Trainer t(configs[i], data.dataset, data.fold);
    t.run(log);
    const EvalReport r = evaluate(t.model(), data.dataset, data.fold, configs[i].shots, configs[i].eval_episodes, eval_seeds);
    AblationRow row{values[i], r.miou, r.fb_iou, t.history().empty() ? 0.0 : t.history().back().final};
    rows.push_back(row);
  }
  return rows;
}

std::string ablation_csv(AblationAxis axis, const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << axis_name(axis) << ",mIoU,FB-IoU,final_loss\n" << std::fixed << std::setprecision(4);
  for (const auto& r : rows) os << r.value << ',' << 100.0 * r.miou << ',' << 100.0 * r.fb_iou << ',' << r.final_loss << '\n';
  return os.str();
}

}  // namespace rifenet
