#pragma once
// Episodic training loop, evaluation and ablation sweeps.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "rifenet/checkpoint.hpp"
#include "rifenet/config.hpp"
#include "rifenet/data.hpp"
#include "rifenet/metrics.hpp"
#include "rifenet/model.hpp"

namespace rifenet {

// SGD with momentum or AdamW over the trainable parameters of a store.
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& cfg, nn::ParamStore& store);

  double learning_rate(int iteration) const;
  // Applies the accumulated gradients, scaled by grad_scale, then leaves them
  // in place (callers zero them).
  void step(int iteration, double grad_scale = 1.0);

  std::vector<NamedTensor> state() const;
  void load_state(const std::vector<NamedTensor>& state);

 private:
  OptimizerConfig cfg_;
  nn::ParamStore* store_;
  std::vector<Tensor> first_, second_;
  double steps_ = 0;
};

struct LoadedData {
  Dataset dataset;
  FoldSpec fold;
};

// Synthetic data is generated in memory unless data.root is set. Throws
// DataError when files are missing, ConfigError for a bad fold.
LoadedData load_data(const RunConfig& cfg);

SamplerOptions sampler_options(const RunConfig& cfg, Phase phase);

// Samples an episode, moving to the next derived seed when a support mask
// vanishes at feature resolution.
Episode sample_usable_episode(const Dataset& ds, const FoldSpec& fold, Phase phase, int shots, int unlabeled,
                              std::uint64_t seed, const SamplerOptions& options, int feature_size);

class Trainer {
 public:
  // Fold hygiene is verified here, before anything else happens.
  Trainer(const RunConfig& cfg, const Dataset& dataset, const FoldSpec& fold);

  // One optimizer step over optim.accumulate episodes.
  LossReport step();
  // Runs to optim.iterations, logging JSON lines to `log` when non-null.
  void run(std::ostream* log = nullptr);

  Checkpoint checkpoint() const;
  void resume(const Checkpoint& ckpt);

  RiFeNet& model() { return *model_; }
  const RiFeNet& model() const { return *model_; }
  int iteration() const { return iteration_; }
  const std::vector<LossReport>& history() const { return history_; }
  std::uint64_t episode_seed(int iteration, int slot) const;

 private:
  RunConfig cfg_;
  const Dataset* dataset_;
  FoldSpec fold_;
  std::unique_ptr<RiFeNet> model_;
  std::unique_ptr<Optimizer> optimizer_;
  int iteration_ = 0;
  std::vector<LossReport> history_;
};

struct SeedReport {
  std::uint64_t seed = 0;
  double miou = 0.0;
  double fb_iou = 0.0;
  double miou_episode_mean = 0.0;
};

struct EvalReport {
  int fold = 0;
  int shots = 1;
  int episodes = 0;
  std::vector<SeedReport> seeds;
  double miou = 0.0;    // mean over seeds
  double fb_iou = 0.0;  // mean over seeds
  // Backbone forwards per evaluated episode (K + 1 expected).
  double forwards_per_episode = 0.0;
};

// Test-phase episodes from the fold's held-out classes; the model parameters
// are only read.
EvalReport evaluate(const RiFeNet& model, const Dataset& dataset, const FoldSpec& fold, int shots, int episodes,
                    const std::vector<std::uint64_t>& seeds);
// Same protocol over the fold's training classes.
EvalReport validate(const RiFeNet& model, const Dataset& dataset, const FoldSpec& fold, int shots, int episodes,
                    std::uint64_t seed);

std::string report_json(const EvalReport& r);

enum class AblationAxis { UnlabeledCount, Guide, Prototypes, Beta };
AblationAxis parse_axis(const std::string& s);
std::string axis_name(AblationAxis a);
// Config key and value text for one point on the axis.
void apply_axis(RunConfig& cfg, AblationAxis axis, const std::string& value);

struct AblationRow {
  std::string value;
  double miou = 0.0;
  double fb_iou = 0.0;
  double final_loss = 0.0;
};

std::vector<AblationRow> run_ablation(const RunConfig& base, AblationAxis axis, const std::vector<std::string>& values,
                                      const std::vector<std::uint64_t>& eval_seeds, std::ostream* log = nullptr);
std::string ablation_csv(AblationAxis axis, const std::vector<AblationRow>& rows);

}  // namespace rifenet
