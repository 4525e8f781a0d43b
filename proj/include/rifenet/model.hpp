#pragma once
// The full few-shot segmenter: support, query and (training-only) unlabeled
// branches over one shared parameter set.

#include <span>
#include <string>
#include <vector>

#include "rifenet/attention.hpp"
#include "rifenet/augment.hpp"
#include "rifenet/backbone.hpp"
#include "rifenet/data.hpp"
#include "rifenet/interaction.hpp"
#include "rifenet/losses.hpp"
#include "rifenet/prototypes.hpp"

namespace rifenet {

// Which prototypes feed the interaction block.
//   gp            global only (local slot zero)
//   gp+gp         global, plus the squeezed global in the local slot
//   gp+lp-noCA    global + local grid without channel attention
//   gp+lp-CA      global + local grid with channel attention
enum class PrototypeMode { Global, GlobalGlobal, GlobalLocalNoCA, GlobalLocalCA };
PrototypeMode parse_prototype_mode(const std::string& s);
std::string prototype_mode_name(PrototypeMode m);

// Map that weights query features before local pooling.
enum class GuidanceSource { Low, High, Both };
GuidanceSource parse_guidance(const std::string& s);
std::string guidance_name(GuidanceSource g);

struct UnlabeledOptions {
  int count = 2;
  // Guide unlabeled views with the query's local prototypes; otherwise each
  // view generates its own.
  bool guide = true;
  double loss_weight = 0.5;
  bool soft_labels = false;
  // Pixels whose weak-view confidence is below this are ignored (0 = off).
  double confidence = 0.0;
  // Weak and strong views draw their geometry from one seed.
  bool shared_geometry = true;
  // The weight stays 0 for `delay` iterations, then grows linearly to
  // loss_weight over `rampup` more. Both 0 means the constant weight.
  int delay = 0;
  int rampup = 0;

  double weight_at(int iteration) const;
};

struct ModelConfig {
  std::string backbone = "tiny";
  int input_size = 64;
  bool backbone_frozen = true;
  std::size_t merged_channels = 64;
  std::size_t local_channels = 32;
  std::size_t grid = 4;
  std::size_t se_ratio = 4;
  AttentionConfig attention{2, 8, 0, true};
  PrototypeMode prototypes = PrototypeMode::GlobalLocalCA;
  GuidanceSource guidance = GuidanceSource::Low;
  bool aux_head = true;
  double aux_weight = 1.0;
  UnlabeledOptions unlabeled;
  std::uint64_t seed = 0;
};

struct Encoded {
  BackboneBundle bundle;
  FeatureMap merged;
};

// Everything the query and unlabeled branches borrow from the support set.
struct SupportContext {
  std::vector<Encoded> shots;
  std::vector<Mask> masks;
  ag::Var global;                        // P_s {Cm}, mean over shots
  std::vector<ag::Var> augmented;        // F*_s per shot
  std::vector<std::uint8_t> token_labels;
};

struct QueryOutput {
  ag::Var logits;      // {2, h, w} at feature resolution
  ag::Var aux_logits;  // undefined when the aux head is off
  ag::Var augmented;   // F*_q
  LocalPrototypeGrid local;
  Tensor prior;        // {h, w}
  Tensor guidance;     // {h, w}
};

struct UnlabeledForward {
  ag::Var weak_logits;    // image resolution, weak frame
  ag::Var strong_logits;  // image resolution, resampled into the weak frame
  Mask pseudo_label;      // argmax of weak_logits, no gradient
  Tensor target;          // dice target: pseudo label, or weak probability when soft
  std::vector<double> weights;  // valid and confident pixels
  GeomRecord weak_geometry, strong_geometry;
  ag::Var loss;
};

struct TrainingForward {
  ag::Var final;
  ag::Var main;
  ag::Var unlabeled;
  ag::Var query_logits;  // image resolution
  LossReport report;
  QueryOutput query;
  std::vector<UnlabeledForward> unlabeled_views;
};

struct Prediction {
  Tensor logits;      // {2, S, S}
  Tensor foreground;  // {S*S}
  Mask mask;
  Tensor prior;
  Tensor guidance;
  Tensor local_grid;  // {C', m, m}
};

class RiFeNet {
 public:
  explicit RiFeNet(const ModelConfig& config);
  RiFeNet(const RiFeNet&) = delete;
  RiFeNet& operator=(const RiFeNet&) = delete;

  const ModelConfig& config() const { return config_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  const TinyBackbone& backbone() const { return backbone_; }
  TinyBackbone& backbone() { return backbone_; }
  LocalPrototypeGenerator& local_generator() { return local_; }
  void set_normalization(const Normalization& norm) { norm_ = norm; }

  // Builds the loss graph for a training episode.
  TrainingForward forward_train(const Episode& episode, AttentionTrace* trace = nullptr) const;
  // Same, with an explicit unlabeled weight instead of the configured one.
  TrainingForward forward_train(const Episode& episode, double beta, AttentionTrace* trace = nullptr) const;

  // Inference: support pairs and one query image, nothing else. Runs K + 1
  // backbone forwards and records no gradient history.
  Prediction predict(std::span<const SamplePair> support, const Image& query) const;

  SupportContext encode_support(std::span<const SamplePair> support) const;
  QueryOutput forward_query(const SupportContext& ctx, const Encoded& query, AttentionTrace* trace = nullptr) const;
  // Weak/strong consistency pairs for the episode's unlabeled images; query_local
  // are the query's local prototypes. Training phase only.
  std::vector<UnlabeledForward> unlabeled_forward(const Episode& episode, const SupportContext& ctx,
                                                  const LocalPrototypeGrid& query_local) const;

  Encoded encode(const Image& image) const;

 private:
  Tensor resize_map(const Tensor& map, std::size_t h, std::size_t w) const;
  Tensor support_prior(const SupportContext& ctx, const Encoded& target, bool high) const;
  Tensor guidance_for(const SupportContext& ctx, const Encoded& target) const;
  ag::Var local_slot(const ag::Var& global, const LocalPrototypeGrid& grid) const;
  LocalPrototypeGrid make_local(const ag::Var& features, const Tensor& guidance) const;
  ag::Var head(const SupportContext& ctx, const ag::Var& augmented, AttentionTrace* trace) const;

  ModelConfig config_;
  Normalization norm_ = kSyntheticNorm;
  nn::ParamStore store_;
  TinyBackbone backbone_;
  FeatureMerge merge_;
  LocalPrototypeGenerator local_;
  PrototypeInteraction interact_;
  FeatureActivation activation_;
  ClassifierHead classifier_;
  nn::Conv1x1 aux_;
};

}  // namespace rifenet
