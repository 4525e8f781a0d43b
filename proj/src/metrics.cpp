#include "rifenet/metrics.hpp"

#include "rifenet/errors.hpp"

namespace rifenet {

MetricAccumulator::MetricAccumulator(std::set<int> classes, int fold) : fold_(fold) {
  for (int c : classes) classes_[c] = {};
}

void MetricAccumulator::update(const Mask& prediction, const Mask& truth, int class_id) {
  auto it = classes_.find(class_id);
  if (it == classes_.end()) throw ContractError("class " + std::to_string(class_id) + " is not a test class of this fold");
  if (prediction.height != truth.height || prediction.width != truth.width)
    throw ContractError("prediction and truth shapes differ");
  IoUCounter fg, bg;
  for (std::size_t i = 0; i < truth.data.size(); ++i) {
    const bool p = prediction.data[i] != 0, t = truth.data[i] != 0;
    fg.intersection += p && t;
    fg.union_ += p || t;
    bg.intersection += !p && !t;
    bg.union_ += !p || !t;
  }
  ClassStats& cs = it->second;
  cs.pooled.intersection += fg.intersection;
  cs.pooled.union_ += fg.union_;
  cs.episode_iou_sum += fg.iou();
  ++cs.episodes;
  foreground_.intersection += fg.intersection;
  foreground_.union_ += fg.union_;
  background_.intersection += bg.intersection;
  background_.union_ += bg.union_;
  ++episodes_;
}

void MetricAccumulator::merge(const MetricAccumulator& other) {
  for (const auto& [c, s] : other.classes_) {
    auto it = classes_.find(c);
    if (it == classes_.end()) throw ContractError("merge: class " + std::to_string(c) + " unknown to this accumulator");
    it->second.pooled.intersection += s.pooled.intersection;
    it->second.pooled.union_ += s.pooled.union_;
    it->second.episode_iou_sum += s.episode_iou_sum;
    it->second.episodes += s.episodes;
  }
  foreground_.intersection += other.foreground_.intersection;
  foreground_.union_ += other.foreground_.union_;
  background_.intersection += other.background_.intersection;
  background_.union_ += other.background_.union_;
  episodes_ += other.episodes_;
}

double MetricAccumulator::miou() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& [c, s] : classes_)
    if (s.episodes) {
      sum += s.pooled.iou();
      ++n;
    }
  return n ? sum / n : 0.0;
}

double MetricAccumulator::miou_episode_mean() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& [c, s] : classes_)
    if (s.episodes) {
      sum += s.episode_iou_sum / static_cast<double>(s.episodes);
      ++n;
    }
  return n ? sum / n : 0.0;
}

double MetricAccumulator::fb_iou() const { return 0.5 * (foreground_.iou() + background_.iou()); }

double MetricAccumulator::class_iou(int class_id) const { return counter(class_id).iou(); }

const IoUCounter& MetricAccumulator::counter(int class_id) const {
  auto it = classes_.find(class_id);
  if (it == classes_.end()) throw ContractError("class " + std::to_string(class_id) + " is not a test class of this fold");
  return it->second.pooled;
}

}  // namespace rifenet
