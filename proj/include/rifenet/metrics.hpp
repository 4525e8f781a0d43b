#pragma once
// Episodic segmentation metrics with fold-pooled counters.

#include <cstdint>
#include <map>
#include <set>

#include "rifenet/image.hpp"

namespace rifenet {

struct IoUCounter {
  std::uint64_t intersection = 0;
  std::uint64_t union_ = 0;

  double iou() const { return union_ == 0 ? 1.0 : static_cast<double>(intersection) / static_cast<double>(union_); }
};

class MetricAccumulator {
 public:
  MetricAccumulator() = default;
  explicit MetricAccumulator(std::set<int> classes, int fold = 0);

  // Binary masks of equal shape. Throws ContractError for a class outside
  // the fold's test set or a shape mismatch.
  void update(const Mask& prediction, const Mask& truth, int class_id);
  // Associative and commutative; both sides must cover the same classes.
  void merge(const MetricAccumulator& other);

  // Mean over classes with at least one episode of pooled I / pooled U.
  double miou() const;
  // Same classes, but each class averages its per-episode IoUs.
  double miou_episode_mean() const;
  // Mean of pooled foreground IoU and pooled background IoU.
  double fb_iou() const;

  double class_iou(int class_id) const;
  const IoUCounter& counter(int class_id) const;
  std::uint64_t episodes() const { return episodes_; }
  int fold() const { return fold_; }

 private:
  struct ClassStats {
    IoUCounter pooled;
    double episode_iou_sum = 0.0;
    std::uint64_t episodes = 0;
  };
  int fold_ = 0;
  std::map<int, ClassStats> classes_;
  IoUCounter foreground_, background_;
  std::uint64_t episodes_ = 0;
};

}  // namespace rifenet
