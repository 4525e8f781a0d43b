#pragma once
// Dataset registry, class-disjoint folds and the episodic sampler.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "rifenet/augment.hpp"
#include "rifenet/image.hpp"

namespace rifenet {

enum class DatasetKind { Pascal5i, Coco20i, Synthetic };

DatasetKind parse_dataset(std::string_view name);
std::string_view dataset_name(DatasetKind kind);
int class_count(DatasetKind kind);
int fold_count(DatasetKind kind);

struct FoldSpec {
  DatasetKind dataset = DatasetKind::Synthetic;
  int fold_index = 0;
  std::set<int> train_classes;
  std::set<int> test_classes;
};

// PASCAL-5i: fold i tests classes 5i+1..5i+5. COCO-20i: fold i tests
// {4k+i+1 : k = 0..19}. Synthetic: one held-out shape per fold, circle first.
FoldSpec make_folds(DatasetKind dataset, int fold_index);
// Throws ConfigError unless train/test are disjoint and cover every class.
void verify_fold_hygiene(const FoldSpec& fold);

// Versioned text file, one fold per line: "fold=<i> test=<c,c,...>".
void write_fold_file(const std::filesystem::path& path, DatasetKind dataset);
std::vector<FoldSpec> read_fold_file(const std::filesystem::path& path, DatasetKind dataset);

struct LabeledImage {
  std::string id;
  Image image;
  LabelMap labels;  // class index per pixel, 0 background, 255 ignore
};

struct Dataset {
  DatasetKind kind = DatasetKind::Synthetic;
  std::vector<std::string> class_names;  // class id c is class_names[c - 1]
  std::vector<LabeledImage> items;
  Normalization norm = kSyntheticNorm;
  // class id -> items holding at least min_foreground pixels of that class.
  std::map<int, std::vector<std::size_t>> by_class;

  void build_index(std::size_t min_foreground);
};

// Reads images/<id>.{png,jpg}, masks/<id>.png and classlist.txt, resizing to
// image_size x image_size (bilinear images, nearest masks).
Dataset load_dataset(const std::filesystem::path& root, DatasetKind kind, int image_size,
                     std::size_t min_foreground = 16);
void save_dataset(const Dataset& dataset, const std::filesystem::path& root);

struct SamplePair {
  Image image;
  Mask mask;
  int class_id = 0;
  std::size_t source = 0;  // index into Dataset::items
  GeomRecord geometry;
};

enum class Phase { Train, Test };

struct Episode {
  std::vector<SamplePair> support;
  SamplePair query;
  std::vector<Image> unlabeled;  // masks are not retained
  std::vector<std::size_t> unlabeled_sources;
  int class_id = 0;
  std::uint64_t seed = 0;
  Phase phase = Phase::Train;

  std::vector<std::size_t> identity() const;
};

struct SamplerOptions {
  bool class_consistent_unlabeled = true;
  std::size_t min_foreground = 16;
  // Weak geometry on support/query during training.
  bool augment_labeled = true;
  AugmentationPolicy labeled_policy = AugmentationPolicy::weak();
  int max_attempts = 64;
};

// Deterministic in (dataset, fold, phase, shots, unlabeled, seed). Support and
// query come from one random stream and unlabeled picks from another, so the
// labeled part of an episode does not depend on the unlabeled count.
Episode sample_episode(const Dataset& dataset, const FoldSpec& fold, Phase phase, int shots, int unlabeled,
                       std::uint64_t seed, const SamplerOptions& options = {});

}  // namespace rifenet
