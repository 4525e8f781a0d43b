#include "rifenet/data.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "rifenet/errors.hpp"
#include "rifenet/seeding.hpp"

namespace rifenet {

DatasetKind parse_dataset(std::string_view name) {
  if (name == "pascal5i") return DatasetKind::Pascal5i;
  if (name == "coco20i") return DatasetKind::Coco20i;
  if (name == "synthetic") return DatasetKind::Synthetic;
  throw ConfigError("unknown dataset '" + std::string(name) + "' (expected pascal5i, coco20i or synthetic)");
}

std::string_view dataset_name(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::Pascal5i:
      return "pascal5i";
    case DatasetKind::Coco20i:
      return "coco20i";
    case DatasetKind::Synthetic:
      return "synthetic";
  }
  return "?";
}

int class_count(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::Pascal5i:
      return 20;
    case DatasetKind::Coco20i:
      return 80;
    case DatasetKind::Synthetic:
      return 4;
  }
  return 0;
}

int fold_count(DatasetKind) { return 4; }

FoldSpec make_folds(DatasetKind dataset, int fold_index) {
  if (fold_index < 0 || fold_index >= fold_count(dataset))
    throw ConfigError("fold index " + std::to_string(fold_index) + " out of range for " +
                      std::string(dataset_name(dataset)));
  FoldSpec f;
  f.dataset = dataset;
  f.fold_index = fold_index;
  const int n = class_count(dataset);
  switch (dataset) {
    case DatasetKind::Pascal5i:
      for (int c = 5 * fold_index + 1; c <= 5 * fold_index + 5; ++c) f.test_classes.insert(c);
      break;
    case DatasetKind::Coco20i:
      for (int c = fold_index + 1; c <= n; c += 4) f.test_classes.insert(c);
      break;
    case DatasetKind::Synthetic: {
      static constexpr int held_out[4] = {4, 3, 2, 1};  // circle, cross, triangle, square
      f.test_classes.insert(held_out[fold_index]);
      break;
    }
  }
  for (int c = 1; c <= n; ++c)
    if (!f.test_classes.contains(c)) f.train_classes.insert(c);
  return f;
}

void verify_fold_hygiene(const FoldSpec& fold) {
  for (int c : fold.test_classes)
    if (fold.train_classes.contains(c))
      throw ConfigError("fold " + std::to_string(fold.fold_index) + ": class " + std::to_string(c) +
                        " is in both train and test sets");
  const int n = class_count(fold.dataset);
  if (static_cast<int>(fold.train_classes.size() + fold.test_classes.size()) != n)
    throw ConfigError("fold " + std::to_string(fold.fold_index) + " does not cover the class inventory");
  for (int c = 1; c <= n; ++c)
    if (!fold.train_classes.contains(c) && !fold.test_classes.contains(c))
      throw ConfigError("fold " + std::to_string(fold.fold_index) + " is missing class " + std::to_string(c));
}

void write_fold_file(const std::filesystem::path& path, DatasetKind dataset) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write fold file " + path.string());
  out << "# rifenet-folds v1 " << dataset_name(dataset) << '\n';
  for (int i = 0; i < fold_count(dataset); ++i) {
    const FoldSpec f = make_folds(dataset, i);
    out << "fold=" << i << " test=";
    bool first = true;
    for (int c : f.test_classes) {
      out << (first ? "" : ",") << c;
      first = false;
    }
    out << '\n';
  }
}

std::vector<FoldSpec> read_fold_file(const std::filesystem::path& path, DatasetKind dataset) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read fold file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("# rifenet-folds v1", 0) != 0)
    throw DataError("fold file " + path.string() + " lacks the 'rifenet-folds v1' header");
  std::vector<FoldSpec> folds;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string fold_tok, test_tok;
    ls >> fold_tok >> test_tok;
    if (fold_tok.rfind("fold=", 0) != 0 || test_tok.rfind("test=", 0) != 0)
      throw DataError("malformed fold line: " + line);
    FoldSpec f;
    f.dataset = dataset;
    f.fold_index = std::stoi(fold_tok.substr(5));
    std::istringstream cs(test_tok.substr(5));
    std::string c;
    while (std::getline(cs, c, ',')) f.test_classes.insert(std::stoi(c));
    for (int k = 1; k <= class_count(dataset); ++k)
      if (!f.test_classes.contains(k)) f.train_classes.insert(k);
    verify_fold_hygiene(f);
    folds.push_back(std::move(f));
  }
  return folds;
}

void Dataset::build_index(std::size_t min_foreground) {
  by_class.clear();
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::map<int, std::size_t> counts;
    for (std::uint8_t v : items[i].labels.data)
      if (v != 0 && v != 255) ++counts[v];
    for (const auto& [c, n] : counts)
      if (n >= min_foreground) by_class[c].push_back(i);
  }
}

Dataset load_dataset(const std::filesystem::path& root, DatasetKind kind, int image_size,
                     std::size_t min_foreground) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DataError("dataset root " + root.string() + " does not exist");
  Dataset ds;
  ds.kind = kind;
  ds.norm = kind == DatasetKind::Synthetic ? kSyntheticNorm : kImageNetNorm;
  std::ifstream cl(root / "classlist.txt");
  if (!cl) throw DataError("missing classlist.txt in " + root.string());
  for (std::string line; std::getline(cl, line);)
    if (!line.empty()) ds.class_names.push_back(line);

  std::vector<fs::path> masks;
  if (!fs::is_directory(root / "masks")) throw DataError("missing masks/ in " + root.string());
  for (const auto& e : fs::directory_iterator(root / "masks"))
    if (e.path().extension() == ".png") masks.push_back(e.path());
  std::sort(masks.begin(), masks.end());
  for (const auto& mp : masks) {
    const std::string id = mp.stem().string();
    fs::path ip = root / "images" / (id + ".jpg");
    if (!fs::exists(ip)) ip = root / "images" / (id + ".png");
    if (!fs::exists(ip)) throw DataError("no image for mask " + mp.string());
    LabeledImage item;
    item.id = id;
    item.image = resize_bilinear(load_image(ip), image_size, image_size);
    item.labels = resize_nearest(load_raster(mp), image_size, image_size);
    ds.items.push_back(std::move(item));
  }
  if (ds.items.empty()) throw DataError("dataset at " + root.string() + " is empty");
  ds.build_index(min_foreground);
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  std::ofstream cl(root / "classlist.txt");
  for (const auto& n : dataset.class_names) cl << n << '\n';
  for (const auto& item : dataset.items) {
    save_image(root / "images" / (item.id + ".png"), item.image);
    save_raster(root / "masks" / (item.id + ".png"), item.labels);
  }
  write_fold_file(root / "folds.txt", dataset.kind);
}

std::vector<std::size_t> Episode::identity() const {
  std::vector<std::size_t> ids;
  for (const auto& s : support) ids.push_back(s.source);
  ids.push_back(query.source);
  ids.insert(ids.end(), unlabeled_sources.begin(), unlabeled_sources.end());
  ids.push_back(static_cast<std::size_t>(class_id));
  return ids;
}

namespace {

SamplePair make_pair(const Dataset& ds, std::size_t source, int class_id, bool do_augment,
                     const SamplerOptions& options, std::uint64_t seed) {
  const LabeledImage& item = ds.items[source];
  SamplePair p;
  p.class_id = class_id;
  p.source = source;
  p.image = item.image;
  p.mask = binary_mask(item.labels, class_id);
  p.geometry = GeomRecord::identity(item.image.height, item.image.width);
  if (!do_augment) return p;
  for (std::uint64_t retry = 0; retry < 8; ++retry) {
    Augmented a = augment(item.image, &p.mask, options.labeled_policy, derive_seed(seed, retry));
    if (a.mask->count_nonzero() >= options.min_foreground) {
      p.image = std::move(a.image);
      p.mask = std::move(*a.mask);
      p.geometry = a.geometry;
      return p;
    }
  }
  return p;  // unaugmented pair already satisfies the foreground floor
}

}  // namespace

Episode sample_episode(const Dataset& dataset, const FoldSpec& fold, Phase phase, int shots, int unlabeled,
                       std::uint64_t seed, const SamplerOptions& options) {
  if (shots < 1) throw ConfigError("shots must be >= 1");
  if (unlabeled < 0) throw ConfigError("unlabeled count must be >= 0");
  if (phase == Phase::Test && unlabeled > 0) throw ConfigError("unlabeled images are excluded at test time");
  const std::set<int>& pool = phase == Phase::Train ? fold.train_classes : fold.test_classes;
  if (pool.empty()) throw SamplingError("empty class pool");
  const std::vector<int> classes(pool.begin(), pool.end());

  std::mt19937_64 rng(derive_seed(seed, 1));
  std::mt19937_64 urng(derive_seed(seed, 2));
  for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
    const int c = classes[std::uniform_int_distribution<std::size_t>(0, classes.size() - 1)(rng)];
    auto it = dataset.by_class.find(c);
    if (it == dataset.by_class.end() || it->second.size() < static_cast<std::size_t>(shots + 1)) continue;
    std::vector<std::size_t> cand = it->second;
    for (int i = 0; i <= shots; ++i) {
      const std::size_t j = std::uniform_int_distribution<std::size_t>(i, cand.size() - 1)(rng);
      std::swap(cand[i], cand[j]);
    }
    const bool aug = phase == Phase::Train && options.augment_labeled;
    Episode ep;
    ep.class_id = c;
    ep.seed = seed;
    ep.phase = phase;
    ep.query = make_pair(dataset, cand[0], c, aug, options, derive_seed(seed, 100));
    for (int k = 0; k < shots; ++k)
      ep.support.push_back(make_pair(dataset, cand[k + 1], c, aug, options, derive_seed(seed, 101 + k)));

    if (unlabeled > 0) {
      std::vector<std::size_t> upool;
      if (options.class_consistent_unlabeled) {
        upool = it->second;
      } else {
        std::set<std::size_t> all;
        for (int tc : fold.train_classes)
          if (auto jt = dataset.by_class.find(tc); jt != dataset.by_class.end()) all.insert(jt->second.begin(), jt->second.end());
        upool.assign(all.begin(), all.end());
      }
      std::erase_if(upool, [&](std::size_t s) { return std::find(cand.begin(), cand.begin() + shots + 1, s) != cand.begin() + shots + 1; });
      if (upool.size() < static_cast<std::size_t>(unlabeled)) continue;
      for (int i = 0; i < unlabeled; ++i) {
        const std::size_t j = std::uniform_int_distribution<std::size_t>(i, upool.size() - 1)(urng);
        std::swap(upool[i], upool[j]);
        ep.unlabeled_sources.push_back(upool[i]);
        ep.unlabeled.push_back(dataset.items[upool[i]].image);
      }
    }
    return ep;
  }
  throw SamplingError("could not sample an episode after " + std::to_string(options.max_attempts) + " attempts");
}

}  // namespace rifenet
