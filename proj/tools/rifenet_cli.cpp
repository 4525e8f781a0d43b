// rifenet: train, evaluate, dump episodes and run ablation sweeps.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "rifenet/checkpoint.hpp"
#include "rifenet/config.hpp"
#include "rifenet/errors.hpp"
#include "rifenet/seeding.hpp"
#include "rifenet/simd.hpp"
#include "rifenet/synthetic.hpp"
#include "rifenet/trainer.hpp"

namespace fs = std::filesystem;
using namespace rifenet;

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t pos = 0;
      out.push_back(std::stoull(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad seed '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("--seeds needs at least one value");
  return out;
}

RunConfig config_with_overrides(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig cfg = load_config(path);
  for (const auto& o : overrides) apply_override(cfg, o);
  validate(cfg);
  return cfg;
}

// Log sink: the configured file, or stdout.
struct LogSink {
  std::unique_ptr<std::ofstream> file;
  std::ostream* stream = &std::cout;

  explicit LogSink(const std::string& path) {
    if (path.empty()) return;
    file = std::make_unique<std::ofstream>(path);
    if (!*file) throw ConfigError("cannot open log file " + path);
    stream = file.get();
  }
};

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides, const std::string& resume) {
  const RunConfig cfg = config_with_overrides(config_path, overrides);
  const LoadedData data = load_data(cfg);
  Trainer trainer(cfg, data.dataset, data.fold);
  if (!resume.empty()) trainer.resume(load_checkpoint(resume));
  LogSink log(cfg.log_path);
  trainer.run(log.stream);
  if (cfg.checkpoint_path.empty()) std::cerr << "note: train.checkpoint is empty, no checkpoint written\n";
  const EvalReport r = evaluate(trainer.model(), data.dataset, data.fold, cfg.shots, cfg.eval_episodes, {cfg.seed});
  std::cout << report_json(r) << '\n';
  return kExitOk;
}

int cmd_evaluate(const std::string& ckpt_path, int fold, int shots, int episodes, const std::string& seeds) {
  const Checkpoint ck = load_checkpoint(ckpt_path);
  RunConfig cfg = ck.config;
  cfg.fold = fold;
  cfg.shots = shots;
  validate(cfg);
  check_compatible(ck.manifest, cfg);
  const LoadedData data = load_data(cfg);
  RiFeNet model(cfg.model);
  model.set_normalization(data.dataset.norm);
  restore(model.params(), ck.params);
  const EvalReport r = evaluate(model, data.dataset, data.fold, shots, episodes, parse_seeds(seeds));
  std::cout << report_json(r) << '\n';
  return kExitOk;
}

void save_map(const fs::path& path, const Tensor& map, int size) { save_image(path, heatmap(map, size, size)); }

int cmd_dump(const std::string& config_path, const std::vector<std::string>& overrides, const std::string& out_dir,
             const std::string& ckpt_path, std::uint64_t seed) {
  const RunConfig cfg = config_with_overrides(config_path, overrides);
  const LoadedData data = load_data(cfg);
  RiFeNet model(cfg.model);
  model.set_normalization(data.dataset.norm);
  if (!ckpt_path.empty()) {
    const Checkpoint ck = load_checkpoint(ckpt_path);
    check_compatible(ck.manifest, cfg);
    restore(model.params(), ck.params);
  }
  const int S = cfg.model.input_size;
  const Episode ep = sample_usable_episode(data.dataset, data.fold, Phase::Train, cfg.shots, cfg.model.unlabeled.count,
                                           seed, sampler_options(cfg, Phase::Train), S / 8);
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  const float green[3] = {0.1f, 0.9f, 0.2f}, red[3] = {0.95f, 0.1f, 0.1f};
  for (std::size_t k = 0; k < ep.support.size(); ++k)
    save_image(dir / ("support_" + std::to_string(k) + ".png"), overlay(ep.support[k].image, ep.support[k].mask, green));
  save_image(dir / "query.png", ep.query.image);
  save_image(dir / "query_truth.png", overlay(ep.query.image, ep.query.mask, green));
  for (std::size_t u = 0; u < ep.unlabeled.size(); ++u) {
    const std::uint64_t s = derive_seed(ep.seed, 200 + u);
    save_image(dir / ("unlabeled_" + std::to_string(u) + "_weak.png"),
               augment(ep.unlabeled[u], nullptr, AugmentationPolicy::weak(), s).image);
    save_image(dir / ("unlabeled_" + std::to_string(u) + "_strong.png"),
               augment(ep.unlabeled[u], nullptr, AugmentationPolicy::strong(), s).image);
  }
  const Prediction p = model.predict(ep.support, ep.query.image);
  save_map(dir / "prior_high.png", p.prior, S);
  save_map(dir / "guidance_low.png", p.guidance, S);
  save_image(dir / "prediction.png", overlay(ep.query.image, p.mask, red));
  if (!p.local_grid.data.empty()) {
    // Local prototype grid: per-cell norm, tiled to the image.
    const std::size_t c = p.local_grid.dim(0), m = p.local_grid.dim(1);
    Tensor norms({m, m}, 0.0);
    double mx = 0.0;
    for (std::size_t i = 0; i < m * m; ++i) {
      for (std::size_t ch = 0; ch < c; ++ch) norms.data[i] += p.local_grid.data[ch * m * m + i] * p.local_grid.data[ch * m * m + i];
      norms.data[i] = std::sqrt(norms.data[i]);
      mx = std::max(mx, norms.data[i]);
    }
    if (mx > 0)
      for (double& v : norms.data) v /= mx;
    Tensor tiled({static_cast<std::size_t>(S), static_cast<std::size_t>(S)});
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x)
        tiled.data[static_cast<std::size_t>(y) * S + x] =
            norms.data[(static_cast<std::size_t>(y) * m / S) * m + static_cast<std::size_t>(x) * m / S];
    save_map(dir / "prototype_grid.png", tiled, S);
  }
  std::cout << "episode class " << ep.class_id << ", seed " << ep.seed << ", written to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_ablate(const std::string& config_path, const std::vector<std::string>& overrides, const std::string& axis,
               const std::vector<std::string>& values, const std::string& seeds, const std::string& out) {
  const RunConfig cfg = config_with_overrides(config_path, overrides);
  const AblationAxis a = parse_axis(axis);
  LogSink log(cfg.log_path);
  const auto rows = run_ablation(cfg, a, values, parse_seeds(seeds), cfg.log_path.empty() ? nullptr : log.stream);
  const std::string csv = ablation_csv(a, rows);
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw ConfigError("cannot write " + out);
    f << csv;
  }
  std::cout << csv;
  return kExitOk;
}

int cmd_synth(const std::string& out_dir, int images, int size, std::uint64_t seed) {
  save_dataset(synthetic_dataset(images, size, seed), out_dir);
  std::cout << images << " images written to " << out_dir << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RiFeNet few-shot segmentation"};
  app.require_subcommand(1);
  std::string simd;
  app.add_option("--simd", simd, "kernel set: scalar or avx2 (default: best available)");

  std::string config, ckpt, out, resume, seeds = "0", axis;
  std::vector<std::string> overrides, values;
  int fold = 0, shots = 1, episodes = 1000, images = 200, size = 64;
  std::uint64_t seed = 0;

  auto* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", config, "config file")->required();
  train->add_option("--override", overrides, "key=value overrides");
  train->add_option("--resume", resume, "checkpoint to resume from");

  auto* eval = app.add_subcommand("evaluate", "evaluate a checkpoint on held-out classes");
  eval->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  eval->add_option("--fold", fold, "fold index")->required();
  eval->add_option("--shots", shots, "support shots")->check(CLI::IsMember({1, 5}))->default_val(1);
  eval->add_option("--episodes", episodes, "test episodes per seed")->default_val(1000);
  eval->add_option("--seeds", seeds, "comma-separated seeds")->default_val("0");

  auto* dump = app.add_subcommand("episode-dump", "render one episode and its intermediate maps as PNGs");
  dump->add_option("--config", config, "config file")->required();
  dump->add_option("--out", out, "output directory")->required();
  dump->add_option("--override", overrides, "key=value overrides");
  dump->add_option("--checkpoint", ckpt, "optional trained checkpoint");
  dump->add_option("--seed", seed, "episode seed");

  auto* ablate = app.add_subcommand("ablate", "train and evaluate one run per value on an axis");
  ablate->add_option("--config", config, "base config file")->required();
  ablate->add_option("--axis", axis, "unlabeled_count | guide | prototypes | beta")->required();
  ablate->add_option("--values", values, "axis values")->required();
  ablate->add_option("--override", overrides, "key=value overrides");
  ablate->add_option("--seeds", seeds, "comma-separated evaluation seeds")->default_val("0");
  ablate->add_option("--out", out, "CSV output path");

  auto* synth = app.add_subcommand("synth", "write the synthetic dataset in the on-disk layout");
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--images", images, "image count")->default_val(200);
  synth->add_option("--size", size, "image side")->default_val(64);
  synth->add_option("--seed", seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (simd == "scalar")
      simd::force_isa(simd::Isa::Scalar);
    else if (simd == "avx2" && !simd::force_isa(simd::Isa::Avx2))
      throw ConfigError("AVX2 kernels are not available on this machine");
    else if (!simd.empty() && simd != "avx2")
      throw ConfigError("--simd must be scalar or avx2");

    if (*train) return cmd_train(config, overrides, resume);
    if (*eval) return cmd_evaluate(ckpt, fold, shots, episodes, seeds);
    if (*dump) return cmd_dump(config, overrides, out, ckpt, seed);
    if (*ablate) return cmd_ablate(config, overrides, axis, values, seeds, out);
    if (*synth) return cmd_synth(out, images, size, seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
