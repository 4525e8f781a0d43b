#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "model_fixture.hpp"
#include <json.hpp>
#include "rifenet/checkpoint.hpp"
#include "rifenet/errors.hpp"
#include "rifenet/trainer.hpp"

using namespace rifenet;
namespace fs = std::filesystem;

namespace {

RunConfig small_run(int iterations = 4) {
  RunConfig c;
  c.synthetic_images = 40;
  c.model = fixture::small_model(32, 1);
  c.optim.iterations = iterations;
  c.optim.method = "adamw";
  c.optim.lr = 1e-3;
  c.optim.clip_norm = 1.0;
  c.eval_episodes = 4;
  c.val_episodes = 2;
  return c;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("rifenet_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<double> flat_params(const RiFeNet& m) {
  std::vector<double> out;
  for (const auto& p : m.params().params()) out.insert(out.end(), p.var.value().data.begin(), p.var.value().data.end());
  return out;
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  OptimizerConfig o;
  o.lr = 0.1;
  o.iterations = 100;
  o.power = 0.9;
  nn::ParamStore store;
  Optimizer opt(o, store);
  CHECK(opt.learning_rate(0) == doctest::Approx(0.1));
  CHECK(opt.learning_rate(50) == doctest::Approx(0.1 * std::pow(0.5, 0.9)));
  CHECK(opt.learning_rate(100) == 0.0);
  o.warmup = 10;
  Optimizer warm(o, store);
  CHECK(warm.learning_rate(0) == doctest::Approx(0.01));
  CHECK(warm.learning_rate(4) == doctest::Approx(0.05 * std::pow(1 - 0.04, 0.9)));
  o.schedule = "constant";
  o.warmup = 0;
  CHECK(Optimizer(o, store).learning_rate(70) == 0.1);
}

TEST_CASE("sgd step matches the momentum update by hand") {
  nn::ParamStore store;
  ag::Var w = store.add("w", Tensor({2}, std::vector<double>{1.0, -2.0}));
  OptimizerConfig o;
  o.lr = 0.1;
  o.momentum = 0.5;
  o.weight_decay = 0.01;
  o.schedule = "constant";
  Optimizer opt(o, store);
  w.grad() = Tensor({2}, std::vector<double>{0.3, 0.4});
  opt.step(0);
  // m = g + wd*w, w -= lr*m
  const double m0 = 0.3 + 0.01 * 1.0, m1 = 0.4 + 0.01 * -2.0;
  CHECK(w.value().data[0] == doctest::Approx(1.0 - 0.1 * m0));
  CHECK(w.value().data[1] == doctest::Approx(-2.0 - 0.1 * m1));
  const double w0 = w.value().data[0];
  opt.step(1);
  const double m0b = 0.5 * m0 + 0.3 + 0.01 * w0;
  CHECK(w.value().data[0] == doctest::Approx(w0 - 0.1 * m0b));
}

TEST_CASE("gradient clipping bounds the update") {
  nn::ParamStore store;
  ag::Var w = store.add("w", Tensor({2}, 0.0));
  OptimizerConfig o;
  o.lr = 1.0;
  o.momentum = 0.0;
  o.weight_decay = 0.0;
  o.schedule = "constant";
  o.clip_norm = 1.0;
  Optimizer opt(o, store);
  w.grad() = Tensor({2}, std::vector<double>{30.0, 40.0});
  opt.step(0);
  CHECK(w.value().data[0] == doctest::Approx(-0.6));
  CHECK(w.value().data[1] == doctest::Approx(-0.8));
}

TEST_CASE("trainer refuses a leaking fold before doing anything") {
  const RunConfig c = small_run();
  const LoadedData d = load_data(c);
  FoldSpec bad = d.fold;
  bad.train_classes.insert(*bad.test_classes.begin());
  CHECK_THROWS_AS(Trainer(c, d.dataset, bad), ConfigError);
  RunConfig invalid = c;
  invalid.shots = 2;
  CHECK_THROWS_AS(Trainer(invalid, d.dataset, d.fold), ConfigError);
}

TEST_CASE("training steps are deterministic and log JSON lines") {
  const RunConfig c = small_run(3);
  const LoadedData d = load_data(c);
  Trainer a(c, d.dataset, d.fold), b(c, d.dataset, d.fold);
  std::ostringstream log;
  a.run(&log);
  b.run(nullptr);
  CHECK(flat_params(a.model()) == flat_params(b.model()));
  CHECK(a.iteration() == 3);
  std::istringstream in(log.str());
  std::string line;
  int iters = 0, epochs = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j.contains("iter")) {
      ++iters;
      CHECK(j["final"].get<double>() == doctest::Approx(j["main"].get<double>() + j["beta"].get<double>() * j["unlabeled"].get<double>()));
    } else {
      ++epochs;
      CHECK(j.contains("fold"));
      CHECK(j.contains("shots"));
    }
  }
  CHECK(iters == 3);
  CHECK(epochs == 1);
}

TEST_CASE("checkpoint round trip and exact resume") {
  const fs::path dir = scratch("ckpt");
  const RunConfig c = small_run(4);
  const LoadedData d = load_data(c);

  Trainer straight(c, d.dataset, d.fold);
  straight.run();

  Trainer first(c, d.dataset, d.fold);
  first.step();
  first.step();
  save_checkpoint(dir / "half.ckpt", first.checkpoint());
  const Checkpoint loaded = load_checkpoint(dir / "half.ckpt");
  CHECK(loaded.manifest.iteration == 2);
  CHECK(loaded.manifest.grid == c.model.grid);
  CHECK(loaded.manifest.merged_channels == c.model.merged_channels);
  CHECK(loaded.manifest.config_hash == hash_hex(config_hash(c)));
  CHECK(serialize(loaded.config) == serialize(c));

  Trainer second(c, d.dataset, d.fold);
  second.resume(loaded);
  CHECK(flat_params(second.model()) == flat_params(first.model()));
  second.run();
  CHECK(second.iteration() == 4);
  CHECK(flat_params(second.model()) == flat_params(straight.model()));
}

TEST_CASE("checkpoint errors") {
  const fs::path dir = scratch("ckpt_err");
  const RunConfig c = small_run(1);
  const LoadedData d = load_data(c);
  Trainer t(c, d.dataset, d.fold);
  save_checkpoint(dir / "ok.ckpt", t.checkpoint());

  CHECK_THROWS_AS(load_checkpoint(dir / "absent.ckpt"), CheckpointError);
  std::ofstream(dir / "junk.ckpt") << "hello\n{}\n";
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.ckpt"), CheckpointError);

  // Truncated payload.
  {
    std::ifstream in(dir / "ok.ckpt", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 100);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), CheckpointError);

  Checkpoint ck = load_checkpoint(dir / "ok.ckpt");
  RunConfig other = c;
  other.model.grid = 1;
  CHECK_THROWS_AS(check_compatible(ck.manifest, other), CheckpointError);
  ck.params.pop_back();
  nn::ParamStore& store = t.model().params();
  CHECK_THROWS_AS(restore(store, ck.params), CheckpointError);
  Checkpoint ck2 = load_checkpoint(dir / "ok.ckpt");
  ck2.params[0].tensor.shape.push_back(1);
  CHECK_THROWS_AS(restore(store, ck2.params), CheckpointError);
}

TEST_CASE("evaluation runs K+1 forwards per episode on held-out classes") {
  const RunConfig c = small_run(1);
  const LoadedData d = load_data(c);
  const RiFeNet model(c.model);
  for (int shots : {1, 5}) {
    const EvalReport r = evaluate(model, d.dataset, d.fold, shots, 3, {0, 1});
    CHECK(r.forwards_per_episode == static_cast<double>(shots + 1));
    CHECK(r.seeds.size() == 2);
    CHECK(r.miou >= 0.0);
    CHECK(r.miou <= 1.0);
  }
  const EvalReport again = evaluate(model, d.dataset, d.fold, 1, 3, {0, 1});
  CHECK(again.miou == evaluate(model, d.dataset, d.fold, 1, 3, {0, 1}).miou);
  CHECK_THROWS_AS(evaluate(model, d.dataset, d.fold, 1, 3, {}), ConfigError);
  const auto j = nlohmann::json::parse(report_json(again));
  CHECK(j.contains("mIoU"));
  CHECK(j["seeds"].size() == 2);
}

TEST_CASE("ablation axes and table") {
  for (const char* a : {"unlabeled_count", "guide", "prototypes", "beta"}) CHECK(axis_name(parse_axis(a)) == a);
  CHECK_THROWS_AS(parse_axis("depth"), ConfigError);
  RunConfig c;
  apply_axis(c, AblationAxis::Prototypes, "gp");
  CHECK(c.model.prototypes == PrototypeMode::Global);
  apply_axis(c, AblationAxis::Beta, "0");
  CHECK(c.model.unlabeled.loss_weight == 0.0);
  // A bad value anywhere stops the sweep before training.
  CHECK_THROWS_AS(run_ablation(small_run(1), AblationAxis::UnlabeledCount, {"0", "-3"}, {0}), ConfigError);

  RunConfig tiny = small_run(1);
  tiny.eval_episodes = 2;
  const auto rows = run_ablation(tiny, AblationAxis::UnlabeledCount, {"0", "1"}, {0});
  REQUIRE(rows.size() == 2);
  const std::string csv = ablation_csv(AblationAxis::UnlabeledCount, rows);
  CHECK(csv.rfind("unlabeled_count,mIoU,FB-IoU,final_loss\n0,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}
