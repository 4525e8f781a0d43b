#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "rifenet/config.hpp"
#include "rifenet/errors.hpp"

using namespace rifenet;
namespace fs = std::filesystem;

TEST_CASE("defaults validate and carry the reference hyperparameters") {
  const RunConfig c;
  CHECK_NOTHROW(validate(c));
  CHECK(c.model.grid == 4);
  CHECK(c.model.unlabeled.count == 2);
  CHECK(c.model.unlabeled.loss_weight == 0.5);
  CHECK(c.model.unlabeled.guide);
  CHECK(c.model.unlabeled.confidence == 0.0);
  CHECK(c.model.backbone_frozen);
  CHECK(c.shots == 1);
}

TEST_CASE("serialise and parse round trip with a stable hash") {
  RunConfig c;
  c.fold = 2;
  c.shots = 5;
  c.model.prototypes = PrototypeMode::GlobalGlobal;
  c.model.guidance = GuidanceSource::Both;
  c.model.unlabeled.loss_weight = 0.25;
  c.optim.lr = 0.0031;
  c.seed = 123456789012345ULL;
  const std::string text = serialize(c);
  const RunConfig back = parse_config(text);
  CHECK(serialize(back) == text);
  CHECK(config_hash(back) == config_hash(c));
  CHECK(hash_hex(config_hash(c)).size() == 16);
  RunConfig other = c;
  other.optim.lr = 0.0032;
  CHECK(config_hash(other) != config_hash(c));
}

TEST_CASE("every key appears once in the canonical text") {
  const auto keys = config_keys();
  const std::set<std::string> unique(keys.begin(), keys.end());
  CHECK(unique.size() == keys.size());
  const std::string text = serialize(RunConfig{});
  for (const auto& k : keys) CHECK(text.find("\n" + k + " = ") != std::string::npos);
  for (const char* k : {"unlabeled.count", "unlabeled.guide", "unlabeled.loss_weight", "model.grid",
                        "model.merged_channels", "model.local_channels", "attention.layers", "optim.method",
                        "optim.lr", "optim.schedule", "optim.iterations", "train.seed", "model.input_size"})
    CHECK(unique.contains(k));
}

TEST_CASE("overrides and their errors") {
  RunConfig c;
  apply_override(c, "unlabeled.count=3");
  apply_override(c, " optim.lr = 0.5 ");
  apply_override(c, "model.prototypes=gp+lp-noCA");
  apply_override(c, "unlabeled.guide=off");
  CHECK(c.model.unlabeled.count == 3);
  CHECK(c.optim.lr == 0.5);
  CHECK(c.model.prototypes == PrototypeMode::GlobalLocalNoCA);
  CHECK_FALSE(c.model.unlabeled.guide);
  CHECK_THROWS_AS(apply_override(c, "nope=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "optim.lr"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "optim.lr=fast"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "unlabeled.guide=maybe"), ConfigError);
}

TEST_CASE("validation names the offending key") {
  auto reject = [](const char* assignment, const char* key) {
    RunConfig c;
    apply_override(c, assignment);
    try {
      validate(c);
      FAIL("accepted " << assignment);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(key) != std::string::npos);
    }
  };
  reject("shots=3", "shots");
  reject("fold=4", "fold");
  reject("model.input_size=30", "model.input_size");
  reject("attention.heads=7", "attention.heads");
  reject("unlabeled.count=-1", "unlabeled.count");
  reject("unlabeled.confidence=1", "unlabeled.confidence");
  reject("optim.method=lbfgs", "optim.method");
  reject("optim.accumulate=0", "optim.accumulate");
  reject("model.grid=64", "model.grid");
  RunConfig c;
  c.dataset = "imagenet";
  CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("config files") {
  const fs::path dir = fs::temp_directory_path() / "rifenet_test_cfg";
  fs::create_directories(dir);
  RunConfig c;
  c.model.unlabeled.count = 0;
  save_config(dir / "a.cfg", c);
  CHECK(serialize(load_config(dir / "a.cfg")) == serialize(c));
  std::ofstream(dir / "v2.cfg") << "config.version = 2\n";
  CHECK_THROWS_AS(load_config(dir / "v2.cfg"), ConfigError);
  std::ofstream(dir / "bad.cfg") << "# comment\n\nfold 2\n";
  CHECK_THROWS_AS(load_config(dir / "bad.cfg"), ConfigError);
  CHECK_THROWS_AS(load_config(dir / "missing.cfg"), ConfigError);
  // Partial files keep defaults for unspecified keys.
  std::ofstream(dir / "partial.cfg") << "shots = 5\n";
  const RunConfig p = load_config(dir / "partial.cfg");
  CHECK(p.shots == 5);
  CHECK(p.model.grid == 4);
}
