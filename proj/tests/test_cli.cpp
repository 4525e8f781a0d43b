#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

fs::path work() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / "rifenet_test_cli";
    fs::remove_all(p);
    fs::create_directories(p);
    std::ofstream(p / "tiny.cfg") << "config.version = 1\n"
                                     "data.synthetic_images = 40\n"
                                     "model.input_size = 32\n"
                                     "model.merged_channels = 16\n"
                                     "model.local_channels = 8\n"
                                     "model.grid = 2\n"
                                     "attention.layers = 1\n"
                                     "attention.heads = 2\n"
                                     "unlabeled.count = 1\n"
                                     "optim.iterations = 2\n"
                                     "eval.episodes = 2\n";
    return p;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(RIFENET_CLI) + " " + args + " > " + (work() / "out.txt").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string cfg() { return (work() / "tiny.cfg").string(); }

}  // namespace

TEST_CASE("usage errors exit with the config code") {
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("train") == 2);
  CHECK(run("evaluate --checkpoint x --fold 0 --shots 3") == 2);
  CHECK(run("--simd sse train --config " + cfg()) == 2);
}

TEST_CASE("config errors exit 2") {
  CHECK(run("train --config " + (work() / "missing.cfg").string()) == 2);
  CHECK(run("train --config " + cfg() + " --override no.such.key=1") == 2);
  CHECK(run("train --config " + cfg() + " --override shots=4") == 2);
  CHECK(run("ablate --config " + cfg() + " --axis depth --values 1") == 2);
}

TEST_CASE("data errors exit 3") {
  CHECK(run("train --config " + cfg() + " --override data.root=" + (work() / "nowhere").string()) == 3);
  CHECK(run("train --config " + cfg() + " --override dataset=pascal5i --override data.root=" +
            (work() / "nowhere").string()) == 3);
}

TEST_CASE("checkpoint errors exit 4") {
  CHECK(run("evaluate --checkpoint " + (work() / "absent.ckpt").string() + " --fold 0 --shots 1") == 4);
  std::ofstream(work() / "junk.ckpt") << "not a checkpoint\n";
  CHECK(run("evaluate --checkpoint " + (work() / "junk.ckpt").string() + " --fold 0 --shots 1") == 4);
}

TEST_CASE("train, evaluate, dump and synth succeed") {
  const fs::path ck = work() / "tiny.ckpt";
  REQUIRE(run("train --config " + cfg() + " --override train.checkpoint=" + ck.string() +
              " --override train.log=" + (work() / "log.jsonl").string()) == 0);
  CHECK(fs::exists(ck));
  CHECK(fs::file_size(work() / "log.jsonl") > 0);
  CHECK(run("evaluate --checkpoint " + ck.string() + " --fold 0 --shots 1 --episodes 2 --seeds 0,1") == 0);
  std::ifstream out(work() / "out.txt");
  const std::string text((std::istreambuf_iterator<char>(out)), {});
  CHECK(text.find("\"mIoU\"") != std::string::npos);
  CHECK(run("evaluate --checkpoint " + ck.string() + " --fold 0 --shots 1 --episodes 2 --seeds 0,x") == 2);
  CHECK(run("--simd scalar evaluate --checkpoint " + ck.string() + " --fold 1 --shots 5 --episodes 1") == 0);
  // Resume from a finished run is a no-op continuation.
  CHECK(run("train --config " + cfg() + " --resume " + ck.string()) == 0);
  // Mismatched architecture.
  CHECK(run("train --config " + cfg() + " --override model.grid=1 --resume " + ck.string()) == 4);

  const fs::path dump = work() / "dump";
  CHECK(run("episode-dump --config " + cfg() + " --out " + dump.string() + " --checkpoint " + ck.string()) == 0);
  for (const char* f : {"support_0.png", "query.png", "query_truth.png", "unlabeled_0_weak.png",
                        "unlabeled_0_strong.png", "prior_high.png", "guidance_low.png", "prediction.png",
                        "prototype_grid.png"})
    CHECK_MESSAGE(fs::exists(dump / f), f);

  const fs::path data = work() / "synth";
  CHECK(run("synth --out " + data.string() + " --images 24 --size 32") == 0);
  CHECK(fs::exists(data / "classlist.txt"));
  CHECK(fs::exists(data / "folds.txt"));
  CHECK(run("train --config " + cfg() + " --override data.root=" + data.string() + " --override optim.iterations=1") ==
        0);
}
