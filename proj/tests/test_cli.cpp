#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "test_util.hpp"
#include "uwhdn/datasets.hpp"
#include "uwhdn/image_io.hpp"
#include "uwhdn/training.hpp"

using namespace uwhdn;
using testutil::TempDir;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string& args, const testutil::TempDir& tmp,
                  const std::string& tag) {
  const auto out_path = tmp.path() / (tag + ".out");
  const auto err_path = tmp.path() / (tag + ".err");
  std::ostringstream cmd;
  cmd << UWHDN_CLI_PATH << " " << args << " > " << out_path << " 2> "
      << err_path;
  const int raw = std::system(cmd.str().c_str());
  RunResult r;
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  return r;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("--help exits 0 for every subcommand") {
  TempDir tmp("cli_help");
  CHECK(run_cli("--help", tmp, "help").exit_code == 0);
  for (const char* sub : {"prepare-data", "train", "restore", "evaluate",
                          "diagnose", "synthesize"}) {
    RunResult r = run_cli(std::string(sub) + " --help", tmp, std::string("help_") + sub);
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("--") != std::string::npos);
  }
}

TEST_CASE("unknown flags are rejected with exit 2") {
  TempDir tmp("cli_unknown");
  CHECK(run_cli("prepare-data --root x --frobnicate", tmp, "u1").exit_code == 2);
  CHECK(run_cli("not-a-subcommand", tmp, "u2").exit_code == 2);
}

TEST_CASE("prepare-data prints split sizes and is seed-stable") {
  TempDir tmp("cli_prepare");
  datasets::DegradationParams params;
  datasets::write_synthetic_dataset(tmp.path() / "data", 6, 24, params, 3);

  const std::string base = "prepare-data --root " +
                           (tmp.path() / "data").string() +
                           " --kind synthetic --seed 7 --out ";
  RunResult r1 = run_cli(base + (tmp.path() / "prep1").string(), tmp, "p1");
  CHECK(r1.exit_code == 0);
  CHECK(r1.out.find("underwater=3 clean=3") != std::string::npos);
  CHECK(std::filesystem::exists(tmp.path() / "prep1" / "manifest.jsonl"));
  CHECK(std::filesystem::exists(tmp.path() / "prep1" / "split.json"));

  RunResult r2 = run_cli(base + (tmp.path() / "prep2").string(), tmp, "p2");
  CHECK(r2.exit_code == 0);
  CHECK(read_bytes(tmp.path() / "prep1" / "split.json") ==
        read_bytes(tmp.path() / "prep2" / "split.json"));

  SUBCASE("missing root exits 2 and names the path") {
    RunResult bad = run_cli("prepare-data --root " +
                                (tmp.path() / "ghost").string() + " --out " +
                                (tmp.path() / "p3").string(),
                            tmp, "p3");
    CHECK(bad.exit_code == 2);
    CHECK(bad.err.find("ghost") != std::string::npos);
  }
}

TEST_CASE("train / restore / evaluate / diagnose round trip") {
  TempDir tmp("cli_train");
  datasets::DegradationParams params;
  datasets::write_synthetic_dataset(tmp.path() / "data", 8, 24, params, 5);
  REQUIRE(run_cli("prepare-data --root " + (tmp.path() / "data").string() +
                      " --seed 1 --out " + (tmp.path() / "prep").string(),
                  tmp, "prep")
              .exit_code == 0);

  SUBCASE("--epochs 0 is a validation error") {
    RunResult r = run_cli("train --data " + (tmp.path() / "prep").string() +
                              " --out " + (tmp.path() / "t0").string() +
                              " --epochs 0",
                          tmp, "t0");
    CHECK(r.exit_code == 2);
  }

  const std::string train_args =
      "train --data " + (tmp.path() / "prep").string() + " --out " +
      (tmp.path() / "run").string() +
      " --patch 16 --batch 2 --base-width 8 --max-steps 6 "
      "--checkpoint-every 3 --seed 2";
  RunResult tr = run_cli(train_args, tmp, "train");
  CHECK(tr.exit_code == 0);
  const auto ckpt = tmp.path() / "run" / "checkpoint-000006.uwhdn";
  REQUIRE(std::filesystem::exists(ckpt));
  CHECK(std::filesystem::exists(tmp.path() / "run" / "trace.csv"));

  SUBCASE("restore writes a content and a restored file per input") {
    RunResult re = run_cli("restore --checkpoint " + ckpt.string() +
                               " --input " +
                               (tmp.path() / "data" / "underwater").string() +
                               " --out " + (tmp.path() / "restored").string(),
                           tmp, "restore");
    CHECK(re.exit_code == 0);
    std::size_t files = 0;
    for (const auto& e :
         std::filesystem::directory_iterator(tmp.path() / "restored"))
      if (e.is_regular_file()) ++files;
    CHECK(files == 16);  // 8 inputs -> content + restored each
    CHECK(std::filesystem::exists(tmp.path() / "restored" /
                                  "img00000_content.png"));
    CHECK(std::filesystem::exists(tmp.path() / "restored" /
                                  "img00000_restored.png"));
  }

  SUBCASE("a fresh checkpoint has a zero restorer: restored == content") {
    // No training steps: G_C's output layer is zero-initialized.
    training::TrainConfig cfg;
    cfg.base_width = 8;
    cfg.patch = 16;
    cfg.batch = 2;
    cfg.seed = 9;
    auto state = training::make_state(cfg);
    const auto fresh = tmp.path() / "fresh.uwhdn";
    training::save_checkpoint(*state, cfg, fresh);

    RunResult re = run_cli(
        "restore --checkpoint " + fresh.string() + " --input " +
            (tmp.path() / "data" / "underwater" / "img00001.png").string() +
            " --out " + (tmp.path() / "identity").string(),
        tmp, "identity");
    CHECK(re.exit_code == 0);
    CHECK(read_bytes(tmp.path() / "identity" / "img00001_content.png") ==
          read_bytes(tmp.path() / "identity" / "img00001_restored.png"));
  }

  SUBCASE("evaluate emits a csv row per pair plus artifacts") {
    RunResult ev = run_cli(
        "evaluate --checkpoint " + ckpt.string() + " --manifest " +
            (tmp.path() / "prep" / "manifest.jsonl").string() + " --out " +
            (tmp.path() / "eval").string() + " --trace " +
            (tmp.path() / "run" / "trace.csv").string(),
        tmp, "eval");
    CHECK(ev.exit_code == 0);
    std::ifstream csv(tmp.path() / "eval" / "report.csv");
    std::string line;
    std::size_t rows = 0;
    std::getline(csv, line);  // header
    while (std::getline(csv, line))
      if (!line.empty()) ++rows;
    CHECK(rows == 8);
    CHECK(std::filesystem::exists(tmp.path() / "eval" / "summary.txt"));
    CHECK(std::filesystem::exists(tmp.path() / "eval" / "loss_curves.png"));
    CHECK(std::filesystem::exists(tmp.path() / "eval" / "grid.png"));
  }

  SUBCASE("diagnose prints the response ratio") {
    RunResult di = run_cli("diagnose --checkpoint " + ckpt.string() +
                               " --manifest " +
                               (tmp.path() / "prep" / "manifest.jsonl").string(),
                           tmp, "diag");
    CHECK(di.exit_code == 0);
    CHECK(di.out.find("ratio=") != std::string::npos);
    CHECK(di.out.find("clean_response=") != std::string::npos);
  }

  SUBCASE("resume refuses a mismatched architecture") {
    RunResult r = run_cli("train --data " + (tmp.path() / "prep").string() +
                              " --out " + (tmp.path() / "bad").string() +
                              " --patch 16 --batch 2 --base-width 16 "
                              "--max-steps 7 --resume " + ckpt.string(),
                          tmp, "mismatch");
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("architecture") != std::string::npos);
  }
}

TEST_CASE("synthesize: identity parameters reproduce the inputs exactly") {
  TempDir tmp("cli_synth");
  // Write two clean images with our own encoder.
  Rng rng(8);
  std::filesystem::create_directories(tmp.path() / "clean");
  for (int i = 0; i < 2; ++i) {
    Tensor img = datasets::synthetic_clean_image(24, 24, rng);
    save_image(img, tmp.path() / "clean" /
                        ("in" + std::to_string(i) + ".png"));
  }
  RunResult r = run_cli(
      "synthesize --input " + (tmp.path() / "clean").string() +
          " --attenuation 1,1,1 --background 0,0,0 --t-min 1 --t-max 1 "
          "--out " + (tmp.path() / "out").string(),
      tmp, "synth");
  CHECK(r.exit_code == 0);
  for (int i = 0; i < 2; ++i) {
    const std::string name = "in" + std::to_string(i) + ".png";
    CHECK(read_bytes(tmp.path() / "clean" / name) ==
          read_bytes(tmp.path() / "out" / name));
  }

  SUBCASE("generate mode writes paired directories") {
    RunResult g = run_cli("synthesize --generate 3 --size 24 --seed 4 --out " +
                              (tmp.path() / "gen").string(),
                          tmp, "gen");
    CHECK(g.exit_code == 0);
    std::size_t clean_count = 0, uw_count = 0;
    for (const auto& e :
         std::filesystem::directory_iterator(tmp.path() / "gen" / "clean"))
      if (e.is_regular_file()) ++clean_count;
    for (const auto& e : std::filesystem::directory_iterator(tmp.path() /
                                                             "gen" /
                                                             "underwater"))
      if (e.is_regular_file()) ++uw_count;
    CHECK(clean_count == 3);
    CHECK(uw_count == 3);
  }
  SUBCASE("invalid attenuation is a validation error") {
    RunResult bad = run_cli(
        "synthesize --generate 1 --attenuation 0.9,0.5,0.5 --out " +
            (tmp.path() / "bad").string(),
        tmp, "bad");
    CHECK(bad.exit_code == 2);
  }
}

TEST_CASE("UWHDN_OUT_ROOT provides the default output root") {
  TempDir tmp("cli_envroot");
  datasets::DegradationParams params;
  datasets::write_synthetic_dataset(tmp.path() / "data", 4, 24, params, 6);
  const std::string cmd = "UWHDN_OUT_ROOT=" + (tmp.path() / "root").string() +
                          " " + UWHDN_CLI_PATH + " prepare-data --root " +
                          (tmp.path() / "data").string() + " > " +
                          (tmp.path() / "env.out").string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(raw) == 0);
  CHECK(std::filesystem::exists(tmp.path() / "root" / "prepare-data" /
                                "manifest.jsonl"));
}
