#include <fstream>

#include "doctest.h"
#include "test_util.hpp"
#include "uwhdn/error.hpp"
#include "uwhdn/training.hpp"

using namespace uwhdn;
using namespace uwhdn::training;
using testutil::random_tensor;
using testutil::TempDir;

namespace {

TrainConfig desk_config() {
  TrainConfig cfg;
  cfg.base_width = 8;
  cfg.patch = 16;
  cfg.batch = 2;
  cfg.epochs = 100;
  cfg.seed = 5;
  cfg.checkpoint_every = 5;
  return cfg;
}

datasets::UnpairedBatch toy_batch(std::size_t patch, std::size_t batch,
                                  std::uint64_t seed) {
  Rng rng(seed);
  datasets::UnpairedBatch b;
  b.underwater = random_tensor({batch, 3, patch, patch}, rng, 0.0, 1.0);
  b.clean = random_tensor({batch, 3, patch, patch}, rng, 0.0, 1.0);
  return b;
}

std::vector<Tensor> snapshot(std::vector<Parameter*> params) {
  std::vector<Tensor> out;
  for (Parameter* p : params) out.push_back(p->value);
  return out;
}

bool equal_snapshots(const std::vector<Tensor>& a,
                     const std::vector<Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!bitwise_equal(a[i], b[i])) return false;
  return true;
}

// Writes a small synthetic paired dataset and returns (manifest, split).
std::pair<datasets::DatasetManifest, datasets::UnpairedSplit> desk_dataset(
    const std::filesystem::path& root, std::size_t count, std::uint64_t seed) {
  datasets::DegradationParams params;
  datasets::write_synthetic_dataset(root, count, 24, params, seed);
  datasets::DatasetManifest m =
      datasets::build_manifest(root, datasets::DatasetKind::Synthetic);
  return {m, datasets::unpaired_split(m, seed)};
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig cfg;
  cfg.validate();  // defaults are valid
  CHECK(cfg.patch == 128);
  CHECK(cfg.batch == 4);
  CHECK(cfg.learning_rate == 0.0005);
  CHECK(cfg.beta1 == 0.9);
  CHECK(cfg.beta2 == 0.99);
  CHECK(cfg.epochs == 80);

  TrainConfig bad = cfg;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.patch = 30;  // not a multiple of 4
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.learning_rate = -1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.base_width = 10;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("config json round-trip and unknown keys") {
  TrainConfig cfg = desk_config();
  cfg.lambda.lambda2 = 7.5;
  cfg.omega.omega4 = 3.0;
  cfg.max_steps = 123;
  TrainConfig back = TrainConfig::from_json_text(cfg.to_json_text());
  CHECK(back.patch == cfg.patch);
  CHECK(back.batch == cfg.batch);
  CHECK(back.learning_rate == cfg.learning_rate);
  CHECK(back.lambda.lambda2 == 7.5);
  CHECK(back.omega.omega4 == 3.0);
  CHECK(back.max_steps == 123);
  CHECK(back.seed == cfg.seed);
  CHECK(back.arch_hash() == cfg.arch_hash());

  CHECK_THROWS_WITH_AS(TrainConfig::from_json_text("{\"paaatch\": 32}"),
                       doctest::Contains("paaatch"), ValidationError);
  CHECK_THROWS_AS(TrainConfig::from_json_text("{nope"), ValidationError);
  CHECK_THROWS_AS(TrainConfig::from_json_text("{\"lambda\": [1, 2]}"),
                  ValidationError);
}

TEST_CASE("arch hash separates widths") {
  TrainConfig a = desk_config();
  TrainConfig b = desk_config();
  b.base_width = 16;
  CHECK(a.arch_hash() != b.arch_hash());
}

TEST_CASE("zero learning rate leaves parameters untouched") {
  TrainConfig cfg = desk_config();
  cfg.learning_rate = 0.0;
  auto state = make_state(cfg);
  const auto before = snapshot(state->all_parameters());
  LossRecord rec = train_step(*state, toy_batch(16, 2, 1), cfg);
  CHECK(rec.finite());
  CHECK(equal_snapshots(before, snapshot(state->all_parameters())));
  CHECK(state->step == 1);
}

TEST_CASE("alternation: phases touch only their own parameter group") {
  TrainConfig cfg = desk_config();
  auto state = make_state(cfg);
  const auto gen_before = snapshot(state->generator_parameters());
  const auto disc_before = snapshot(state->discriminator_parameters());

  std::vector<Tensor> gen_mid, disc_mid;
  StepHooks hooks;
  hooks.after_discriminator_update = [&]() {
    gen_mid = snapshot(state->generator_parameters());
    disc_mid = snapshot(state->discriminator_parameters());
  };
  (void)train_step(*state, toy_batch(16, 2, 2), cfg, &hooks);

  // Phase (a) changed discriminators only.
  CHECK(equal_snapshots(gen_before, gen_mid));
  CHECK_FALSE(equal_snapshots(disc_before, disc_mid));
  // Phase (b) changed generators only.
  CHECK_FALSE(equal_snapshots(gen_mid, snapshot(state->generator_parameters())));
  CHECK(equal_snapshots(disc_mid, snapshot(state->discriminator_parameters())));
}

TEST_CASE("recorded terms equal the standalone loss operations") {
  TrainConfig cfg = desk_config();
  cfg.learning_rate = 0.0;  // keep parameters frozen through both phases
  auto state = make_state(cfg);
  datasets::UnpairedBatch batch = toy_batch(16, 2, 3);
  LossRecord rec = train_step(*state, batch, cfg);

  hdn::HdnLossBreakdown hd =
      hdn::hdn_total_loss(batch.clean, batch.underwater, state->hdn, cfg.lambda);
  restoration::RestorationLossBreakdown rs = restoration::restoration_total_loss(
      batch.underwater, batch.clean, state->hdn, state->restoration, cfg.omega);

  CHECK(rec.l_d1 == doctest::Approx(hd.l_d1).epsilon(1e-9));
  CHECK(rec.l_d2 == doctest::Approx(hd.l_d2).epsilon(1e-9));
  CHECK(rec.l_d3 == doctest::Approx(hd.l_d3).epsilon(1e-9));
  CHECK(rec.l_d4 == doctest::Approx(hd.l_d4).epsilon(1e-9));
  CHECK(rec.total_d == doctest::Approx(hd.total).epsilon(1e-9));
  CHECK(rec.d_adv == doctest::Approx(hd.d_adv_discriminator).epsilon(1e-9));
  CHECK(rec.l_r1 == doctest::Approx(rs.l_r1).epsilon(1e-9));
  CHECK(rec.l_r2 == doctest::Approx(rs.l_r2).epsilon(1e-9));
  CHECK(rec.l_r3 == doctest::Approx(rs.l_r3).epsilon(1e-9));
  CHECK(rec.l_r4 == doctest::Approx(rs.l_r4).epsilon(1e-9));
  CHECK(rec.total_r == doctest::Approx(rs.total).epsilon(1e-9));
  CHECK(rec.d_c == doctest::Approx(rs.d_c_discriminator).epsilon(1e-9));
  CHECK(rec.d_u == doctest::Approx(rs.d_u_discriminator).epsilon(1e-9));
  CHECK(rec.total == doctest::Approx(hd.total + rs.total).epsilon(1e-9));
}

TEST_CASE("overfitting one fixed batch lowers the generator total") {
  TrainConfig cfg = desk_config();
  auto state = make_state(cfg);
  datasets::UnpairedBatch batch = toy_batch(16, 2, 4);
  LossRecord first = train_step(*state, batch, cfg);
  LossRecord last;
  for (int i = 0; i < 49; ++i) {
    last = train_step(*state, batch, cfg);
    CHECK(last.finite());
  }
  CHECK(last.total < first.total);
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  TrainConfig cfg = desk_config();
  auto state = make_state(cfg);
  // Huge discriminator scores overflow to inf when the LSGAN loss squares them.
  for (Parameter* p : state->discriminator_parameters())
    if (p->name == "d_c.c0.weight") p->value = Tensor(p->value.shape(), 1e200);
  const auto disc_before = snapshot(state->discriminator_parameters());
  CHECK_THROWS_WITH_AS((void)train_step(*state, toy_batch(16, 2, 5), cfg),
                       doctest::Contains("non-finite"), RuntimeFailure);
  // The abort happened before any optimizer step could apply poisoned grads.
  CHECK(equal_snapshots(disc_before, snapshot(state->discriminator_parameters())));
}

TEST_CASE("batch shape mismatches are rejected") {
  TrainConfig cfg = desk_config();
  auto state = make_state(cfg);
  datasets::UnpairedBatch bad;
  bad.underwater = Tensor({2, 3, 16, 16}, 0.5);
  bad.clean = Tensor({2, 3, 16, 8}, 0.5);
  CHECK_THROWS_AS((void)train_step(*state, bad, cfg), ValidationError);
  datasets::UnpairedBatch empty;
  empty.underwater = Tensor({0, 3, 16, 16});
  empty.clean = Tensor({0, 3, 16, 16});
  CHECK_THROWS_AS((void)train_step(*state, empty, cfg), ValidationError);
}

TEST_CASE("checkpoint round-trip is bitwise exact") {
  TempDir tmp("checkpoint");
  TrainConfig cfg = desk_config();
  auto state = make_state(cfg);
  // take a few steps so moments and rng move
  for (int i = 0; i < 3; ++i)
    (void)train_step(*state, toy_batch(16, 2, 10 + i), cfg);
  (void)state->rng.uniform();

  const auto path = tmp.path() / "state.uwhdn";
  save_checkpoint(*state, cfg, path);
  LoadedCheckpoint loaded = load_checkpoint(path);

  CHECK(loaded.state->step == state->step);
  CHECK(loaded.state->epoch == state->epoch);
  CHECK(loaded.config.arch_hash() == cfg.arch_hash());
  CHECK(equal_snapshots(snapshot(state->all_parameters()),
                        snapshot(loaded.state->all_parameters())));
  CHECK(loaded.state->opt_generators.step_count() ==
        state->opt_generators.step_count());
  for (std::size_t i = 0; i < state->opt_generators.first_moments().size(); ++i)
    CHECK(bitwise_equal(loaded.state->opt_generators.first_moments()[i],
                        state->opt_generators.first_moments()[i]));
  // rng continues identically
  CHECK(loaded.state->rng.next_u64() == state->rng.next_u64());
}

TEST_CASE("checkpoint corruption and mismatch handling") {
  TempDir tmp("checkpoint_bad");
  TrainConfig cfg = desk_config();
  auto state = make_state(cfg);
  const auto path = tmp.path() / "state.uwhdn";
  save_checkpoint(*state, cfg, path);

  SUBCASE("truncated file") {
    std::filesystem::resize_file(path, std::filesystem::file_size(path) / 2);
    CHECK_THROWS_WITH_AS((void)load_checkpoint(path),
                         doctest::Contains("truncated"), ValidationError);
  }
  SUBCASE("bad magic") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("NOPEX", 5);
    f.close();
    CHECK_THROWS_WITH_AS((void)load_checkpoint(path),
                         doctest::Contains("not a UWHDN"), ValidationError);
  }
  SUBCASE("architecture hash mismatch") {
    // Flip one byte inside the stored architecture hash.
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    char b;
    f.seekg(5 + 4);
    f.read(&b, 1);
    b = static_cast<char>(b ^ 0xff);
    f.seekp(5 + 4);
    f.write(&b, 1);
    f.close();
    CHECK_THROWS_WITH_AS((void)load_checkpoint(path),
                         doctest::Contains("hash mismatch"), ValidationError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS((void)load_checkpoint(tmp.path() / "ghost.uwhdn"),
                    ValidationError);
  }
}

TEST_CASE("train runs, logs and reproduces deterministically") {
  TempDir data_dir("train_data");
  auto [manifest, split] = desk_dataset(data_dir.path(), 8, 3);

  TrainConfig cfg = desk_config();
  cfg.max_steps = 12;
  CHECK(steps_per_epoch(split, cfg) == 2);  // 4 per side, batch 2

  TempDir out1("train_out1");
  auto s1 = make_state(cfg);
  TrainOptions opts1;
  opts1.out_dir = out1.path();
  TrainResult r1 = train(*s1, manifest, split, cfg, opts1);
  CHECK(r1.trace.size() == 12);
  CHECK(s1->step == 12);
  CHECK(std::filesystem::exists(r1.final_checkpoint));
  CHECK(std::filesystem::exists(out1.path() / "trace.csv"));

  // identical seed -> identical trace
  auto s2 = make_state(cfg);
  TrainResult r2 = train(*s2, manifest, split, cfg, {});
  REQUIRE(r2.trace.size() == r1.trace.size());
  for (std::size_t i = 0; i < r1.trace.size(); ++i) {
    CHECK(r1.trace[i].step == r2.trace[i].step);
    CHECK(std::abs(r1.trace[i].total - r2.trace[i].total) <= 1e-6);
    CHECK(std::abs(r1.trace[i].l_d2 - r2.trace[i].l_d2) <= 1e-6);
  }

  // trace csv round-trip matches the in-memory records
  std::vector<LossRecord> rows = read_trace(out1.path() / "trace.csv");
  REQUIRE(rows.size() == r1.trace.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].step == r1.trace[i].step);
    CHECK(rows[i].total == doctest::Approx(r1.trace[i].total).epsilon(1e-12));
  }

  SUBCASE("resume from a mid-run checkpoint matches the uninterrupted run") {
    // the run above checkpointed every 5 steps
    LoadedCheckpoint loaded =
        load_checkpoint(out1.path() / "checkpoint-000010.uwhdn");
    CHECK(loaded.state->step == 10);
    TrainResult tail = train(*loaded.state, manifest, split, cfg, {});
    REQUIRE(tail.trace.size() == 2);
    CHECK(tail.trace[0].step == 10);
    for (std::size_t i = 0; i < tail.trace.size(); ++i) {
      const LossRecord& a = tail.trace[i];
      const LossRecord& b = r1.trace[10 + i];
      CHECK(std::abs(a.total - b.total) <= 1e-6);
      CHECK(std::abs(a.l_r3 - b.l_r3) <= 1e-6);
      CHECK(std::abs(a.d_adv - b.d_adv) <= 1e-6);
    }
  }
}

TEST_CASE("train validates its inputs") {
  TempDir data_dir("train_data2");
  auto [manifest, split] = desk_dataset(data_dir.path(), 4, 4);
  TrainConfig cfg = desk_config();
  cfg.epochs = 0;
  auto state = make_state(desk_config());
  CHECK_THROWS_AS((void)train(*state, manifest, split, cfg, {}), ValidationError);

  datasets::UnpairedSplit empty_side = split;
  empty_side.clean_ids.clear();
  CHECK_THROWS_AS(
      (void)train(*state, manifest, empty_side, desk_config(), {}),
      ValidationError);
}
