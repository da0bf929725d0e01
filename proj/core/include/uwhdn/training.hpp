#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>

#include "uwhdn/datasets.hpp"
#include "uwhdn/hdn.hpp"
#include "uwhdn/restoration.hpp"

namespace uwhdn::training {

struct TrainConfig {
  std::size_t patch = 128;
  std::size_t batch = 4;
  Scalar learning_rate = 0.0005;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.99;
  std::size_t epochs = 80;
  std::uint64_t seed = 0;
  hdn::HdnLossWeights lambda;
  restoration::RestorationLossWeights omega;
  std::size_t log_every = 1;
  std::size_t checkpoint_every = 100;
  std::size_t base_width = 64;
  std::size_t max_steps = 0;  // 0: run all epochs

  void validate() const;
  std::string arch_descriptor() const;
  std::uint64_t arch_hash() const;

  // Structured text (JSON) round-trip; unknown keys are rejected.
  static TrainConfig from_json_file(const std::filesystem::path& path);
  static TrainConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
};

struct LossRecord {
  std::size_t step = 0;
  Scalar l_d1 = 0, l_d2 = 0, l_d3 = 0, l_d4 = 0;
  Scalar l_r1 = 0, l_r2 = 0, l_r3 = 0, l_r4 = 0;
  Scalar d_adv = 0, d_c = 0, d_u = 0;  // discriminator losses
  Scalar total_d = 0, total_r = 0, total = 0;

  bool finite() const;
  static const char* csv_header();
  std::string csv_row() const;
};

// ADAM with bias correction; one instance per role.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, Scalar lr, Scalar beta1, Scalar beta2,
       Scalar eps = 1e-8);
  void step();
  void zero_grad();

  std::uint64_t step_count() const { return t_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void restore_moments(std::uint64_t t, std::vector<Tensor> m,
                       std::vector<Tensor> v);

 private:
  std::vector<Parameter*> params_;
  Scalar lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Owns the seven networks, both optimizers, counters and the data rng.
// Address-stable by construction (optimizers hold parameter pointers), hence
// non-copyable; build through make_state/load_checkpoint.
struct TrainState {
  explicit TrainState(const TrainConfig& config);
  TrainState(const TrainState&) = delete;
  TrainState& operator=(const TrainState&) = delete;

  hdn::Hdn hdn;
  restoration::Restoration restoration;
  Adam opt_generators;
  Adam opt_discriminators;
  std::size_t epoch = 0;
  std::size_t step = 0;
  Rng rng;

  // Documented checkpoint order: hdn generators, hdn discriminator,
  // restoration generators, restoration discriminators.
  std::vector<Parameter*> all_parameters();
  std::vector<Parameter*> generator_parameters();
  std::vector<Parameter*> discriminator_parameters();
};

std::unique_ptr<TrainState> make_state(const TrainConfig& config);

// Test seam: observe the state between the two phases of a step.
struct StepHooks {
  std::function<void()> after_discriminator_update;
};

// One alternating cycle: (a) discriminators on their losses with generator
// outputs held fixed, (b) all generator-side networks on the summed
// lambda/omega-weighted objective. Throws RuntimeFailure on non-finite loss.
LossRecord train_step(TrainState& state, const datasets::UnpairedBatch& batch,
                      const TrainConfig& config,
                      const StepHooks* hooks = nullptr);

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: keep everything in memory
  std::function<void(const LossRecord&)> on_record;
};

struct TrainResult {
  std::vector<LossRecord> trace;
  std::filesystem::path final_checkpoint;  // empty when out_dir unset
};

// Runs state.step -> min(epochs * steps_per_epoch, max_steps). One epoch is
// ceil(larger_side / batch) steps. Checkpoints every checkpoint_every steps
// and at the end; on divergence the last good checkpoint is kept.
TrainResult train(TrainState& state, const datasets::DatasetManifest& manifest,
                  const datasets::UnpairedSplit& split,
                  const TrainConfig& config, const TrainOptions& options = {});

std::size_t steps_per_epoch(const datasets::UnpairedSplit& split,
                            const TrainConfig& config);

// Binary checkpoint: magic "UWHDN", schema version, architecture hash and
// descriptor, config, counters, rng state, parameter blobs in the documented
// order, then both optimizers' moments. load(save(s)) is bitwise exact.
void save_checkpoint(TrainState& state, const TrainConfig& config,
                     const std::filesystem::path& path);

struct LoadedCheckpoint {
  TrainConfig config;
  std::unique_ptr<TrainState> state;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Loss-trace CSV helpers (append-only, fixed header).
void append_trace(const std::filesystem::path& csv_path,
                  const LossRecord& record);
std::vector<LossRecord> read_trace(const std::filesystem::path& csv_path);

}  // namespace uwhdn::training
