// Command-line front end: data preparation, training, restoration,
// evaluation, diagnostics and synthetic data generation.
//
// Exit codes: 0 success, 2 validation error, 3 runtime failure/divergence.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "uwhdn/datasets.hpp"
#include "uwhdn/error.hpp"
#include "uwhdn/evaluation.hpp"
#include "uwhdn/image_io.hpp"
#include "uwhdn/training.hpp"

namespace fs = std::filesystem;
using namespace uwhdn;

namespace {

// --out falls back to $UWHDN_OUT_ROOT when the flag is absent.
fs::path resolve_out(const std::string& out_flag, const char* subcommand) {
  if (!out_flag.empty()) return out_flag;
  if (const char* env = std::getenv("UWHDN_OUT_ROOT"))
    return fs::path(env) / subcommand;
  throw ValidationError(
      "--out not given and UWHDN_OUT_ROOT is not set; choose an output "
      "directory");
}

std::vector<fs::path> gather_images(const fs::path& input) {
  std::vector<fs::path> files;
  if (fs::is_directory(input)) {
    for (const auto& entry : fs::directory_iterator(input))
      if (entry.is_regular_file() && has_image_extension(entry.path()))
        files.push_back(entry.path());
    std::sort(files.begin(), files.end());
  } else if (fs::is_regular_file(input)) {
    files.push_back(input);
  } else {
    throw ValidationError("input path does not exist: " + input.string());
  }
  if (files.empty())
    throw ValidationError("no image files under " + input.string());
  return files;
}

int cmd_prepare_data(const std::string& root, const std::string& kind,
                     std::uint64_t seed, const std::string& out_flag) {
  const fs::path out = resolve_out(out_flag, "prepare-data");
  datasets::DatasetManifest manifest =
      datasets::build_manifest(root, datasets::dataset_kind_from_string(kind));
  datasets::UnpairedSplit split = datasets::unpaired_split(manifest, seed);
  fs::create_directories(out);
  datasets::save_manifest(manifest, out / "manifest.jsonl");
  datasets::save_split(split, out / "split.json");
  std::cout << "underwater=" << split.underwater_ids.size()
            << " clean=" << split.clean_ids.size() << "\n";
  return 0;
}

struct TrainFlags {
  std::string config_path, data_dir, out_flag, resume;
  // Optional overrides; only applied when the flag was passed.
  std::optional<std::size_t> patch, batch, epochs, base_width, max_steps,
      checkpoint_every, log_every;
  std::optional<Scalar> learning_rate;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainFlags& f) {
  training::TrainConfig config;
  if (!f.config_path.empty())
    config = training::TrainConfig::from_json_file(f.config_path);
  // Precedence: CLI flag > config file > default.
  if (f.patch) config.patch = *f.patch;
  if (f.batch) config.batch = *f.batch;
  if (f.epochs) config.epochs = *f.epochs;
  if (f.base_width) config.base_width = *f.base_width;
  if (f.max_steps) config.max_steps = *f.max_steps;
  if (f.checkpoint_every) config.checkpoint_every = *f.checkpoint_every;
  if (f.log_every) config.log_every = *f.log_every;
  if (f.learning_rate) config.learning_rate = *f.learning_rate;
  if (f.seed) config.seed = *f.seed;
  config.validate();

  const fs::path data = f.data_dir;
  datasets::DatasetManifest manifest =
      datasets::load_manifest(data / "manifest.jsonl");
  datasets::UnpairedSplit split = datasets::load_split(data / "split.json");

  const fs::path out = resolve_out(f.out_flag, "train");
  fs::create_directories(out);

  std::unique_ptr<training::TrainState> state;
  if (!f.resume.empty()) {
    training::LoadedCheckpoint loaded = training::load_checkpoint(f.resume);
    if (loaded.config.arch_hash() != config.arch_hash())
      throw ValidationError("checkpoint architecture does not match config: " +
                            loaded.config.arch_descriptor() + " vs " +
                            config.arch_descriptor());
    state = std::move(loaded.state);
  } else {
    state = training::make_state(config);
  }

  {
    std::ofstream cfg(out / "config_used.json");
    cfg << config.to_json_text() << "\n";
  }

  training::TrainOptions options;
  options.out_dir = out;
  options.on_record = [](const training::LossRecord& r) {
    if (r.step % 10 == 0)
      std::cout << "step " << r.step << " L_total " << r.total << " (L_d "
                << r.total_d << ", L_r " << r.total_r << ")\n";
  };
  training::TrainResult result =
      training::train(*state, manifest, split, config, options);
  std::cout << "finished at step " << state->step << "; checkpoint "
            << result.final_checkpoint.string() << "\n";
  return 0;
}

int cmd_restore(const std::string& checkpoint, const std::string& input,
                const std::string& out_flag) {
  const fs::path out = resolve_out(out_flag, "restore");
  training::LoadedCheckpoint loaded = training::load_checkpoint(checkpoint);
  fs::create_directories(out);
  std::size_t failures = 0;
  for (const fs::path& file : gather_images(input)) {
    try {
      Tensor img = load_image(file);
      const Shape4 orig = img.shape();
      Tensor padded = pad_to_multiple(img, hdn::kDownsample);
      Tensor content_full = loaded.state->hdn.content_image(padded);
      Tensor restored_full =
          loaded.state->restoration.g_c().restore_eval(content_full);
      const std::string stem = file.stem().string();
      save_image(crop_to(content_full, orig.h, orig.w),
                 out / (stem + "_content.png"));
      save_image(crop_to(restored_full, orig.h, orig.w),
                 out / (stem + "_restored.png"));
    } catch (const std::exception& e) {
      std::cerr << "failed on " << file.string() << ": " << e.what() << "\n";
      ++failures;
    }
  }
  if (failures) {
    std::cerr << failures << " file(s) failed\n";
    return 3;
  }
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& manifest_path,
                 const std::string& out_flag, std::size_t grid,
                 const std::string& trace_path) {
  const fs::path out = resolve_out(out_flag, "evaluate");
  training::LoadedCheckpoint loaded = training::load_checkpoint(checkpoint);
  datasets::DatasetManifest manifest = datasets::load_manifest(manifest_path);
  evaluation::EvalResult result = evaluation::evaluate(
      loaded.state->hdn, loaded.state->restoration, manifest, grid);
  std::vector<training::LossRecord> trace;
  if (!trace_path.empty()) trace = training::read_trace(trace_path);
  evaluation::write_report_csv(result.report, out / "report.csv");
  evaluation::emit_artifacts(trace, result.report, result.grid, out);
  std::cout << evaluation::summary_text(result.report, trace);
  return 0;
}

int cmd_diagnose(const std::string& checkpoint,
                 const std::string& manifest_path) {
  training::LoadedCheckpoint loaded = training::load_checkpoint(checkpoint);
  datasets::DatasetManifest manifest = datasets::load_manifest(manifest_path);
  evaluation::DisentanglementDiagnostics d =
      evaluation::disentanglement_diagnostics(loaded.state->hdn, manifest);
  std::cout.precision(6);
  std::cout << "clean_response=" << d.mean_abs_haze_response_clean
            << " underwater_response=" << d.mean_abs_haze_response_underwater
            << " ratio=";
  if (d.degenerate)
    std::cout << "nan (degenerate)";
  else
    std::cout << d.ratio;
  std::cout << "\n";
  return 0;
}

struct SynthFlags {
  std::string input, out_flag;
  std::size_t generate = 0, size = 64;
  std::uint64_t seed = 0;
  std::vector<Scalar> attenuation, background;
  Scalar smoothness = 8.0, t_min = 0.2, t_max = 1.0;
};

int cmd_synthesize(const SynthFlags& f) {
  const fs::path out = resolve_out(f.out_flag, "synthesize");
  datasets::DegradationParams params;
  params.seed = f.seed;
  params.transmission_smoothness = f.smoothness;
  params.transmission_min = f.t_min;
  params.transmission_max = f.t_max;
  if (!f.attenuation.empty()) {
    if (f.attenuation.size() != 3)
      throw ValidationError("--attenuation needs exactly 3 values");
    params.attenuation = {f.attenuation[0], f.attenuation[1], f.attenuation[2]};
  }
  if (!f.background.empty()) {
    if (f.background.size() != 3)
      throw ValidationError("--background needs exactly 3 values");
    params.background = {f.background[0], f.background[1], f.background[2]};
  }
  params.validate();

  if (f.generate > 0) {
    datasets::write_synthetic_dataset(out, f.generate, f.size, params, f.seed);
    std::cout << "wrote " << f.generate << " pairs under " << out.string()
              << "\n";
    return 0;
  }
  if (f.input.empty())
    throw ValidationError("synthesize needs --input or --generate");
  fs::create_directories(out);
  std::size_t index = 0;
  for (const fs::path& file : gather_images(f.input)) {
    Tensor clean = load_image(file);
    Rng rng(Rng::mix(f.seed, index++));
    Tensor uw = datasets::synthesize_underwater(clean, params, rng);
    save_image(uw, out / (file.stem().string() + ".png"));
  }
  std::cout << "wrote " << index << " degraded image(s) under " << out.string()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised underwater haze removal via haze/content "
               "disentanglement"};
  app.require_subcommand(1);

  // prepare-data
  auto* prep = app.add_subcommand(
      "prepare-data", "Build a paired manifest and the unpaired training split");
  std::string prep_root, prep_kind = "synthetic", prep_out;
  std::uint64_t prep_seed = 0;
  prep->add_option("--root", prep_root, "Dataset root with underwater/ and clean/")
      ->required();
  prep->add_option("--kind", prep_kind,
                   "Dataset kind: ufo120|uwnet|uwscenes|uieb|synthetic");
  prep->add_option("--seed", prep_seed, "Split seed");
  prep->add_option("--out", prep_out, "Output directory");

  // train
  auto* tr = app.add_subcommand("train", "Train the full model");
  TrainFlags tf;
  std::size_t tf_patch = 0, tf_batch = 0, tf_epochs = 0, tf_width = 0,
              tf_max_steps = 0, tf_ckpt = 0, tf_log = 0;
  Scalar tf_lr = 0;
  std::uint64_t tf_seed = 0;
  tr->add_option("--config", tf.config_path, "JSON config file");
  tr->add_option("--data", tf.data_dir,
                 "Directory with manifest.jsonl and split.json")
      ->required();
  tr->add_option("--out", tf.out_flag, "Output directory");
  tr->add_option("--resume", tf.resume, "Checkpoint to resume from");
  auto* o_patch = tr->add_option("--patch", tf_patch, "Patch size (default 128)");
  auto* o_batch = tr->add_option("--batch", tf_batch, "Batch size (default 4)");
  auto* o_epochs = tr->add_option("--epochs", tf_epochs, "Epochs (default 80)");
  auto* o_lr =
      tr->add_option("--learning-rate", tf_lr, "ADAM learning rate (default 0.0005)");
  auto* o_seed = tr->add_option("--seed", tf_seed, "Training seed");
  auto* o_width =
      tr->add_option("--base-width", tf_width, "Network width (default 64)");
  auto* o_msteps =
      tr->add_option("--max-steps", tf_max_steps, "Stop after this many steps");
  auto* o_ckpt = tr->add_option("--checkpoint-every", tf_ckpt,
                                "Checkpoint interval in steps");
  auto* o_log = tr->add_option("--log-every", tf_log, "Trace interval in steps");

  // restore
  auto* re = app.add_subcommand("restore",
                                "Write content and restored images per input");
  std::string re_ckpt, re_input, re_out;
  re->add_option("--checkpoint", re_ckpt, "Checkpoint file")->required();
  re->add_option("--input", re_input, "Image file or directory")->required();
  re->add_option("--out", re_out, "Output directory");

  // evaluate
  auto* ev = app.add_subcommand("evaluate",
                                "Full-reference metrics over a paired manifest");
  std::string ev_ckpt, ev_manifest, ev_out, ev_trace;
  std::size_t ev_grid = 4;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
  ev->add_option("--manifest", ev_manifest, "Paired manifest")->required();
  ev->add_option("--out", ev_out, "Output directory");
  ev->add_option("--grid", ev_grid, "Rows in the comparison grid (default 4)");
  ev->add_option("--trace", ev_trace, "Loss trace CSV for the curves plot");

  // diagnose
  auto* di = app.add_subcommand(
      "diagnose", "Haze-encoder response ratio between clean and underwater");
  std::string di_ckpt, di_manifest;
  di->add_option("--checkpoint", di_ckpt, "Checkpoint file")->required();
  di->add_option("--manifest", di_manifest, "Paired manifest")->required();

  // synthesize
  auto* sy = app.add_subcommand(
      "synthesize", "Generate or degrade images with the synthetic water model");
  SynthFlags sf;
  sy->add_option("--input", sf.input, "Clean image file or directory");
  sy->add_option("--generate", sf.generate,
                 "Generate this many synthetic clean/underwater pairs");
  sy->add_option("--size", sf.size, "Generated image size (default 64)");
  sy->add_option("--seed", sf.seed, "Degradation seed");
  sy->add_option("--out", sf.out_flag, "Output directory");
  sy->add_option("--attenuation", sf.attenuation,
                 "Per-channel attenuation r,g,b")
      ->delimiter(',');
  sy->add_option("--background", sf.background, "Per-channel background r,g,b")
      ->delimiter(',');
  sy->add_option("--smoothness", sf.smoothness,
                 "Transmission smoothness in pixels (default 8)");
  sy->add_option("--t-min", sf.t_min, "Transmission lower bound (default 0.2)");
  sy->add_option("--t-max", sf.t_max, "Transmission upper bound (default 1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // exit 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (prep->parsed())
      return cmd_prepare_data(prep_root, prep_kind, prep_seed, prep_out);
    if (tr->parsed()) {
      if (o_patch->count()) tf.patch = tf_patch;
      if (o_batch->count()) tf.batch = tf_batch;
      if (o_epochs->count()) tf.epochs = tf_epochs;
      if (o_lr->count()) tf.learning_rate = tf_lr;
      if (o_seed->count()) tf.seed = tf_seed;
      if (o_width->count()) tf.base_width = tf_width;
      if (o_msteps->count()) tf.max_steps = tf_max_steps;
      if (o_ckpt->count()) tf.checkpoint_every = tf_ckpt;
      if (o_log->count()) tf.log_every = tf_log;
      return cmd_train(tf);
    }
    if (re->parsed()) return cmd_restore(re_ckpt, re_input, re_out);
    if (ev->parsed())
      return cmd_evaluate(ev_ckpt, ev_manifest, ev_out, ev_grid, ev_trace);
    if (di->parsed()) return cmd_diagnose(di_ckpt, di_manifest);
    if (sy->parsed()) return cmd_synthesize(sf);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const RuntimeFailure& e) {
    std::cerr << "aborted: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "aborted: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
