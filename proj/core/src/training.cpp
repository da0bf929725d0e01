#include "uwhdn/training.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "uwhdn/error.hpp"

namespace uwhdn::training {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- TrainConfig --------------------------------------------------------------

void TrainConfig::validate() const {
  if (patch == 0 || patch % hdn::kDownsample != 0)
    throw ValidationError("patch must be a positive multiple of " +
                          std::to_string(hdn::kDownsample));
  if (batch == 0) throw ValidationError("batch must be >= 1");
  if (!(learning_rate >= 0.0))
    throw ValidationError("learning_rate must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ValidationError("beta1/beta2 must lie in [0, 1)");
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (base_width < 4 || base_width % 4 != 0)
    throw ValidationError("base_width must be a positive multiple of 4");
  for (Scalar v : {lambda.lambda1, lambda.lambda2, lambda.lambda3,
                   lambda.lambda4, omega.omega1, omega.omega2, omega.omega3,
                   omega.omega4})
    if (!(v >= 0.0)) throw ValidationError("loss weights must be non-negative");
}

std::string TrainConfig::arch_descriptor() const {
  hdn::HdnConfig hc;
  hc.base_width = base_width;
  restoration::RestorationConfig rc;
  rc.base_width = base_width;
  rc.haze_channels = base_width;
  return "uwhdn.v1;width=" + std::to_string(base_width) + ";" +
         hdn::Hdn(hc, Rng(0)).arch_descriptor() + ";" +
         restoration::Restoration(rc, Rng(0)).arch_descriptor();
}

std::uint64_t TrainConfig::arch_hash() const {
  // FNV-1a over the architecture descriptor.
  const std::string d = arch_descriptor();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : d) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  const std::set<std::string> known = {
      "patch",      "batch",     "learning_rate",    "beta1",
      "beta2",      "epochs",    "seed",             "lambda",
      "omega",      "log_every", "checkpoint_every", "base_width",
      "max_steps"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ValidationError("unknown config key: " + it.key());
  c.patch = j.value("patch", c.patch);
  c.batch = j.value("batch", c.batch);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.log_every = j.value("log_every", c.log_every);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.base_width = j.value("base_width", c.base_width);
  c.max_steps = j.value("max_steps", c.max_steps);
  if (j.count("lambda")) {
    auto v = j.at("lambda").get<std::vector<Scalar>>();
    if (v.size() != 4) throw ValidationError("lambda must have 4 entries");
    c.lambda = {v[0], v[1], v[2], v[3]};
  }
  if (j.count("omega")) {
    auto v = j.at("omega").get<std::vector<Scalar>>();
    if (v.size() != 4) throw ValidationError("omega must have 4 entries");
    c.omega = {v[0], v[1], v[2], v[3]};
  }
  return c;
}

}  // namespace

TrainConfig TrainConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed config: ") + e.what());
  }
  return config_from_json(j);
}

TrainConfig TrainConfig::from_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string TrainConfig::to_json_text() const {
  json j{{"patch", patch},
         {"batch", batch},
         {"learning_rate", learning_rate},
         {"beta1", beta1},
         {"beta2", beta2},
         {"epochs", epochs},
         {"seed", seed},
         {"lambda",
          {lambda.lambda1, lambda.lambda2, lambda.lambda3, lambda.lambda4}},
         {"omega", {omega.omega1, omega.omega2, omega.omega3, omega.omega4}},
         {"log_every", log_every},
         {"checkpoint_every", checkpoint_every},
         {"base_width", base_width},
         {"max_steps", max_steps}};
  return j.dump(2);
}

// ---- LossRecord ----------------------------------------------------------------

bool LossRecord::finite() const {
  for (Scalar v : {l_d1, l_d2, l_d3, l_d4, l_r1, l_r2, l_r3, l_r4, d_adv, d_c,
                   d_u, total_d, total_r, total})
    if (!std::isfinite(v)) return false;
  return true;
}

const char* LossRecord::csv_header() {
  return "step,L_d1,L_d2,L_d3,L_d4,L_r1,L_r2,L_r3,L_r4,D_adv,D_C,D_U,"
         "L_d_total,L_r_total,L_total";
}

std::string LossRecord::csv_row() const {
  std::ostringstream os;
  os.precision(17);
  os << step;
  for (Scalar v : {l_d1, l_d2, l_d3, l_d4, l_r1, l_r2, l_r3, l_r4, d_adv, d_c,
                   d_u, total_d, total_r, total})
    os << "," << v;
  return os.str();
}

// ---- Adam ---------------------------------------------------------------------

Adam::Adam(std::vector<Parameter*> params, Scalar lr, Scalar beta1,
           Scalar beta2, Scalar eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2),
      eps_(eps) {
  for (Parameter* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step() {
  ++t_;
  const Scalar bc1 = 1.0 - std::pow(beta1_, static_cast<Scalar>(t_));
  const Scalar bc2 = 1.0 - std::pow(beta2_, static_cast<Scalar>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < p.value.numel(); ++j) {
      const Scalar g = p.grad[j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      const Scalar mhat = m[j] / bc1;
      const Scalar vhat = v[j] / bc2;
      p.value[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void Adam::restore_moments(std::uint64_t t, std::vector<Tensor> m,
                           std::vector<Tensor> v) {
  if (m.size() != params_.size() || v.size() != params_.size())
    throw ValidationError("optimizer moment count mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (!(m[i].shape() == params_[i]->value.shape()) ||
        !(v[i].shape() == params_[i]->value.shape()))
      throw ValidationError("optimizer moment shape mismatch for " +
                            params_[i]->name);
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

// ---- TrainState -----------------------------------------------------------------

namespace {

hdn::HdnConfig hdn_config_of(const TrainConfig& c) {
  hdn::HdnConfig hc;
  hc.base_width = c.base_width;
  return hc;
}

restoration::RestorationConfig restoration_config_of(const TrainConfig& c) {
  restoration::RestorationConfig rc;
  rc.base_width = c.base_width;
  rc.haze_channels = c.base_width;
  return rc;
}

std::vector<Parameter*> concat(std::vector<Parameter*> a,
                               const std::vector<Parameter*>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TrainState::TrainState(const TrainConfig& config)
    : hdn(hdn_config_of(config), Rng(Rng::mix(config.seed, 0x696e6974ULL))),
      restoration(restoration_config_of(config),
                  Rng(Rng::mix(config.seed, 0x696e6974ULL))),
      opt_generators(concat(hdn.generator_parameters(),
                            restoration.generator_parameters()),
                     config.learning_rate, config.beta1, config.beta2),
      opt_discriminators(concat(hdn.discriminator_parameters(),
                                restoration.discriminator_parameters()),
                         config.learning_rate, config.beta1, config.beta2),
      rng(Rng::mix(config.seed, 0x64617461ULL)) {}

std::vector<Parameter*> TrainState::generator_parameters() {
  return concat(hdn.generator_parameters(),
                restoration.generator_parameters());
}

std::vector<Parameter*> TrainState::discriminator_parameters() {
  return concat(hdn.discriminator_parameters(),
                restoration.discriminator_parameters());
}

std::vector<Parameter*> TrainState::all_parameters() {
  return concat(concat(hdn.generator_parameters(),
                       hdn.discriminator_parameters()),
                concat(restoration.generator_parameters(),
                       restoration.discriminator_parameters()));
}

std::unique_ptr<TrainState> make_state(const TrainConfig& config) {
  config.validate();
  return std::make_unique<TrainState>(config);
}

// ---- train_step -----------------------------------------------------------------

LossRecord train_step(TrainState& state, const datasets::UnpairedBatch& batch,
                      const TrainConfig& config, const StepHooks* hooks) {
  const Shape4& us = batch.underwater.shape();
  const Shape4& cs = batch.clean.shape();
  if (us.n == 0 || cs.n == 0)
    throw ValidationError("train_step: empty batch side");
  if (!(us == cs))
    throw ValidationError("train_step: batch sides differ in shape: " +
                          us.str() + " vs " + cs.str());

  Graph g;
  Value clean = g.input(batch.clean);
  Value underwater = g.input(batch.underwater);
  hdn::HdnForwardV hf = hdn::hdn_forward(g, state.hdn, clean, underwater);
  restoration::RestorationForwardV rf =
      restoration::restoration_forward(g, state.restoration, hf);

  // Phase (a): discriminators, generator outputs held fixed (detached).
  Value d_adv_loss = hdn::hdn_discriminator_loss(g, state.hdn, hf);
  restoration::RestorationDiscriminatorLossesV d =
      restoration::restoration_discriminator_losses(g, state.restoration, rf,
                                                    clean, underwater);
  Value disc_total = weighted_sum(
      {{1.0, d_adv_loss}, {1.0, d.d_c_loss}, {1.0, d.d_u_loss}});

  LossRecord rec;
  rec.step = state.step;
  rec.d_adv = d_adv_loss.item();
  rec.d_c = d.d_c_loss.item();
  rec.d_u = d.d_u_loss.item();
  if (!std::isfinite(disc_total.item()))
    throw RuntimeFailure("non-finite discriminator loss at step " +
                         std::to_string(rec.step) + ": " + rec.csv_row());

  state.opt_discriminators.zero_grad();
  state.opt_generators.zero_grad();
  g.backward(disc_total);
  state.opt_discriminators.step();
  if (hooks && hooks->after_discriminator_update)
    hooks->after_discriminator_update();

  // Phase (b): generator-role objective, fresh discriminator passes on the
  // shared generator subgraph.
  hdn::HdnGeneratorTermsV hterms = hdn::hdn_generator_terms(
      g, state.hdn, hf, clean, underwater, config.lambda);
  restoration::RestorationGeneratorTermsV rterms =
      restoration::restoration_generator_terms(g, state.restoration, rf, clean,
                                               underwater, config.omega);
  Value gen_total = weighted_sum({{1.0, hterms.total}, {1.0, rterms.total}});

  rec.l_d1 = hterms.l_d1.item();
  rec.l_d2 = hterms.l_d2.item();
  rec.l_d3 = hterms.l_d3.item();
  rec.l_d4 = hterms.l_d4.item();
  rec.l_r1 = rterms.l_r1.item();
  rec.l_r2 = rterms.l_r2.item();
  rec.l_r3 = rterms.l_r3.item();
  rec.l_r4 = rterms.l_r4.item();
  rec.total_d = hterms.total.item();
  rec.total_r = rterms.total.item();
  rec.total = gen_total.item();

  if (!rec.finite())
    throw RuntimeFailure("non-finite loss at step " + std::to_string(rec.step) +
                         ": " + rec.csv_row());

  state.opt_discriminators.zero_grad();
  state.opt_generators.zero_grad();
  g.backward(gen_total);
  state.opt_generators.step();

  ++state.step;
  return rec;
}

// ---- train ----------------------------------------------------------------------

std::size_t steps_per_epoch(const datasets::UnpairedSplit& split,
                            const TrainConfig& config) {
  const std::size_t larger =
      std::max(split.underwater_ids.size(), split.clean_ids.size());
  return (larger + config.batch - 1) / config.batch;
}

TrainResult train(TrainState& state, const datasets::DatasetManifest& manifest,
                  const datasets::UnpairedSplit& split,
                  const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  if (split.underwater_ids.empty() || split.clean_ids.empty())
    throw ValidationError("train: split has an empty side");

  const std::size_t per_epoch = steps_per_epoch(split, config);
  std::size_t total_steps = config.epochs * per_epoch;
  if (config.max_steps > 0)
    total_steps = std::min(total_steps, config.max_steps);

  datasets::PatchSampler sampler(manifest, split);
  TrainResult result;

  const bool to_disk = !options.out_dir.empty();
  fs::path trace_path;
  if (to_disk) {
    fs::create_directories(options.out_dir);
    trace_path = options.out_dir / "trace.csv";
  }

  auto checkpoint_path = [&](std::size_t step) {
    char name[48];
    std::snprintf(name, sizeof(name), "checkpoint-%06zu.uwhdn", step);
    return options.out_dir / name;
  };

  while (state.step < total_steps) {
    datasets::UnpairedBatch batch =
        sampler.sample_patch_batch(config.patch, config.batch, state.rng);
    LossRecord rec;
    try {
      rec = train_step(state, batch, config);
    } catch (const RuntimeFailure&) {
      // Divergence: the last written checkpoint stays as the good state.
      throw;
    }
    state.epoch = state.step / per_epoch;

    if (config.log_every > 0 && rec.step % config.log_every == 0) {
      result.trace.push_back(rec);
      if (to_disk) append_trace(trace_path, rec);
      if (options.on_record) options.on_record(rec);
    }
    if (to_disk && config.checkpoint_every > 0 &&
        state.step % config.checkpoint_every == 0)
      save_checkpoint(state, config, checkpoint_path(state.step));
  }

  if (to_disk) {
    result.final_checkpoint = checkpoint_path(state.step);
    save_checkpoint(state, config, result.final_checkpoint);
  }
  return result;
}

// ---- Checkpoint I/O ---------------------------------------------------------------

namespace {

constexpr char kMagic[5] = {'U', 'W', 'H', 'D', 'N'};
constexpr std::uint32_t kVersion = 1;

void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ostream& os, T v) {
  write_bytes(os, &v, sizeof(T));
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  write_bytes(os, s.data(), s.size());
}

void write_tensor(std::ostream& os, const Tensor& t) {
  const Shape4& s = t.shape();
  for (std::uint64_t d : {s.n, s.c, s.h, s.w}) write_pod<std::uint64_t>(os, d);
  write_bytes(os, t.data(), t.numel() * sizeof(Scalar));
}

void read_bytes(std::istream& is, void* p, std::size_t n,
                const std::string& what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (is.gcount() != static_cast<std::streamsize>(n))
    throw ValidationError("truncated checkpoint while reading " + what);
}

template <typename T>
T read_pod(std::istream& is, const std::string& what) {
  T v;
  read_bytes(is, &v, sizeof(T), what);
  return v;
}

std::string read_string(std::istream& is, const std::string& what) {
  const auto n = read_pod<std::uint32_t>(is, what + " length");
  std::string s(n, '\0');
  read_bytes(is, s.data(), n, what);
  return s;
}

Tensor read_tensor(std::istream& is, const std::string& what) {
  Shape4 s;
  s.n = read_pod<std::uint64_t>(is, what + " shape");
  s.c = read_pod<std::uint64_t>(is, what + " shape");
  s.h = read_pod<std::uint64_t>(is, what + " shape");
  s.w = read_pod<std::uint64_t>(is, what + " shape");
  if (s.numel() > (1ULL << 32))
    throw ValidationError("implausible tensor size in checkpoint: " + s.str());
  Tensor t(s);
  read_bytes(is, t.data(), t.numel() * sizeof(Scalar), what + " data");
  return t;
}

void write_optimizer(std::ostream& os, const Adam& opt) {
  write_pod<std::uint64_t>(os, opt.step_count());
  for (const Tensor& t : opt.first_moments()) write_tensor(os, t);
  for (const Tensor& t : opt.second_moments()) write_tensor(os, t);
}

void read_optimizer(std::istream& is, Adam& opt, std::size_t n_params,
                    const std::string& what) {
  const auto t = read_pod<std::uint64_t>(is, what + " step count");
  std::vector<Tensor> m, v;
  for (std::size_t i = 0; i < n_params; ++i)
    m.push_back(read_tensor(is, what + " first moment"));
  for (std::size_t i = 0; i < n_params; ++i)
    v.push_back(read_tensor(is, what + " second moment"));
  opt.restore_moments(t, std::move(m), std::move(v));
}

}  // namespace

void save_checkpoint(TrainState& state, const TrainConfig& config,
                     const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  // Write to a temp file first so a failed write never leaves a torn file.
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw RuntimeFailure("cannot open for write: " + tmp.string());
    write_bytes(os, kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(os, kVersion);
    write_pod<std::uint64_t>(os, config.arch_hash());
    write_string(os, config.arch_descriptor());
    write_string(os, config.to_json_text());
    write_pod<std::uint64_t>(os, state.epoch);
    write_pod<std::uint64_t>(os, state.step);
    write_string(os, state.rng.serialize_state());
    const auto params = state.all_parameters();
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
    for (const Parameter* p : params) {
      write_string(os, p->name);
      write_tensor(os, p->value);
    }
    write_optimizer(os, state.opt_generators);
    write_optimizer(os, state.opt_discriminators);
    if (!os) throw RuntimeFailure("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open checkpoint: " + path.string());

  char magic[5];
  read_bytes(is, magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ValidationError("not a UWHDN checkpoint: " + path.string());
  const auto version = read_pod<std::uint32_t>(is, "version");
  if (version != kVersion)
    throw ValidationError("unsupported checkpoint schema version " +
                          std::to_string(version) + " (expected " +
                          std::to_string(kVersion) + ")");
  const auto stored_hash = read_pod<std::uint64_t>(is, "architecture hash");
  const std::string stored_desc = read_string(is, "architecture descriptor");
  const std::string config_json = read_string(is, "config");

  LoadedCheckpoint out;
  out.config = TrainConfig::from_json_text(config_json);
  if (out.config.arch_hash() != stored_hash ||
      out.config.arch_descriptor() != stored_desc)
    throw ValidationError(
        "checkpoint architecture hash mismatch: file says '" + stored_desc +
        "', config rebuilds '" + out.config.arch_descriptor() + "'");

  out.state = make_state(out.config);
  out.state->epoch = read_pod<std::uint64_t>(is, "epoch");
  out.state->step = read_pod<std::uint64_t>(is, "step");
  out.state->rng.restore_state(read_string(is, "rng state"));

  const auto params = out.state->all_parameters();
  const auto n = read_pod<std::uint32_t>(is, "parameter count");
  if (n != params.size())
    throw ValidationError("checkpoint parameter count " + std::to_string(n) +
                          " != expected " + std::to_string(params.size()));
  for (Parameter* p : params) {
    const std::string name = read_string(is, "parameter name");
    if (name != p->name)
      throw ValidationError("checkpoint parameter order mismatch: got '" +
                            name + "', expected '" + p->name + "'");
    Tensor t = read_tensor(is, "parameter " + name);
    if (!(t.shape() == p->value.shape()))
      throw ValidationError("checkpoint shape mismatch for " + name + ": " +
                            t.shape().str() + " vs " + p->value.shape().str());
    p->value = std::move(t);
  }
  read_optimizer(is, out.state->opt_generators,
                 out.state->generator_parameters().size(), "generator adam");
  read_optimizer(is, out.state->opt_discriminators,
                 out.state->discriminator_parameters().size(),
                 "discriminator adam");
  return out;
}

// ---- Trace CSV -------------------------------------------------------------------

void append_trace(const fs::path& csv_path, const LossRecord& record) {
  const bool fresh = !fs::exists(csv_path);
  std::ofstream os(csv_path, std::ios::app);
  if (!os) throw RuntimeFailure("cannot open trace for append: " +
                                csv_path.string());
  if (fresh) os << LossRecord::csv_header() << "\n";
  os << record.csv_row() << "\n";
}

std::vector<LossRecord> read_trace(const fs::path& csv_path) {
  std::ifstream is(csv_path);
  if (!is) throw ValidationError("cannot open trace: " + csv_path.string());
  std::string line;
  if (!std::getline(is, line) || line != LossRecord::csv_header())
    throw ValidationError("trace header mismatch in " + csv_path.string());
  std::vector<LossRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    LossRecord r;
    char comma;
    ss >> r.step;
    for (Scalar* v : {&r.l_d1, &r.l_d2, &r.l_d3, &r.l_d4, &r.l_r1, &r.l_r2,
                      &r.l_r3, &r.l_r4, &r.d_adv, &r.d_c, &r.d_u, &r.total_d,
                      &r.total_r, &r.total})
      ss >> comma >> *v;
    if (!ss) throw ValidationError("malformed trace row: " + line);
    out.push_back(r);
  }
  return out;
}

}  // namespace uwhdn::training
