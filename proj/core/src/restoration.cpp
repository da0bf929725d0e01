#include "uwhdn/restoration.hpp"

#include "uwhdn/error.hpp"

namespace uwhdn::restoration {

void RestorationConfig::validate() const {
  if (base_width < 4 || base_width % 4 != 0)
    throw ValidationError("base_width must be a positive multiple of 4");
  if (haze_channels == 0)
    throw ValidationError("haze_channels must be positive");
  if (!(lrelu_slope > 0.0 && lrelu_slope < 1.0))
    throw ValidationError("lrelu_slope must lie in (0, 1)");
}

namespace {

void check_image_input(const Shape4& s, const char* who) {
  if (s.c != 3)
    throw ValidationError(std::string(who) + " expects 3-channel images, got " +
                          s.str());
  if (s.h % 4 != 0 || s.w % 4 != 0)
    throw ValidationError(std::string(who) + " input spatial size " + s.str() +
                          " must be divisible by 4");
}

}  // namespace

ContentRestorer::ContentRestorer(const std::string& name,
                                 const RestorationConfig& cfg, Rng& rng)
    : c0_(name + ".c0", 3, cfg.base_width, 3, 1, 1, rng),
      c1_(name + ".c1", cfg.base_width, cfg.base_width, 3, 2, 1, rng),
      c2_(name + ".c2", cfg.base_width, cfg.base_width, 3, 2, 1, rng),
      r0_(name + ".r0", cfg.base_width, cfg.lrelu_slope, rng),
      r1_(name + ".r1", cfg.base_width, cfg.lrelu_slope, rng),
      up0_(name + ".up0", cfg.base_width, cfg.base_width / 2, 4, 2, 1, rng),
      up1_(name + ".up1", cfg.base_width / 2, cfg.base_width / 4, 4, 2, 1, rng),
      out_(name + ".out", cfg.base_width / 4, 3, 3, 1, 1, rng),
      slope_(cfg.lrelu_slope) {
  // Identity restoration at step 0.
  out_.zero_init();
}

Value ContentRestorer::residual(Graph& g, Value content) {
  check_image_input(content.shape(), "restore");
  Value x = affine(content, 2.0, -1.0);
  x = leaky_relu(c0_(g, x), slope_);
  x = leaky_relu(c1_(g, x), slope_);
  x = leaky_relu(c2_(g, x), slope_);
  x = r1_(g, r0_(g, x));
  x = leaky_relu(up0_(g, x), slope_);
  x = leaky_relu(up1_(g, x), slope_);
  return tanh_act(out_(g, x));
}

Value ContentRestorer::restore(Graph& g, Value content) {
  return add(residual(g, content), content);
}

Tensor ContentRestorer::restore_eval(const Tensor& content) {
  Graph g;
  Tensor out = restore(g, g.input(content)).tensor();
  clamp_inplace(out, 0.0, 1.0);
  return out;
}

void ContentRestorer::collect(std::vector<Parameter*>& out) {
  c0_.collect(out);
  c1_.collect(out);
  c2_.collect(out);
  r0_.collect(out);
  r1_.collect(out);
  up0_.collect(out);
  up1_.collect(out);
  out_.collect(out);
}

UnderwaterGenerator::UnderwaterGenerator(const std::string& name,
                                         const RestorationConfig& cfg, Rng& rng)
    : c0_(name + ".c0", 3, cfg.base_width, 3, 1, 1, rng),
      c1_(name + ".c1", cfg.base_width, cfg.base_width, 3, 2, 1, rng),
      c2_(name + ".c2", cfg.base_width, cfg.base_width, 3, 2, 1, rng),
      fuse_(name + ".fuse", cfg.base_width + cfg.haze_channels, cfg.base_width,
            1, 1, 0, rng),
      r0_(name + ".r0", cfg.base_width, cfg.lrelu_slope, rng),
      r1_(name + ".r1", cfg.base_width, cfg.lrelu_slope, rng),
      up0_(name + ".up0", cfg.base_width, cfg.base_width / 2, 4, 2, 1, rng),
      up1_(name + ".up1", cfg.base_width / 2, cfg.base_width / 4, 4, 2, 1, rng),
      out_(name + ".out", cfg.base_width / 4, 3, 3, 1, 1, rng),
      slope_(cfg.lrelu_slope),
      haze_channels_(cfg.haze_channels) {}

Value UnderwaterGenerator::forward(Graph& g, Value image, Value haze) {
  check_image_input(image.shape(), "regenerate_underwater");
  if (haze.shape().c != haze_channels_)
    throw ValidationError(
        "regenerate_underwater: haze map has " +
        std::to_string(haze.shape().c) + " channels, fusion block expects " +
        std::to_string(haze_channels_));
  if (haze.shape().n != image.shape().n)
    throw ValidationError("regenerate_underwater: batch size mismatch");
  Value x = affine(image, 2.0, -1.0);
  x = leaky_relu(c0_(g, x), slope_);
  x = leaky_relu(c1_(g, x), slope_);
  x = leaky_relu(c2_(g, x), slope_);
  Value h = resize_nearest(haze, x.shape().h, x.shape().w);
  x = leaky_relu(fuse_(g, concat_channels(x, h)), slope_);
  x = r1_(g, r0_(g, x));
  x = leaky_relu(up0_(g, x), slope_);
  x = leaky_relu(up1_(g, x), slope_);
  return affine(tanh_act(out_(g, x)), 0.5, 0.5);
}

void UnderwaterGenerator::collect(std::vector<Parameter*>& out) {
  c0_.collect(out);
  c1_.collect(out);
  c2_.collect(out);
  fuse_.collect(out);
  r0_.collect(out);
  r1_.collect(out);
  up0_.collect(out);
  up1_.collect(out);
  out_.collect(out);
}

PatchDiscriminator::PatchDiscriminator(const std::string& name,
                                       const RestorationConfig& cfg, Rng& rng)
    : c0_(name + ".c0", 3, cfg.base_width, 4, 2, 1, rng),
      c1_(name + ".c1", cfg.base_width, cfg.base_width * 2, 4, 2, 1, rng),
      c2_(name + ".c2", cfg.base_width * 2, 1, 3, 1, 1, rng),
      slope_(cfg.lrelu_slope) {}

Value PatchDiscriminator::scores(Graph& g, Value image) {
  Value x = affine(image, 2.0, -1.0);
  x = leaky_relu(c0_(g, x), slope_);
  x = leaky_relu(c1_(g, x), slope_);
  return c2_(g, x);
}

void PatchDiscriminator::collect(std::vector<Parameter*>& out) {
  c0_.collect(out);
  c1_.collect(out);
  c2_.collect(out);
}

Restoration::Restoration(const RestorationConfig& cfg, Rng init_rng)
    : cfg_(cfg) {
  cfg_.validate();
  Rng r_gc = init_rng.derive(11), r_gu = init_rng.derive(12),
      r_dc = init_rng.derive(13), r_du = init_rng.derive(14);
  g_c_ = ContentRestorer("g_c", cfg_, r_gc);
  g_u_ = UnderwaterGenerator("g_u", cfg_, r_gu);
  d_c_ = PatchDiscriminator("d_c", cfg_, r_dc);
  d_u_ = PatchDiscriminator("d_u", cfg_, r_du);
}

std::vector<Parameter*> Restoration::generator_parameters() {
  std::vector<Parameter*> out;
  g_c_.collect(out);
  g_u_.collect(out);
  return out;
}

std::vector<Parameter*> Restoration::discriminator_parameters() {
  std::vector<Parameter*> out;
  d_c_.collect(out);
  d_u_.collect(out);
  return out;
}

std::string Restoration::arch_descriptor() const {
  return "restoration.v1(g_c:res-unet-" + std::to_string(cfg_.base_width) +
         ";g_u:fuse" + std::to_string(cfg_.haze_channels) +
         ";d:3layer-patch)";
}

// ---- Spec-surface operations --------------------------------------------------

Tensor restore(const Tensor& content, Restoration& net) {
  return net.g_c().restore_eval(content);
}

Tensor regenerate_underwater(const Tensor& clean, const Tensor& haze,
                             Restoration& net) {
  Graph g;
  return net.g_u().forward(g, g.input(clean), g.input(haze)).tensor();
}

hdn::AdversarialLosses image_adversarial_losses(const Tensor& real,
                                                const Tensor& fake,
                                                PatchDiscriminator& d) {
  if (!(real.shape() == fake.shape()))
    throw ValidationError("image_adversarial_losses: shape mismatch " +
                          real.shape().str() + " vs " + fake.shape().str());
  if (!all_finite(real) || !all_finite(fake))
    throw ValidationError("image_adversarial_losses: non-finite inputs");
  Graph g;
  Value real_scores = d.scores(g, g.input(real));
  Value fake_scores = d.scores(g, g.input(fake));
  const Scalar d_loss = mean_square_diff(real_scores, 1.0).item() +
                        mean_square_diff(fake_scores, 0.0).item();
  const Scalar g_loss = mean_square_diff(fake_scores, 1.0).item();
  return {d_loss, g_loss};
}

RestorationForwardV restoration_forward(Graph& g, Restoration& net,
                                        const hdn::HdnForwardV& hdn_fwd) {
  RestorationForwardV f;
  f.restored_w = net.g_c().restore(g, hdn_fwd.content_w);
  f.restored_c = net.g_c().restore(g, hdn_fwd.content_c);
  // Haze features cached from the same forward pass that feeds L_d4.
  f.regen_w = net.g_u().forward(g, f.restored_w, hdn_fwd.trace_w.final());
  return f;
}

RestorationGeneratorTermsV restoration_generator_terms(
    Graph& g, Restoration& net, const RestorationForwardV& fwd, Value clean,
    Value underwater, const RestorationLossWeights& weights) {
  RestorationGeneratorTermsV t;
  t.l_r1 = mean_square_diff(net.d_c().scores(g, fwd.restored_w), 1.0);
  t.l_r2 = mean_square_diff(net.d_u().scores(g, fwd.regen_w), 1.0);
  t.l_r3 = mean_abs_diff(fwd.regen_w, underwater);
  t.l_r4 = mean_abs_diff(fwd.restored_c, clean);
  t.total = weighted_sum({{weights.omega1, t.l_r1},
                          {weights.omega2, t.l_r2},
                          {weights.omega3, t.l_r3},
                          {weights.omega4, t.l_r4}});
  return t;
}

RestorationDiscriminatorLossesV restoration_discriminator_losses(
    Graph& g, Restoration& net, const RestorationForwardV& fwd, Value clean,
    Value underwater) {
  RestorationDiscriminatorLossesV out;
  out.d_c_loss =
      weighted_sum({{1.0, mean_square_diff(net.d_c().scores(g, clean), 1.0)},
                    {1.0, mean_square_diff(
                              net.d_c().scores(g, detach(fwd.restored_w)),
                              0.0)}});
  out.d_u_loss = weighted_sum(
      {{1.0, mean_square_diff(net.d_u().scores(g, underwater), 1.0)},
       {1.0, mean_square_diff(net.d_u().scores(g, detach(fwd.regen_w)), 0.0)}});
  return out;
}

CycleLossPair cycle_losses(const Tensor& underwater, const Tensor& clean,
                           hdn::Hdn& hdn_net, Restoration& net) {
  Graph g;
  Value c = g.input(clean), w = g.input(underwater);
  hdn::HdnForwardV hf = hdn::hdn_forward(g, hdn_net, c, w);
  RestorationForwardV rf = restoration_forward(g, net, hf);
  return {mean_abs_diff(rf.regen_w, w).item(),
          mean_abs_diff(rf.restored_c, c).item()};
}

RestorationLossBreakdown restoration_total_loss(
    const Tensor& underwater, const Tensor& clean, hdn::Hdn& hdn_net,
    Restoration& net, const RestorationLossWeights& weights) {
  if (clean.shape().n == 0 || underwater.shape().n == 0)
    throw ValidationError("restoration_total_loss: empty batch side");
  Graph g;
  Value c = g.input(clean), w = g.input(underwater);
  hdn::HdnForwardV hf = hdn::hdn_forward(g, hdn_net, c, w);
  RestorationForwardV rf = restoration_forward(g, net, hf);
  RestorationGeneratorTermsV t =
      restoration_generator_terms(g, net, rf, c, w, weights);
  RestorationDiscriminatorLossesV d =
      restoration_discriminator_losses(g, net, rf, c, w);
  RestorationLossBreakdown out;
  out.l_r1 = t.l_r1.item();
  out.l_r2 = t.l_r2.item();
  out.l_r3 = t.l_r3.item();
  out.l_r4 = t.l_r4.item();
  out.total = t.total.item();
  out.d_c_discriminator = d.d_c_loss.item();
  out.d_u_discriminator = d.d_u_loss.item();
  return out;
}

}  // namespace uwhdn::restoration
