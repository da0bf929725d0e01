#include "uwhdn/hdn.hpp"

#include "uwhdn/error.hpp"

namespace uwhdn::hdn {

void HdnConfig::validate() const {
  if (base_width < 4 || base_width % 4 != 0)
    throw ValidationError("base_width must be a positive multiple of 4");
  if (!(lrelu_slope > 0.0 && lrelu_slope < 1.0))
    throw ValidationError("lrelu_slope must lie in (0, 1)");
}

namespace {

void check_encoder_input(const Shape4& s) {
  if (s.c != 3)
    throw ValidationError("encoder expects 3-channel images, got " + s.str());
  if (s.h % kDownsample != 0 || s.w % kDownsample != 0)
    throw ValidationError("encoder input spatial size " + s.str() +
                          " must be divisible by " +
                          std::to_string(kDownsample));
}

}  // namespace

Encoder::Encoder(const std::string& name, const HdnConfig& cfg, Rng& rng)
    : c0_(name + ".c0", 3, cfg.base_width, 3, 2, 1, rng),
      c1_(name + ".c1", cfg.base_width, cfg.base_width, 3, 2, 1, rng),
      c2_(name + ".c2", cfg.base_width, cfg.base_width, 3, 1, 1, rng),
      c3_(name + ".c3", cfg.base_width, cfg.base_width, 3, 1, 1, rng),
      slope_(cfg.lrelu_slope) {}

EncoderTraceV Encoder::forward_trace(Graph& g, Value images) {
  check_encoder_input(images.shape());
  Value x = affine(images, 2.0, -1.0);  // [0,1] -> [-1,1]
  EncoderTraceV trace;
  x = leaky_relu(c0_(g, x), slope_);
  trace.intermediates.push_back(x);
  x = leaky_relu(c1_(g, x), slope_);
  trace.intermediates.push_back(x);
  x = leaky_relu(c2_(g, x), slope_);
  trace.intermediates.push_back(x);
  x = c3_(g, x);  // final map is linear
  trace.intermediates.push_back(x);
  return trace;
}

Value Encoder::forward(Graph& g, Value images) {
  return forward_trace(g, images).final();
}

void Encoder::collect(std::vector<Parameter*>& out) {
  c0_.collect(out);
  c1_.collect(out);
  c2_.collect(out);
  c3_.collect(out);
}

Decoder::Decoder(const std::string& name, const HdnConfig& cfg, Rng& rng)
    : r0_(name + ".r0", cfg.base_width, cfg.lrelu_slope, rng),
      r1_(name + ".r1", cfg.base_width, cfg.lrelu_slope, rng),
      up0_(name + ".up0", cfg.base_width, cfg.base_width / 2, 4, 2, 1, rng),
      up1_(name + ".up1", cfg.base_width / 2, cfg.base_width / 4, 4, 2, 1, rng),
      out_(name + ".out", cfg.base_width / 4, 3, 3, 1, 1, rng),
      slope_(cfg.lrelu_slope) {}

Value Decoder::forward(Graph& g, Value content, Value haze) {
  if (!(content.shape() == haze.shape()))
    throw ValidationError("decode: content shape " + content.shape().str() +
                          " != haze shape " + haze.shape().str());
  Value x = add(content, haze);
  x = r1_(g, r0_(g, x));
  x = leaky_relu(up0_(g, x), slope_);
  x = leaky_relu(up1_(g, x), slope_);
  // Bounded head remapped to [0,1].
  return affine(tanh_act(out_(g, x)), 0.5, 0.5);
}

void Decoder::collect(std::vector<Parameter*>& out) {
  r0_.collect(out);
  r1_.collect(out);
  up0_.collect(out);
  up1_.collect(out);
  out_.collect(out);
}

FeatureDiscriminator::FeatureDiscriminator(const std::string& name,
                                           const HdnConfig& cfg, Rng& rng)
    : c0_(name + ".c0", cfg.base_width, cfg.base_width, 4, 2, 1, rng),
      c1_(name + ".c1", cfg.base_width, cfg.base_width, 4, 2, 1, rng),
      c2_(name + ".c2", cfg.base_width, 1, 3, 1, 1, rng),
      slope_(cfg.lrelu_slope) {}

Value FeatureDiscriminator::logits(Graph& g, Value features) {
  Value x = leaky_relu(c0_(g, features), slope_);
  x = leaky_relu(c1_(g, x), slope_);
  return c2_(g, x);
}

Value FeatureDiscriminator::probabilities(Graph& g, Value features) {
  return sigmoid(logits(g, features));
}

void FeatureDiscriminator::collect(std::vector<Parameter*>& out) {
  c0_.collect(out);
  c1_.collect(out);
  c2_.collect(out);
}

Hdn::Hdn(const HdnConfig& cfg, Rng init_rng) : cfg_(cfg) {
  cfg_.validate();
  Rng r_hf = init_rng.derive(1), r_h = init_rng.derive(2),
      r_dec = init_rng.derive(3), r_adv = init_rng.derive(4);
  e_hf_ = Encoder("e_hf", cfg_, r_hf);
  e_h_ = Encoder("e_h", cfg_, r_h);
  decoder_ = Decoder("decoder", cfg_, r_dec);
  d_adv_ = FeatureDiscriminator("d_adv", cfg_, r_adv);
}

Tensor Hdn::encode_haze_free(const Tensor& images) {
  Graph g;
  return e_hf_.forward(g, g.input(images)).tensor();
}

EncoderTrace Hdn::encode_haze(const Tensor& images) {
  Graph g;
  EncoderTraceV v = e_h_.forward_trace(g, g.input(images));
  EncoderTrace out;
  for (const Value& t : v.intermediates)
    out.intermediates.push_back(t.tensor());
  return out;
}

Tensor Hdn::decode(const Tensor& content, const Tensor& haze) {
  Graph g;
  return decoder_.forward(g, g.input(content), g.input(haze)).tensor();
}

Tensor Hdn::content_image(const Tensor& images) {
  Graph g;
  Value f_hf = e_hf_.forward(g, g.input(images));
  Value zeros = g.input(Tensor(f_hf.shape()));
  return decoder_.forward(g, f_hf, zeros).tensor();
}

std::vector<Parameter*> Hdn::generator_parameters() {
  std::vector<Parameter*> out;
  e_hf_.collect(out);
  e_h_.collect(out);
  decoder_.collect(out);
  return out;
}

std::vector<Parameter*> Hdn::discriminator_parameters() {
  std::vector<Parameter*> out;
  d_adv_.collect(out);
  return out;
}

std::string Hdn::arch_descriptor() const {
  return "hdn.v1(enc:3-" + std::to_string(cfg_.base_width) +
         "x4[s2,s2,s1,s1];dec:res2+up2;d_adv:3layer)";
}

// ---- Losses -----------------------------------------------------------------

AdversarialLosses feature_adversarial_loss(const Tensor& real,
                                           const Tensor& fake, Hdn& net) {
  if (!(real.shape() == fake.shape()))
    throw ValidationError("feature_adversarial_loss: shape mismatch " +
                          real.shape().str() + " vs " + fake.shape().str());
  if (!all_finite(real) || !all_finite(fake))
    throw ValidationError("feature_adversarial_loss: non-finite inputs");
  Graph g;
  Value real_logits = net.feature_discriminator().logits(g, g.input(real));
  Value fake_logits = net.feature_discriminator().logits(g, g.input(fake));
  // -E[log D(real)] - E[log(1 - D(fake))] with D = sigmoid(logits).
  const Scalar d_loss = mean_softplus(real_logits, -1.0).item() +
                        mean_softplus(fake_logits, +1.0).item();
  // Non-saturating generator term: -E[log D(fake)].
  const Scalar g_loss = mean_softplus(fake_logits, -1.0).item();
  return {d_loss, g_loss};
}

Scalar feature_regularization_loss(const EncoderTrace& trace) {
  if (trace.intermediates.empty())
    throw ValidationError("feature_regularization_loss: empty trace");
  Scalar total = 0.0;
  for (const Tensor& t : trace.intermediates) total += mean_abs(t);
  return total;
}

Scalar disentangled_cyclic_loss(const Tensor& reconstruction,
                                const Tensor& target) {
  if (!(reconstruction.shape() == target.shape()))
    throw ValidationError("disentangled_cyclic_loss: shape mismatch " +
                          reconstruction.shape().str() + " vs " +
                          target.shape().str());
  Scalar s = 0.0;
  for (std::size_t i = 0; i < target.numel(); ++i)
    s += std::abs(reconstruction[i] - target[i]);
  return s / static_cast<Scalar>(target.numel());
}

HdnForwardV hdn_forward(Graph& g, Hdn& net, Value clean, Value underwater) {
  HdnForwardV f;
  f.trace_c = net.haze_encoder().forward_trace(g, clean);
  f.trace_w = net.haze_encoder().forward_trace(g, underwater);
  f.f_hf_c = net.haze_free_encoder().forward(g, clean);
  f.f_hf_w = net.haze_free_encoder().forward(g, underwater);
  f.recon_c = net.decoder().forward(g, f.f_hf_c, f.trace_c.final());
  f.recon_w = net.decoder().forward(g, f.f_hf_w, f.trace_w.final());
  Value zeros_c = g.input(Tensor(f.f_hf_c.shape()));
  Value zeros_w = g.input(Tensor(f.f_hf_w.shape()));
  f.content_c = net.decoder().forward(g, f.f_hf_c, zeros_c);
  f.content_w = net.decoder().forward(g, f.f_hf_w, zeros_w);
  return f;
}

HdnGeneratorTermsV hdn_generator_terms(Graph& g, Hdn& net,
                                       const HdnForwardV& fwd, Value clean,
                                       Value underwater,
                                       const HdnLossWeights& weights) {
  HdnGeneratorTermsV t;
  Value fake_logits = net.feature_discriminator().logits(g, fwd.f_hf_w);
  t.l_d1 = mean_softplus(fake_logits, -1.0);
  std::vector<std::pair<Scalar, Value>> reg_terms;
  for (const Value& layer : fwd.trace_c.intermediates)
    reg_terms.emplace_back(1.0, mean_abs(layer));
  t.l_d2 = weighted_sum(reg_terms);
  t.l_d3 = mean_abs_diff(fwd.recon_c, clean);
  t.l_d4 = mean_abs_diff(fwd.recon_w, underwater);
  t.total = weighted_sum({{weights.lambda1, t.l_d1},
                          {weights.lambda2, t.l_d2},
                          {weights.lambda3, t.l_d3},
                          {weights.lambda4, t.l_d4}});
  return t;
}

Value hdn_discriminator_loss(Graph& g, Hdn& net, const HdnForwardV& fwd) {
  Value real_logits =
      net.feature_discriminator().logits(g, detach(fwd.f_hf_c));
  Value fake_logits =
      net.feature_discriminator().logits(g, detach(fwd.f_hf_w));
  return weighted_sum({{1.0, mean_softplus(real_logits, -1.0)},
                       {1.0, mean_softplus(fake_logits, +1.0)}});
}

HdnLossBreakdown hdn_total_loss(const Tensor& clean, const Tensor& underwater,
                                Hdn& net, const HdnLossWeights& weights) {
  if (clean.shape().n == 0 || underwater.shape().n == 0)
    throw ValidationError("hdn_total_loss: empty batch side");
  Graph g;
  Value c = g.input(clean), w = g.input(underwater);
  HdnForwardV fwd = hdn_forward(g, net, c, w);
  HdnGeneratorTermsV t = hdn_generator_terms(g, net, fwd, c, w, weights);
  HdnLossBreakdown out;
  out.l_d1 = t.l_d1.item();
  out.l_d2 = t.l_d2.item();
  out.l_d3 = t.l_d3.item();
  out.l_d4 = t.l_d4.item();
  out.total = t.total.item();
  out.d_adv_discriminator = hdn_discriminator_loss(g, net, fwd).item();
  return out;
}

}  // namespace uwhdn::hdn
