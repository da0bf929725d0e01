#pragma once

#include "uwhdn/hdn.hpp"
#include "uwhdn/nn.hpp"

namespace uwhdn::restoration {

struct RestorationConfig {
  std::size_t base_width = 64;    // divisible by 4
  std::size_t haze_channels = 64; // channel count of the haze feature map
  Scalar lrelu_slope = 0.2;

  void validate() const;
};

// G_C: residual restorer. restore(x) = G_C(x) + x with a tanh-bounded
// residual; the final conv starts zero so restoration begins at identity.
class ContentRestorer {
 public:
  ContentRestorer() = default;
  ContentRestorer(const std::string& name, const RestorationConfig& cfg,
                  Rng& rng);
  Value residual(Graph& g, Value content);
  // Unclamped; training losses see this directly.
  Value restore(Graph& g, Value content);
  // Inference path, clamped to [0,1].
  Tensor restore_eval(const Tensor& content);
  void collect(std::vector<Parameter*>& out);

 private:
  nn::Conv2d c0_, c1_, c2_;
  nn::ResidualBlock r0_, r1_;
  nn::ConvTranspose2d up0_, up1_;
  nn::Conv2d out_;
  Scalar slope_ = 0.2;
};

// G_U: direct synthesis of an underwater image from a clean-domain image and
// the disentangled haze features, fused at the bottleneck by channel
// concatenation and a 1x1 projection.
class UnderwaterGenerator {
 public:
  UnderwaterGenerator() = default;
  UnderwaterGenerator(const std::string& name, const RestorationConfig& cfg,
                      Rng& rng);
  Value forward(Graph& g, Value image, Value haze);
  void collect(std::vector<Parameter*>& out);

 private:
  nn::Conv2d c0_, c1_, c2_, fuse_;
  nn::ResidualBlock r0_, r1_;
  nn::ConvTranspose2d up0_, up1_;
  nn::Conv2d out_;
  Scalar slope_ = 0.2;
  std::size_t haze_channels_ = 0;
};

// Patch-level image discriminator with raw (least-squares) outputs.
class PatchDiscriminator {
 public:
  PatchDiscriminator() = default;
  PatchDiscriminator(const std::string& name, const RestorationConfig& cfg,
                     Rng& rng);
  Value scores(Graph& g, Value image);
  void collect(std::vector<Parameter*>& out);

 private:
  nn::Conv2d c0_, c1_, c2_;
  Scalar slope_ = 0.2;
};

struct RestorationLossWeights {
  Scalar omega1 = 1.0, omega2 = 1.0, omega3 = 10.0, omega4 = 10.0;
};

class Restoration {
 public:
  Restoration(const RestorationConfig& cfg, Rng init_rng);

  ContentRestorer& g_c() { return g_c_; }
  UnderwaterGenerator& g_u() { return g_u_; }
  PatchDiscriminator& d_c() { return d_c_; }
  PatchDiscriminator& d_u() { return d_u_; }

  std::vector<Parameter*> generator_parameters();      // G_C, G_U
  std::vector<Parameter*> discriminator_parameters();  // D_C, D_U
  const RestorationConfig& config() const { return cfg_; }
  std::string arch_descriptor() const;

 private:
  RestorationConfig cfg_;
  ContentRestorer g_c_;
  UnderwaterGenerator g_u_;
  PatchDiscriminator d_c_, d_u_;
};

// ---- Spec-surface operations --------------------------------------------------

// I_res = G_C(I_con) + I_con, clamped to [0,1] (inference form).
Tensor restore(const Tensor& content, Restoration& net);

Tensor regenerate_underwater(const Tensor& clean, const Tensor& haze,
                             Restoration& net);

// Least-squares adversarial pair for one image discriminator.
hdn::AdversarialLosses image_adversarial_losses(const Tensor& real,
                                                const Tensor& fake,
                                                PatchDiscriminator& d);

struct CycleLossPair {
  Scalar l_r3 = 0.0, l_r4 = 0.0;
};

CycleLossPair cycle_losses(const Tensor& underwater, const Tensor& clean,
                           hdn::Hdn& hdn_net, Restoration& net);

struct RestorationLossBreakdown {
  Scalar total = 0.0;  // generator-role weighted sum
  Scalar l_r1 = 0.0, l_r2 = 0.0, l_r3 = 0.0, l_r4 = 0.0;
  Scalar d_c_discriminator = 0.0, d_u_discriminator = 0.0;
};

RestorationLossBreakdown restoration_total_loss(
    const Tensor& underwater, const Tensor& clean, hdn::Hdn& hdn_net,
    Restoration& net, const RestorationLossWeights& weights);

// ---- Graph-mode building blocks shared with the training loop ----------------

struct RestorationForwardV {
  Value restored_w;  // G_C(content_w) + content_w, unclamped
  Value restored_c;  // G_C(content_c) + content_c, unclamped
  Value regen_w;     // G_U(restored_w, F_h_w)
};

RestorationForwardV restoration_forward(Graph& g, Restoration& net,
                                        const hdn::HdnForwardV& hdn_fwd);

struct RestorationGeneratorTermsV {
  Value l_r1, l_r2, l_r3, l_r4;
  Value total;
};

RestorationGeneratorTermsV restoration_generator_terms(
    Graph& g, Restoration& net, const RestorationForwardV& fwd, Value clean,
    Value underwater, const RestorationLossWeights& weights);

struct RestorationDiscriminatorLossesV {
  Value d_c_loss, d_u_loss;
};

RestorationDiscriminatorLossesV restoration_discriminator_losses(
    Graph& g, Restoration& net, const RestorationForwardV& fwd, Value clean,
    Value underwater);

}  // namespace uwhdn::restoration
