#pragma once

#include <string>
#include <vector>

#include "uwhdn/nn.hpp"

namespace uwhdn::hdn {

// Spatial downsampling factor of both encoders (two stride-2 layers).
inline constexpr std::size_t kDownsample = 4;

struct HdnConfig {
  std::size_t base_width = 64;  // feature channels; divisible by 4
  Scalar lrelu_slope = 0.2;

  void validate() const;
};

// Per-layer outputs of the haze encoder; intermediates.back() is the final map.
struct EncoderTrace {
  std::vector<Tensor> intermediates;
  const Tensor& final() const { return intermediates.back(); }
};
struct EncoderTraceV {
  std::vector<Value> intermediates;
  Value final() const { return intermediates.back(); }
};

// Four conv layers: stride 2, 2, 1, 1; leaky-relu between, linear final map.
class Encoder {
 public:
  Encoder() = default;
  Encoder(const std::string& name, const HdnConfig& cfg, Rng& rng);
  EncoderTraceV forward_trace(Graph& g, Value images);
  Value forward(Graph& g, Value images);
  void collect(std::vector<Parameter*>& out);

 private:
  nn::Conv2d c0_, c1_, c2_, c3_;
  Scalar slope_ = 0.2;
};

// Two residual blocks, two stride-2 transposed convolutions, output head
// mapped to [0,1] through tanh. Consumes the elementwise sum of the content
// and haze feature maps.
class Decoder {
 public:
  Decoder() = default;
  Decoder(const std::string& name, const HdnConfig& cfg, Rng& rng);
  Value forward(Graph& g, Value content, Value haze);
  void collect(std::vector<Parameter*>& out);

 private:
  nn::ResidualBlock r0_, r1_;
  nn::ConvTranspose2d up0_, up1_;
  nn::Conv2d out_;
  Scalar slope_ = 0.2;
};

// Patch-level classifier over feature maps; three layers, logits output.
class FeatureDiscriminator {
 public:
  FeatureDiscriminator() = default;
  FeatureDiscriminator(const std::string& name, const HdnConfig& cfg, Rng& rng);
  Value logits(Graph& g, Value features);
  // Per-location probabilities in (0,1).
  Value probabilities(Graph& g, Value features);
  void collect(std::vector<Parameter*>& out);

 private:
  nn::Conv2d c0_, c1_, c2_;
  Scalar slope_ = 0.2;
};

struct HdnLossWeights {
  Scalar lambda1 = 1.0, lambda2 = 10.0, lambda3 = 1.0, lambda4 = 1.0;
};

// The haze disentanglement network: haze-free encoder, haze encoder, shared
// decoder and the feature discriminator.
class Hdn {
 public:
  explicit Hdn(const HdnConfig& cfg, Rng init_rng);

  // Tensor-mode forward passes (deterministic; build a scratch graph).
  Tensor encode_haze_free(const Tensor& images);
  EncoderTrace encode_haze(const Tensor& images);
  Tensor decode(const Tensor& content, const Tensor& haze);
  // I_con: decoder fed the haze-free map with a zero haze slot.
  Tensor content_image(const Tensor& images);

  Encoder& haze_free_encoder() { return e_hf_; }
  Encoder& haze_encoder() { return e_h_; }
  Decoder& decoder() { return decoder_; }
  FeatureDiscriminator& feature_discriminator() { return d_adv_; }

  std::vector<Parameter*> generator_parameters();      // E_hf, E_h, D
  std::vector<Parameter*> discriminator_parameters();  // D_adv
  const HdnConfig& config() const { return cfg_; }
  std::string arch_descriptor() const;

 private:
  HdnConfig cfg_;
  Encoder e_hf_, e_h_;
  Decoder decoder_;
  FeatureDiscriminator d_adv_;
};

// ---- Losses -----------------------------------------------------------------

struct AdversarialLosses {
  Scalar discriminator_loss = 0.0;
  Scalar generator_loss = 0.0;
};

// Eq-style feature adversarial loss: real/fake feature maps judged by the
// feature discriminator. Discriminator side is the binary cross-entropy of
// real-vs-fake; generator side is the non-saturating term on fake only.
AdversarialLosses feature_adversarial_loss(const Tensor& real,
                                           const Tensor& fake, Hdn& net);

// Sum over layers of the per-element mean absolute response.
Scalar feature_regularization_loss(const EncoderTrace& trace);

// Mean absolute error between reconstruction and target.
Scalar disentangled_cyclic_loss(const Tensor& reconstruction,
                                const Tensor& target);

struct HdnLossBreakdown {
  Scalar total = 0.0;  // generator-role weighted sum
  Scalar l_d1 = 0.0, l_d2 = 0.0, l_d3 = 0.0, l_d4 = 0.0;
  Scalar d_adv_discriminator = 0.0;  // reported separately for the alternation
};

HdnLossBreakdown hdn_total_loss(const Tensor& clean, const Tensor& underwater,
                                Hdn& net, const HdnLossWeights& weights);

// ---- Graph-mode building blocks shared with the training loop ---------------

struct HdnForwardV {
  Value f_hf_c, f_hf_w;
  EncoderTraceV trace_c, trace_w;
  Value recon_c, recon_w;      // D(F_hf + F_h) per domain
  Value content_c, content_w;  // D(F_hf, 0) per domain
};

HdnForwardV hdn_forward(Graph& g, Hdn& net, Value clean, Value underwater);

struct HdnGeneratorTermsV {
  Value l_d1, l_d2, l_d3, l_d4;
  Value total;
};

HdnGeneratorTermsV hdn_generator_terms(Graph& g, Hdn& net,
                                       const HdnForwardV& fwd, Value clean,
                                       Value underwater,
                                       const HdnLossWeights& weights);

// Discriminator-role loss on detached features.
Value hdn_discriminator_loss(Graph& g, Hdn& net, const HdnForwardV& fwd);

}  // namespace uwhdn::hdn
