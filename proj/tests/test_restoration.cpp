#include <cmath>

#include "doctest.h"
#include "test_util.hpp"
#include "uwhdn/error.hpp"
#include "uwhdn/restoration.hpp"
#include "uwhdn/training.hpp"

using namespace uwhdn;
using namespace uwhdn::restoration;
using testutil::grad_close;
using testutil::random_tensor;

namespace {

RestorationConfig small_config() {
  RestorationConfig cfg;
  cfg.base_width = 8;
  cfg.haze_channels = 8;
  return cfg;
}

hdn::HdnConfig small_hdn_config() {
  hdn::HdnConfig cfg;
  cfg.base_width = 8;
  return cfg;
}

}  // namespace

TEST_CASE("zero-initialized restorer is the exact identity") {
  Restoration net(small_config(), Rng(1));
  Rng rng(2);
  Tensor x = random_tensor({2, 3, 16, 16}, rng, 0.0, 1.0);
  Tensor restored = restore(x, net);
  CHECK(bitwise_equal(restored, x));
  // Graph-mode (training, unclamped) path is also exactly x.
  Graph g;
  CHECK(bitwise_equal(net.g_c().restore(g, g.input(x)).tensor(), x));
}

TEST_CASE("restore keeps the input shape") {
  Restoration net(small_config(), Rng(3));
  Rng rng(4);
  Tensor x = random_tensor({1, 3, 128, 128}, rng, 0.0, 1.0);
  CHECK(restore(x, net).shape() == x.shape());
  Tensor odd({1, 3, 18, 16}, 0.5);
  CHECK_THROWS_AS((void)restore(odd, net), ValidationError);
}

TEST_CASE("regenerate_underwater shape and fusion contract") {
  Restoration net(small_config(), Rng(5));
  Rng rng(6);
  Tensor clean = random_tensor({4, 3, 32, 32}, rng, 0.0, 1.0);
  Tensor haze = random_tensor({4, 8, 8, 8}, rng);
  Tensor out = regenerate_underwater(clean, haze, net);
  CHECK(out.shape() == Shape4{4, 3, 32, 32});
  CHECK(min_value(out) >= 0.0);
  CHECK(max_value(out) <= 1.0);
  // purity
  CHECK(bitwise_equal(regenerate_underwater(clean, haze, net), out));
  // haze maps of another spatial size are resized to the bottleneck
  Tensor haze_other = random_tensor({4, 8, 5, 5}, rng);
  CHECK(regenerate_underwater(clean, haze_other, net).shape() ==
        Shape4{4, 3, 32, 32});

  Tensor wrong_channels = random_tensor({4, 6, 8, 8}, rng);
  CHECK_THROWS_WITH_AS((void)regenerate_underwater(clean, wrong_channels, net),
                       doctest::Contains("channels"), ValidationError);
}

TEST_CASE("image adversarial losses: closed form with forced 0.5 output") {
  RestorationConfig cfg = small_config();
  Restoration net(cfg, Rng(7));
  // Zero every weight, then set the final bias so D == 0.5 on all locations.
  std::vector<Parameter*> disc = net.discriminator_parameters();
  for (Parameter* p : disc) p->value = Tensor(p->value.shape());
  for (Parameter* p : disc)
    if (p->name == "d_c.c2.bias") p->value = Tensor(p->value.shape(), 0.5);
  Rng rng(8);
  Tensor real = random_tensor({2, 3, 16, 16}, rng, 0.0, 1.0);
  Tensor fake = random_tensor({2, 3, 16, 16}, rng, 0.0, 1.0);
  hdn::AdversarialLosses l = image_adversarial_losses(real, fake, net.d_c());
  CHECK(l.discriminator_loss == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(l.generator_loss == doctest::Approx(0.25).epsilon(1e-9));

  Tensor bad = fake;
  bad[0] = std::numeric_limits<Scalar>::infinity();
  CHECK_THROWS_AS((void)image_adversarial_losses(real, bad, net.d_c()),
                  ValidationError);
}

TEST_CASE("image adversarial losses match an independent LSGAN oracle") {
  Restoration net(small_config(), Rng(9));
  Rng rng(10);
  Tensor real = random_tensor({1, 3, 16, 16}, rng, 0.0, 1.0);
  Tensor fake = random_tensor({1, 3, 16, 16}, rng, 0.0, 1.0);

  // Oracle: reuse the network's own scores (already verified through the
  // autograd conv tests) but recompute the LSGAN algebra independently.
  Graph g;
  Tensor sr = net.d_u().scores(g, g.input(real)).tensor();
  Tensor sf = net.d_u().scores(g, g.input(fake)).tensor();
  double d_expect = 0.0, g_expect = 0.0;
  for (std::size_t i = 0; i < sr.numel(); ++i)
    d_expect += (sr[i] - 1.0) * (sr[i] - 1.0);
  d_expect /= static_cast<double>(sr.numel());
  double fake_sq = 0.0;
  for (std::size_t i = 0; i < sf.numel(); ++i) {
    fake_sq += sf[i] * sf[i];
    g_expect += (sf[i] - 1.0) * (sf[i] - 1.0);
  }
  d_expect += fake_sq / static_cast<double>(sf.numel());
  g_expect /= static_cast<double>(sf.numel());

  hdn::AdversarialLosses l = image_adversarial_losses(real, fake, net.d_u());
  CHECK(l.discriminator_loss == doctest::Approx(d_expect).epsilon(1e-9));
  CHECK(l.generator_loss == doctest::Approx(g_expect).epsilon(1e-9));
}

TEST_CASE("cycle losses match a step-by-step compositional oracle") {
  hdn::Hdn hnet(small_hdn_config(), Rng(11));
  Restoration rnet(small_config(), Rng(12));
  Rng rng(13);
  Tensor uw = random_tensor({1, 3, 16, 16}, rng, 0.0, 1.0);
  Tensor clean = random_tensor({1, 3, 16, 16}, rng, 0.0, 1.0);

  CycleLossPair pair = cycle_losses(uw, clean, hnet, rnet);

  // Recompose through the public pieces.
  Tensor content_w = hnet.content_image(uw);
  Tensor content_c = hnet.content_image(clean);
  Tensor haze_w = hnet.encode_haze(uw).final();
  Graph g;
  Value restored_w = rnet.g_c().restore(g, g.input(content_w));
  Value regen_w = rnet.g_u().forward(g, restored_w, g.input(haze_w));
  Value restored_c = rnet.g_c().restore(g, g.input(content_c));
  const double l_r3 = mean_abs_diff(regen_w, g.input(uw)).item();
  const double l_r4 = mean_abs_diff(restored_c, g.input(clean)).item();

  CHECK(pair.l_r3 == doctest::Approx(l_r3).epsilon(1e-9));
  CHECK(pair.l_r4 == doctest::Approx(l_r4).epsilon(1e-9));
}

TEST_CASE("with a zero restorer, L_r4 equals the content reconstruction error") {
  hdn::Hdn hnet(small_hdn_config(), Rng(14));
  Restoration rnet(small_config(), Rng(15));  // fresh: G_C output layer is zero
  Rng rng(16);
  Tensor uw = random_tensor({2, 3, 16, 16}, rng, 0.0, 1.0);
  Tensor clean = random_tensor({2, 3, 16, 16}, rng, 0.0, 1.0);
  CycleLossPair pair = cycle_losses(uw, clean, hnet, rnet);
  const Scalar expect =
      hdn::disentangled_cyclic_loss(hnet.content_image(clean), clean);
  CHECK(pair.l_r4 == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("restoration total loss assembles its terms") {
  hdn::Hdn hnet(small_hdn_config(), Rng(17));
  Restoration rnet(small_config(), Rng(18));
  Rng rng(19);
  Tensor uw = random_tensor({2, 3, 16, 16}, rng, 0.0, 1.0);
  Tensor clean = random_tensor({2, 3, 16, 16}, rng, 0.0, 1.0);

  RestorationLossWeights weights;  // defaults (1, 1, 10, 10)
  CHECK(weights.omega1 == 1.0);
  CHECK(weights.omega2 == 1.0);
  CHECK(weights.omega3 == 10.0);
  CHECK(weights.omega4 == 10.0);

  RestorationLossBreakdown out =
      restoration_total_loss(uw, clean, hnet, rnet, weights);

  // Independent assembly from single-term operations. The generator fakes are
  // rebuilt through the same public forward pieces.
  Tensor content_w = hnet.content_image(uw);
  Tensor content_c = hnet.content_image(clean);
  Tensor haze_w = hnet.encode_haze(uw).final();
  Graph g;
  Value restored_w_v = rnet.g_c().restore(g, g.input(content_w));
  Tensor restored_w = restored_w_v.tensor();
  Tensor regen_w = rnet.g_u().forward(g, restored_w_v, g.input(haze_w)).tensor();
  Tensor restored_c =
      rnet.g_c().restore(g, g.input(content_c)).tensor();

  const Scalar l_r1 =
      image_adversarial_losses(clean, restored_w, rnet.d_c()).generator_loss;
  const Scalar l_r2 =
      image_adversarial_losses(uw, regen_w, rnet.d_u()).generator_loss;
  const Scalar l_r3 = hdn::disentangled_cyclic_loss(regen_w, uw);
  const Scalar l_r4 = hdn::disentangled_cyclic_loss(restored_c, clean);
  const Scalar assembled = weights.omega1 * l_r1 + weights.omega2 * l_r2 +
                           weights.omega3 * l_r3 + weights.omega4 * l_r4;

  CHECK(out.l_r1 == doctest::Approx(l_r1).epsilon(1e-9));
  CHECK(out.l_r2 == doctest::Approx(l_r2).epsilon(1e-9));
  CHECK(out.l_r3 == doctest::Approx(l_r3).epsilon(1e-9));
  CHECK(out.l_r4 == doctest::Approx(l_r4).epsilon(1e-9));
  CHECK(std::abs(out.total - assembled) < 1e-6);
  CHECK(out.d_c_discriminator ==
        doctest::Approx(
            image_adversarial_losses(clean, restored_w, rnet.d_c())
                .discriminator_loss)
            .epsilon(1e-9));
  CHECK(out.d_u_discriminator ==
        doctest::Approx(image_adversarial_losses(uw, regen_w, rnet.d_u())
                            .discriminator_loss)
            .epsilon(1e-9));

  SUBCASE("zero weights zero the total") {
    RestorationLossWeights zero{0.0, 0.0, 0.0, 0.0};
    CHECK(restoration_total_loss(uw, clean, hnet, rnet, zero).total == 0.0);
  }
  SUBCASE("cycle losses are non-negative") {
    CHECK(out.l_r3 >= 0.0);
    CHECK(out.l_r4 >= 0.0);
  }
}

TEST_CASE("restoration gradient check: 10 sampled parameters per network") {
  hdn::Hdn hnet(small_hdn_config(), Rng(20));
  Restoration rnet(small_config(), Rng(21));
  Rng rng(22);
  Tensor uw = random_tensor({2, 3, 16, 16}, rng, 0.0, 1.0);
  Tensor clean = random_tensor({2, 3, 16, 16}, rng, 0.0, 1.0);
  RestorationLossWeights weights;

  auto eval = [&]() {
    return restoration_total_loss(uw, clean, hnet, rnet, weights).total;
  };

  for (Parameter* p : hnet.generator_parameters()) p->zero_grad();
  for (Parameter* p : hnet.discriminator_parameters()) p->zero_grad();
  for (Parameter* p : rnet.generator_parameters()) p->zero_grad();
  for (Parameter* p : rnet.discriminator_parameters()) p->zero_grad();
  Graph g;
  Value c = g.input(clean), w = g.input(uw);
  hdn::HdnForwardV hf = hdn::hdn_forward(g, hnet, c, w);
  RestorationForwardV rf = restoration_forward(g, rnet, hf);
  RestorationGeneratorTermsV terms =
      restoration_generator_terms(g, rnet, rf, c, w, weights);
  g.backward(terms.total);

  auto check_network = [&](const std::string& prefix,
                           std::vector<Parameter*> params) {
    std::vector<Parameter*> mine;
    for (Parameter* p : params)
      if (p->name.rfind(prefix, 0) == 0) mine.push_back(p);
    REQUIRE(!mine.empty());
    Rng pick(Rng::mix(55, std::hash<std::string>{}(prefix)));
    for (int k = 0; k < 10; ++k) {
      Parameter* p = mine[pick.index(mine.size())];
      const std::size_t i = pick.index(p->value.numel());
      const double analytic = p->grad[i];
      INFO(prefix, " ", p->name, "[", i, "] analytic=", analytic);
      CHECK(testutil::fd_grad_matches(analytic, eval, &p->value[i]));
    }
  };
  check_network("g_c.", rnet.generator_parameters());
  check_network("g_u.", rnet.generator_parameters());
  check_network("d_c.", rnet.discriminator_parameters());
  check_network("d_u.", rnet.discriminator_parameters());
}

TEST_CASE("haze conditioning is live after one training step") {
  training::TrainConfig cfg;
  cfg.base_width = 8;
  cfg.patch = 16;
  cfg.batch = 2;
  cfg.seed = 23;
  auto state = training::make_state(cfg);
  Rng rng(24);
  datasets::UnpairedBatch batch;
  batch.underwater = random_tensor({2, 3, 16, 16}, rng, 0.0, 1.0);
  batch.clean = random_tensor({2, 3, 16, 16}, rng, 0.0, 1.0);
  (void)training::train_step(*state, batch, cfg);

  Tensor clean = random_tensor({1, 3, 16, 16}, rng, 0.0, 1.0);
  Tensor haze_a = random_tensor({1, 8, 4, 4}, rng);
  Tensor haze_b = random_tensor({1, 8, 4, 4}, rng);
  Tensor out_a = regenerate_underwater(clean, haze_a, state->restoration);
  Tensor out_b = regenerate_underwater(clean, haze_b, state->restoration);
  CHECK_FALSE(bitwise_equal(out_a, out_b));
}

TEST_CASE("restore never reads the haze argument") {
  Restoration net(small_config(), Rng(25));
  Rng rng(26);
  Tensor content = random_tensor({1, 3, 16, 16}, rng, 0.0, 1.0);
  Tensor haze_a = random_tensor({1, 8, 4, 4}, rng);
  Tensor haze_b = random_tensor({1, 8, 4, 4}, rng);

  Tensor before = restore(content, net);
  (void)regenerate_underwater(content, haze_a, net);
  Tensor after_a = restore(content, net);
  (void)regenerate_underwater(content, haze_b, net);
  Tensor after_b = restore(content, net);
  CHECK(bitwise_equal(before, after_a));
  CHECK(bitwise_equal(before, after_b));
}
