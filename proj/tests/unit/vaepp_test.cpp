#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "avae/errors.hpp"
#include "avae/ops.hpp"
#include "avae/vaepp.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace avae;
using avae::testing::random_tensor;

namespace {

struct Net {
  VaeArch arch;
  ParamStore params;
};

Net vector_net(bool direct = false, std::uint64_t seed = 1) {
  Net n;
  n.arch.sample_shape = {6};
  n.arch.latent_dim = 3;
  n.arch.direct_heads = direct;
  Rng rng(seed, 0);
  init_vaepp(n.params, n.arch, rng);
  return n;
}

Net image_net() {
  Net n;
  n.arch.mode = DataMode::image;
  n.arch.sample_shape = {8, 8, 1};
  n.arch.latent_dim = 4;
  n.arch.conv1_filters = 3;
  n.arch.conv2_filters = 4;
  Rng rng(2, 0);
  init_vaepp(n.params, n.arch, rng);
  return n;
}

Tensor z_i_of(const Net& n, const Tensor& x) {
  Tape tape;
  return encode(ParamBinding(tape, n.params, false), n.arch, tape.constant(x)).value();
}

}  // namespace

TEST(Kl, ClosedFormMatchesQuadrature) {
  Rng rng(3, 0);
  for (int i = 0; i < 50; ++i) {
    const double mu = rng.uniform(-3.0, 3.0), sigma = rng.uniform(0.1, 3.0);
    EXPECT_NEAR(gaussian_kl(mu, sigma), avae::testing::kl_by_quadrature(mu, sigma), 1e-6) << mu << " " << sigma;
  }
}

TEST(Kl, ZeroAtStandardNormal) {
  EXPECT_NEAR(gaussian_kl(0.0, 1.0), 0.0, 1e-12);
  Tape tape;
  const Var kl = kl_divergence(tape.constant(Tensor({2, 3}, 0.0)), tape.constant(Tensor({2, 3}, 1.0)));
  EXPECT_NEAR(kl.value().item(), 0.0, 1e-12);
}

TEST(Kl, BatchValueIsMeanOfPerSampleSums) {
  Tape tape;
  const Tensor mu({2, 2}, {0.5, -1.0, 2.0, 0.0});
  const Tensor sigma({2, 2}, {1.0, 0.5, 2.0, 1.5});
  double want = 0.0;
  for (std::size_t i = 0; i < 4; ++i) want += gaussian_kl(mu[i], sigma[i]);
  EXPECT_NEAR(kl_divergence(tape.constant(mu), tape.constant(sigma)).value().item(), want / 2.0, 1e-14);
}

TEST(Kl, RejectsNonPositiveSigma) {
  EXPECT_THROW(gaussian_kl(0.0, 0.0), DomainError);
  Tape tape;
  const Var x = tape.constant(Tensor({1, 2}, 0.0));
  EXPECT_THROW(vae_loss(x, x, tape.constant(Tensor({1, 1}, 0.0)), tape.constant(Tensor({1, 1}, -1.0)),
                        DataMode::vector),
               DomainError);
}

TEST(VaeLoss, HandComputedVectorAndImage) {
  Tape tape;
  const Tensor x({1, 2}, {1.0, 2.0});
  const Tensor d({1, 2}, {0.0, 0.5});
  const Var mu = tape.constant(Tensor({1, 1}, 0.0)), sg = tape.constant(Tensor({1, 1}, 1.0));
  const VaeLoss v = vae_loss(tape.constant(x), tape.constant(d), mu, sg, DataMode::vector);
  EXPECT_NEAR(v.recon.value().item(), 1.0 + 2.25, 1e-14);
  EXPECT_NEAR(v.total.value().item(), 3.25, 1e-14);

  const Tensor xi({1, 1, 2, 1}, {1.0, 0.0});
  const Tensor li({1, 1, 2, 1}, {0.0, 2.0});
  const VaeLoss b = vae_loss(tape.constant(xi), tape.constant(li), mu, sg, DataMode::image);
  EXPECT_NEAR(b.recon.value().item(), std::log(2.0) + std::log1p(std::exp(2.0)), 1e-12);
}

TEST(Arch, DefaultLatentDimAndNames) {
  EXPECT_EQ(default_latent_dim(1), 1u);
  EXPECT_EQ(default_latent_dim(8), 2u);
  EXPECT_EQ(default_latent_dim(9), 3u);
  for (Ablation a : {Ablation::vae_mu, Ablation::vae, Ablation::vaepp, Ablation::avae})
    EXPECT_EQ(parse_ablation(to_string(a)), a);
  EXPECT_THROW(parse_ablation("gan"), ConfigError);
  EXPECT_EQ(parse_data_mode("image"), DataMode::image);
  EXPECT_TRUE(uses_adversary(Ablation::avae));
  EXPECT_FALSE(uses_adversary(Ablation::vaepp));
  EXPECT_TRUE(uses_direct_heads(Ablation::vae));
  EXPECT_FALSE(uses_direct_heads(Ablation::vaepp));
}

TEST(Arch, DirectHeadsHaveNoExclusiveLayer) {
  EXPECT_TRUE(vector_net(false).params.contains("enc.fc.w"));
  EXPECT_FALSE(vector_net(true).params.contains("enc.fc.w"));
}

TEST(Encode, RejectsWrongInputShape) {
  const Net n = vector_net();
  Tape tape;
  EXPECT_THROW(encode(ParamBinding(tape, n.params, false), n.arch, tape.constant(Tensor({2, 5}))), ShapeError);
}

TEST(Encode, ExclusiveCodeIsRepeatable) {
  for (const Net& n : {vector_net(), image_net()}) {
    Rng rng(4, 0);
    Shape s = {5};
    s.insert(s.end(), n.arch.sample_shape.begin(), n.arch.sample_shape.end());
    const Tensor x = random_tensor(rng, s, 0.0, 1.0);
    const Tensor first = z_i_of(n, x);
    EXPECT_EQ(first.shape(), (Shape{5, n.arch.latent_dim}));
    for (int rep = 0; rep < 10; ++rep) EXPECT_TRUE(bitwise_equal(z_i_of(n, x), first));
  }
}

TEST(Generate, StochasticCodeIsReparameterised) {
  const Net n = vector_net();
  Rng rng(5, 0);
  const Tensor x = random_tensor(rng, {4, 6});
  Tape tape;
  const ParamBinding p(tape, n.params, false);
  const Var zi = encode(p, n.arch, tape.constant(x));
  const Tensor eps = random_tensor(rng, {4, 3});
  const LatentPair lp = generate_with_noise(p, n.arch, zi, eps);
  for (std::size_t i = 0; i < eps.size(); ++i) {
    EXPECT_GT(lp.sigma.value()[i], 0.0);
    EXPECT_EQ(lp.z_s.value()[i], lp.mu.value()[i] + lp.sigma.value()[i] * eps[i]);
  }
  EXPECT_THROW(generate_with_noise(p, n.arch, zi, Tensor({4, 2})), ShapeError);
}

TEST(Generate, DrawsDifferAndAverageToMu) {
  const Net n = vector_net();
  Rng data_rng(6, 0);
  const Tensor x = random_tensor(data_rng, {3, 6});
  Tape base;
  const ParamBinding p(base, n.params, false);
  const Var zi = encode(p, n.arch, base.constant(x));
  const LatentPair ref = generate_with_noise(p, n.arch, zi, Tensor({3, 3}, 0.0));

  Rng rng(7, 0);
  std::set<std::vector<double>> distinct;
  Tensor total({3, 3}, 0.0);
  constexpr int kDraws = 10000;
  for (int d = 0; d < kDraws; ++d) {
    Tape tape;
    const LatentPair lp = generate(ParamBinding(tape, n.params, false), n.arch, tape.constant(zi.value()), rng);
    if (d < 10) distinct.emplace(lp.z_s.value().data().begin(), lp.z_s.value().data().end());
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += lp.z_s.value()[i];
  }
  EXPECT_EQ(distinct.size(), 10u);
  for (std::size_t i = 0; i < total.size(); ++i)
    EXPECT_LE(std::abs(total[i] / kDraws - ref.mu.value()[i]), 3.0 * ref.sigma.value()[i] / 100.0) << i;
}

TEST(Decode, ShapesAndImageRange) {
  const Net n = image_net();
  Rng rng(8, 0);
  Tape tape;
  const ParamBinding p(tape, n.params, false);
  const Var out = decode(p, n.arch, tape.constant(random_tensor(rng, {2, 4})));
  EXPECT_EQ(out.shape(), (Shape{2, 8, 8, 1}));
  for (double v : out.value().data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  const Net m = vector_net();
  EXPECT_EQ(decode(ParamBinding(tape, m.params, false), m.arch, tape.constant(Tensor({2, 3}))).shape(),
            (Shape{2, 6}));
}

TEST(Forward, LossReachesEveryParameter) {
  for (const Net& n : {vector_net(), image_net()}) {
    Rng rng(9, 0);
    Shape s = {3};
    s.insert(s.end(), n.arch.sample_shape.begin(), n.arch.sample_shape.end());
    Tape tape;
    const VaeForward f =
        vae_forward(ParamBinding(tape, n.params, true), n.arch, tape.constant(random_tensor(rng, s, 0.0, 1.0)), rng);
    const Gradients g = tape.backward(f.loss.total, n.params);
    for (const auto& name : n.params.names()) {
      double norm = 0.0;
      for (double v : g.at(name).data()) norm += v * v;
      EXPECT_GT(norm, 0.0) << name;
    }
  }
}

TEST(Encode, EmptyBatchGivesEmptyCodes) {
  const Net n = vector_net();
  EXPECT_EQ(z_i_of(n, Tensor({0, 6})).shape(), (Shape{0, 3}));
}

TEST(Generate, SampleVarianceTracksSigmaSquared) {
  const Net n = vector_net();
  Rng data_rng(10, 0);
  const Tensor zi = z_i_of(n, random_tensor(data_rng, {2, 6}));
  Tape base;
  const LatentPair ref =
      generate_with_noise(ParamBinding(base, n.params, false), n.arch, base.constant(zi), Tensor({2, 3}, 0.0));
  Rng rng(11, 0);
  Tensor s1({2, 3}, 0.0), s2({2, 3}, 0.0);
  constexpr double kDraws = 10000;
  for (int d = 0; d < kDraws; ++d) {
    Tape tape;
    const Tensor z = generate(ParamBinding(tape, n.params, false), n.arch, tape.constant(zi), rng).z_s.value();
    for (std::size_t i = 0; i < z.size(); ++i) s1[i] += z[i], s2[i] += z[i] * z[i];
  }
  for (std::size_t i = 0; i < s1.size(); ++i) {
    const double mean = s1[i] / kDraws, var = (s2[i] - kDraws * mean * mean) / (kDraws - 1);
    const double want = ref.sigma.value()[i] * ref.sigma.value()[i];
    EXPECT_LT(std::abs(var - want), 0.1 * want) << i;
  }
}

TEST(Generate, ZeroNoiseReturnsMu) {
  const Net n = vector_net();
  Tape tape;
  const ParamBinding p(tape, n.params, false);
  const LatentPair lp = generate_with_noise(p, n.arch, tape.constant(Tensor({2, 3}, 0.4)), Tensor({2, 3}, 0.0));
  EXPECT_TRUE(bitwise_equal(lp.z_s.value(), lp.mu.value()));
}

TEST(Decode, ZeroNetworkDecodesToZero) {
  Net n = vector_net();
  for (const auto& name : n.params.names()) n.params.get(name) = Tensor(n.params.get(name).shape(), 0.0);
  Tape tape;
  for (double v : decode(ParamBinding(tape, n.params, false), n.arch, tape.constant(Tensor({2, 3}, 1.0))).value().data())
    EXPECT_EQ(v, 0.0);
}

TEST(VaeLoss, KlOfUnitMeanAndPerfectReconstruction) {
  Tape tape;
  const Var x = tape.constant(Tensor({1, 3}, {0.5, -1.0, 2.0}));
  const VaeLoss l = vae_loss(x, x, tape.constant(Tensor({1, 1}, 1.0)), tape.constant(Tensor({1, 1}, 1.0)),
                             DataMode::vector);
  EXPECT_NEAR(l.kl.value().item(), 0.5, 1e-15);
  EXPECT_EQ(l.recon.value().item(), 0.0);
}

TEST(ImageArch, MnistFeatureMapAndBlankImage) {
  VaeArch a;
  a.mode = DataMode::image;
  a.sample_shape = {28, 28, 1};
  a.latent_dim = 32;
  EXPECT_EQ(a.pooled_h(), 7u);
  EXPECT_EQ(a.pooled_w(), 7u);
  EXPECT_EQ(a.feature_dim(), 7u * 7u * 64u);
  a.sample_shape = {9, 5, 1};
  EXPECT_EQ(a.pooled_h(), 3u);  // ceil(ceil(9/2)/2)
  EXPECT_EQ(a.pooled_w(), 2u);

  const Net n = image_net();
  Rng rng(12, 0);
  Tape tape;
  const VaeForward f = vae_forward(ParamBinding(tape, n.params, false), n.arch, tape.constant(Tensor({2, 8, 8, 1})), rng);
  EXPECT_TRUE(std::isfinite(f.loss.total.value().item()));
  EXPECT_THROW(encode(ParamBinding(tape, n.params, false), n.arch, tape.constant(Tensor({1, 28, 28, 1}))), ShapeError);
}
