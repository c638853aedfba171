#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "avae/autodiff.hpp"
#include "avae/rng.hpp"

namespace avae {

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before logs.
inline constexpr double kProbClamp = 1e-7;

struct GridShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
};

/// r = floor(sqrt(D)), c = ceil(D / r). Throws ConfigError for D < 4.
GridShape latent_grid(std::size_t latent_dim);

struct DiscArch {
  std::size_t latent_dim = 0;
  std::size_t num_classes = 0;  // K; the network emits K + 1 logits
  std::size_t hidden = 0;
  std::size_t filters = 10;
  GridShape grid;

  std::size_t outputs() const { return num_classes + 1; }
};

/// Hidden width defaults to ceil(input_dim / 4) unless `hidden_override` > 0.
DiscArch make_disc_arch(std::size_t latent_dim, std::size_t num_classes, std::size_t input_dim,
                        std::size_t hidden_override = 0);

void init_discriminator(ParamStore& params, const DiscArch& arch, Rng& rng);

/// [B x D] codes -> [B x (K+1)] logits.
Var discriminate(const ParamBinding& p, const DiscArch& arch, const Var& z);

/// Mean -ln q(y | z, y < K+1) over the given rows. Labels must lie in [0, K);
/// any other value (the fake tag included) throws ContractError.
Var loss_label(const Var& logits, std::span<const int> labels);

/// -mean ln(1 - q(K+1 | real)) - mean ln q(K+1 | fake). An empty side
/// contributes zero.
Var loss_unlabel(const Var& logits_real, const Var& logits_fake);

/// -mean ln(1 - q(K+1 | fake)).
Var generator_adversarial_loss(const Var& logits_fake);

struct GanWeights {
  double w1 = 0.9;
  double w2 = 0.1;
  bool labelled_in_unsup = true;
};

struct GanLoss {
  Var label;    // zero when the batch has no labelled rows
  Var unlabel;
  Var total;
};

/// L_GAN over a batch of real codes z_I and fake codes z_s (same row count).
/// `labels[i]` is the class of row i or kUnlabelled. Labelled rows feed the
/// label term; the unlabel term takes every row, or only unlabelled rows
/// when `labelled_in_unsup` is false.
GanLoss loss_gan(const ParamBinding& p, const DiscArch& arch, const Var& z_real, const Var& z_fake,
                 std::span<const int> labels, const GanWeights& weights = {});

/// Real-branch part of L_GAN (label term on labelled rows plus the real half
/// of the unlabel term), used only when gradients may flow through z_I.
Var gan_real_branch(const ParamBinding& p, const DiscArch& arch, const Var& z_real,
                    std::span<const int> labels, const GanWeights& weights = {});

}  // namespace avae
