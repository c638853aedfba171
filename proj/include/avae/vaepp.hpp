#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "avae/autodiff.hpp"
#include "avae/rng.hpp"

namespace avae {

enum class DataMode { vector, image };

/// Representation source compared by the ablation study.
enum class Ablation {
  vae_mu,  // plain VAE, mu as the code
  vae,     // plain VAE, sampled z_s as the code
  vaepp,   // exclusive code z_I, no adversary
  avae,    // exclusive code z_I with adversarial training
};

std::string to_string(DataMode mode);
std::string to_string(Ablation ablation);
DataMode parse_data_mode(std::string_view text);
Ablation parse_ablation(std::string_view text);

/// True for the two plain-VAE modes, whose mu/sigma heads read the encoder
/// features directly instead of an intermediate z_I layer.
bool uses_direct_heads(Ablation ablation);
bool uses_adversary(Ablation ablation);

/// ceil(m / 4), at least 1.
std::size_t default_latent_dim(std::size_t input_dim);

struct VaeArch {
  DataMode mode = DataMode::vector;
  Shape sample_shape;  // {M} or {H, W, C}
  std::size_t latent_dim = 0;
  bool direct_heads = false;
  std::size_t conv1_filters = 32;
  std::size_t conv2_filters = 64;

  /// Flattened width of one sample.
  std::size_t input_dim() const;
  /// Width of the encoder trunk output (the heads' input in direct mode).
  std::size_t feature_dim() const;
  /// Spatial size after the two pooling stages (image mode).
  std::size_t pooled_h() const;
  std::size_t pooled_w() const;
};

/// Fan-in/fan-out scaled uniform weights, zero biases.
void init_vaepp(ParamStore& params, const VaeArch& arch, Rng& rng);

/// Deterministic encoder. Returns z_I, or the trunk features when
/// `direct_heads` is set.
Var encode(const ParamBinding& p, const VaeArch& arch, const Var& x);

struct LatentPair {
  Var z_i;
  Var mu;
  Var sigma;
  Tensor eps;
  Var z_s;
};

/// mu = W_mu z + b_mu, sigma = softplus(W_s z + b_s) + 1e-6, z_s = mu + sigma * eps.
LatentPair generate(const ParamBinding& p, const VaeArch& arch, const Var& z_i, Rng& rng);
LatentPair generate_with_noise(const ParamBinding& p, const VaeArch& arch, const Var& z_i,
                               Tensor eps);

/// Decoder pre-activation: linear output for vectors, logits for images.
Var decode_logits(const ParamBinding& p, const VaeArch& arch, const Var& z_s);
/// Decoder output in data space (sigmoid applied in image mode).
Var decode(const ParamBinding& p, const VaeArch& arch, const Var& z_s);

/// Per-sample KL(N(mu, sigma^2) || N(0, I)), averaged over the batch.
Var kl_divergence(const Var& mu, const Var& sigma);
/// Closed form for a single coordinate.
double gaussian_kl(double mu, double sigma);

struct VaeLoss {
  Var recon;
  Var kl;
  Var total;
};

/// Batch-averaged reconstruction + KL. `decoded` is the output of
/// decode_logits: squared error against it for vectors, Bernoulli
/// cross-entropy with logits for images. Throws DomainError if sigma <= 0.
VaeLoss vae_loss(const Var& x, const Var& decoded, const Var& mu, const Var& sigma, DataMode mode);

struct VaeForward {
  LatentPair latent;
  Var decoded;
  VaeLoss loss;
};

VaeForward vae_forward(const ParamBinding& p, const VaeArch& arch, const Var& x, Rng& rng);

}  // namespace avae
