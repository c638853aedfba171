#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "avae/adam.hpp"
#include "avae/adversary.hpp"
#include "avae/config.hpp"
#include "avae/data.hpp"
#include "avae/vaepp.hpp"

namespace avae {

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double recon = 0.0;
  double kl = 0.0;
  bool has_gan = false;
  double gan_label = 0.0;
  double gan_unlabel = 0.0;
  double ms = 0.0;

  double vae_loss() const { return recon + kl; }
};

struct TrainTrace {
  std::vector<EpochRecord> records;

  static std::string csv_header();
  static std::string csv_row(const EpochRecord& r);
  void write_csv(const std::filesystem::path& path) const;
};

struct Model {
  VaeArch vae;
  std::optional<DiscArch> disc;
  ParamStore vae_params;
  ParamStore disc_params;
};

/// Architecture for a run over samples of `sample_shape` with K classes.
/// The discriminator is present only for the adversarial ablation.
Model make_model(const RunConfig& cfg, const Shape& sample_shape, std::size_t num_classes);
/// make_model plus seeded weight initialisation.
Model init_model(const RunConfig& cfg, const Shape& sample_shape, std::size_t num_classes);

struct TrainState {
  Model model;
  Adam vae_opt;
  Adam disc_opt;
  Rng eps_rng;
  std::size_t epochs_done = 0;
  TrainTrace trace;
  double best_loss = 0.0;
  std::size_t since_best = 0;
  bool stopped_early = false;
};

struct BatchStats {
  double recon = 0.0;
  double kl = 0.0;
  double gan_label = 0.0;
  double gan_unlabel = 0.0;
};

TrainState init_training(const RunConfig& cfg, const Dataset& train);

/// One iteration of the joint loop: VAE forward, a discriminator step on
/// L_GAN with the codes held constant, then a VAE step on
/// L_VAE + lambda_adv * generator loss with the discriminator frozen.
BatchStats train_batch(TrainState& state, const RunConfig& cfg, const Batch& batch);

struct TrainHooks {
  std::function<void(const EpochRecord&, const TrainState&)> on_epoch;
  std::optional<std::filesystem::path> checkpoint;  // archive base path
};

/// Trains until `cfg.epochs` epochs are done (or early stopping fires).
/// A NumericFault is rethrown with the epoch and batch that produced it.
void train_epochs(TrainState& state, const RunConfig& cfg, const Dataset& train, const TrainHooks& hooks = {});

TrainState train(const RunConfig& cfg, const Dataset& train, const TrainHooks& hooks = {});

void save_checkpoint(const std::filesystem::path& base, const TrainState& state, const RunConfig& cfg);

struct Checkpoint {
  RunConfig config;
  TrainState state;
};

/// Reads a checkpoint without any compatibility check.
Checkpoint read_checkpoint(const std::filesystem::path& base);

/// Restores training state for `cfg`. Throws ConfigError listing the
/// differing keys when the checkpoint was written under another config.
TrainState load_checkpoint(const std::filesystem::path& base, const RunConfig& cfg);

/// Representation used for classification: mu (vae_mu), z_s (vae) or z_I.
/// Computed in chunks on constant tapes; z_s noise is drawn from a stream
/// keyed by `seed`, so repeated calls agree.
Tensor embed(const Model& model, Ablation ablation, const Tensor& features, std::uint64_t seed);

/// Exclusive code z_I (or trunk features for the plain-VAE modes).
Tensor encode_codes(const Model& model, const Tensor& features);

}  // namespace avae
