#include "avae/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "avae/archive.hpp"
#include "avae/errors.hpp"
#include "avae/ops.hpp"

namespace avae {

namespace {

constexpr std::uint64_t kInitStream = 0x494e;
constexpr std::uint64_t kEpsStream = 0x4550;
constexpr std::uint64_t kEvalStream = 0x4556;
constexpr std::size_t kEmbedChunk = 256;
constexpr std::size_t kImageLatentDim = 32;

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

Shape sample_shape_of(const Tensor& features) {
  return Shape(features.shape().begin() + 1, features.shape().end());
}

void put_params(Archive& a, const std::string& prefix, const ParamStore& store) {
  for (const auto& name : store.names()) a.put(prefix + name, store.get(name));
}

void put_adam(Archive& a, const std::string& prefix, const Adam& opt) {
  for (const auto& [name, st] : opt.states()) {
    a.meta[prefix + name + ".step"] = std::to_string(st.step);
    a.put(prefix + name + ".m", st.m);
    a.put(prefix + name + ".v", st.v);
  }
}

void get_params(const Archive& a, const std::string& prefix, ParamStore& store) {
  for (const auto& name : store.names()) {
    const Tensor& t = a.tensor(prefix + name);
    if (t.shape() != store.get(name).shape())
      throw FormatError("checkpoint tensor " + prefix + name + " has shape " + shape_str(t.shape()) +
                        ", expected " + shape_str(store.get(name).shape()));
    store.get(name) = t;
  }
}

void get_adam(const Archive& a, const std::string& prefix, const ParamStore& store, Adam& opt) {
  for (const auto& name : store.names()) {
    const std::string key = prefix + name + ".step";
    if (!a.meta.count(key)) continue;
    AdamState st;
    st.step = std::stoull(a.meta.at(key));
    st.m = a.tensor(prefix + name + ".m");
    st.v = a.tensor(prefix + name + ".v");
    opt.states()[name] = std::move(st);
  }
}

std::vector<std::size_t> parse_dims(const std::string& text) {
  std::vector<std::size_t> dims;
  std::istringstream in(text);
  for (std::size_t d; in >> d;) dims.push_back(d);
  return dims;
}

std::string dims_str(const Shape& s) {
  std::string out;
  for (std::size_t d : s) out += (out.empty() ? "" : " ") + std::to_string(d);
  return out;
}

}  // namespace

std::string TrainTrace::csv_header() { return "epoch,recon,kl,gan_label,gan_unlabel,ms"; }

std::string TrainTrace::csv_row(const EpochRecord& r) {
  std::string row = std::to_string(r.epoch) + "," + fmt(r.recon) + "," + fmt(r.kl) + ",";
  if (r.has_gan) row += fmt(r.gan_label) + "," + fmt(r.gan_unlabel);
  else row += ",";
  return row + "," + fmt(r.ms);
}

void TrainTrace::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace " + path.string());
  out << csv_header() << "\n";
  for (const auto& r : records) out << csv_row(r) << "\n";
}

Model make_model(const RunConfig& cfg, const Shape& sample_shape, std::size_t num_classes) {
  Model m;
  m.vae.mode = cfg.mode;
  m.vae.sample_shape = sample_shape;
  m.vae.direct_heads = uses_direct_heads(cfg.ablation);
  m.vae.conv1_filters = cfg.conv1_filters;
  m.vae.conv2_filters = cfg.conv2_filters;
  if (cfg.mode == DataMode::image && sample_shape.size() != 3)
    throw ShapeError("image mode needs H x W x C samples, dataset has " + shape_str(sample_shape));
  if (cfg.mode == DataMode::vector && sample_shape.size() != 1)
    throw ShapeError("vector mode needs flat samples, dataset has " + shape_str(sample_shape) +
                     " (use mode = image)");
  const std::size_t input_dim = shape_size(sample_shape);
  m.vae.latent_dim = cfg.latent_dim > 0                ? cfg.latent_dim
                     : cfg.mode == DataMode::image ? kImageLatentDim
                                                       : default_latent_dim(input_dim);
  if (uses_adversary(cfg.ablation))
    m.disc = make_disc_arch(m.vae.latent_dim, num_classes, input_dim, cfg.disc_hidden);
  return m;
}

Model init_model(const RunConfig& cfg, const Shape& sample_shape, std::size_t num_classes) {
  Model m = make_model(cfg, sample_shape, num_classes);
  Rng rng(cfg.seed, kInitStream);
  Rng vae_rng = rng.split(0);
  init_vaepp(m.vae_params, m.vae, vae_rng);
  if (m.disc) {
    Rng disc_rng = rng.split(1);
    init_discriminator(m.disc_params, *m.disc, disc_rng);
  }
  return m;
}

TrainState init_training(const RunConfig& cfg, const Dataset& train) {
  cfg.validate();
  train.validate();
  TrainState st{init_model(cfg, sample_shape_of(train.features), static_cast<std::size_t>(train.num_classes)),
                Adam({cfg.lr_vae}),
                Adam({cfg.lr_disc}),
                Rng(cfg.seed, kEpsStream),
                0,
                {},
                std::numeric_limits<double>::infinity(),
                0,
                false};
  return st;
}

BatchStats train_batch(TrainState& st, const RunConfig& cfg, const Batch& batch) {
  Model& m = st.model;
  Tape tape;
  const ParamBinding vae(tape, m.vae_params, true);
  const Var x = tape.constant(batch.x);
  const VaeForward fwd = vae_forward(vae, m.vae, x, st.eps_rng);

  BatchStats stats;
  stats.recon = fwd.loss.recon.value().item();
  stats.kl = fwd.loss.kl.value().item();
  Var objective = fwd.loss.total;

  if (m.disc) {
    const GanWeights weights{cfg.w1, cfg.w2, cfg.labelled_in_unsup};
    {
      Tape dtape;
      const ParamBinding disc(dtape, m.disc_params, true);
      const Var real = dtape.constant(fwd.latent.z_i.value());
      const Var fake = dtape.constant(fwd.latent.z_s.value());
      const GanLoss gan = loss_gan(disc, *m.disc, real, fake, batch.labels, weights);
      stats.gan_label = gan.label.value().item();
      stats.gan_unlabel = gan.unlabel.value().item();
      st.disc_opt.step(m.disc_params, dtape.backward(gan.total, m.disc_params));
    }
    const ParamBinding frozen(tape, m.disc_params, false);
    Var adv = generator_adversarial_loss(discriminate(frozen, *m.disc, fwd.latent.z_s));
    if (cfg.real_branch_grad)
      adv = add(adv, gan_real_branch(frozen, *m.disc, fwd.latent.z_i, batch.labels, weights));
    objective = add(objective, scale(adv, cfg.lambda_adv));
  }
  st.vae_opt.step(m.vae_params, tape.backward(objective, m.vae_params));
  return stats;
}

void train_epochs(TrainState& st, const RunConfig& cfg, const Dataset& train, const TrainHooks& hooks) {
  cfg.validate();
  while (st.epochs_done < cfg.epochs && !st.stopped_early) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t epoch = st.epochs_done;
    const auto batches = make_batches(train, cfg.batch_size, cfg.seed, epoch);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.has_gan = st.model.disc.has_value();
    double n = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      BatchStats s;
      try {
        s = train_batch(st, cfg, batches[b]);
      } catch (const NumericFault& e) {
        throw NumericFault("epoch " + std::to_string(epoch + 1) + " batch " + std::to_string(b + 1) + ": " +
                           e.what());
      }
      const double w = static_cast<double>(batches[b].size());
      rec.recon += w * s.recon;
      rec.kl += w * s.kl;
      rec.gan_label += w * s.gan_label;
      rec.gan_unlabel += w * s.gan_unlabel;
      n += w;
    }
    rec.recon /= n;
    rec.kl /= n;
    rec.gan_label /= n;
    rec.gan_unlabel /= n;
    rec.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    st.epochs_done = epoch + 1;
    st.trace.records.push_back(rec);

    if (cfg.early_stopping) {
      if (rec.vae_loss() < st.best_loss) {
        st.best_loss = rec.vae_loss();
        st.since_best = 0;
      } else if (++st.since_best >= cfg.patience) {
        st.stopped_early = true;
      }
    }
    if (hooks.on_epoch) hooks.on_epoch(rec, st);
    if (hooks.checkpoint && cfg.checkpoint_every > 0 && st.epochs_done % cfg.checkpoint_every == 0)
      save_checkpoint(*hooks.checkpoint, st, cfg);
  }
  if (hooks.checkpoint) save_checkpoint(*hooks.checkpoint, st, cfg);
}

TrainState train(const RunConfig& cfg, const Dataset& data, const TrainHooks& hooks) {
  TrainState st = init_training(cfg, data);
  train_epochs(st, cfg, data, hooks);
  return st;
}

void save_checkpoint(const std::filesystem::path& base, const TrainState& st, const RunConfig& cfg) {
  Archive a;
  a.meta["kind"] = "avae-checkpoint";
  a.meta["config_hash"] = cfg.hash();
  for (const auto& [k, v] : cfg.values()) a.meta["config." + k] = v;
  a.meta["sample_shape"] = dims_str(st.model.vae.sample_shape);
  a.meta["num_classes"] = std::to_string(st.model.disc ? st.model.disc->num_classes : 0);
  a.meta["epochs_done"] = std::to_string(st.epochs_done);
  a.meta["rng_key"] = std::to_string(st.eps_rng.state().key);
  a.meta["rng_counter"] = std::to_string(st.eps_rng.state().counter);
  a.meta["best_loss"] = format_double(st.best_loss);
  a.meta["since_best"] = std::to_string(st.since_best);
  a.meta["stopped_early"] = st.stopped_early ? "1" : "0";
  put_params(a, "vae/", st.model.vae_params);
  put_params(a, "disc/", st.model.disc_params);
  put_adam(a, "adam.vae/", st.vae_opt);
  put_adam(a, "adam.disc/", st.disc_opt);

  // Losses only; wall-clock time would make checkpoints irreproducible.
  Tensor trace({st.trace.records.size(), 5});
  for (std::size_t i = 0; i < st.trace.records.size(); ++i) {
    const auto& r = st.trace.records[i];
    trace.at(i, 0) = static_cast<double>(r.epoch);
    trace.at(i, 1) = r.recon;
    trace.at(i, 2) = r.kl;
    trace.at(i, 3) = r.has_gan ? r.gan_label : 0.0;
    trace.at(i, 4) = r.has_gan ? r.gan_unlabel : 0.0;
  }
  a.put("trace", std::move(trace));
  write_archive(base, a);
}

Checkpoint read_checkpoint(const std::filesystem::path& base) {
  const Archive a = read_archive(base);
  if (!a.meta.count("kind") || a.meta.at("kind") != "avae-checkpoint")
    throw FormatError(base.string() + " is not a checkpoint");
  RunConfig cfg;
  for (const auto& key : RunConfig::keys())
    if (a.meta.count("config." + key)) cfg.set(key, a.meta.at("config." + key));

  const Shape sample_shape = parse_dims(a.meta_at("sample_shape"));
  const std::size_t k = std::stoull(a.meta_at("num_classes"));
  Model model = make_model(cfg, sample_shape, k);
  // Allocate correctly shaped stores, then overwrite from the archive.
  {
    Rng scratch(0);
    init_vaepp(model.vae_params, model.vae, scratch);
    if (model.disc) init_discriminator(model.disc_params, *model.disc, scratch);
  }
  get_params(a, "vae/", model.vae_params);
  get_params(a, "disc/", model.disc_params);

  TrainState st{std::move(model), Adam({cfg.lr_vae}), Adam({cfg.lr_disc}), Rng(0), 0, {}, 0.0, 0, false};
  get_adam(a, "adam.vae/", st.model.vae_params, st.vae_opt);
  get_adam(a, "adam.disc/", st.model.disc_params, st.disc_opt);
  st.eps_rng.set_state({std::stoull(a.meta_at("rng_key")), std::stoull(a.meta_at("rng_counter"))});
  st.epochs_done = std::stoull(a.meta_at("epochs_done"));
  st.best_loss = std::stod(a.meta_at("best_loss"));
  st.since_best = std::stoull(a.meta_at("since_best"));
  st.stopped_early = a.meta_at("stopped_early") == "1";
  const Tensor& trace = a.tensor("trace");
  for (std::size_t i = 0; i < trace.dim(0); ++i) {
    EpochRecord r;
    r.epoch = static_cast<std::size_t>(trace.at(i, 0));
    r.recon = trace.at(i, 1);
    r.kl = trace.at(i, 2);
    r.has_gan = st.model.disc.has_value();
    r.gan_label = trace.at(i, 3);
    r.gan_unlabel = trace.at(i, 4);
    st.trace.records.push_back(r);
  }
  return Checkpoint{std::move(cfg), std::move(st)};
}

TrainState load_checkpoint(const std::filesystem::path& base, const RunConfig& cfg) {
  Checkpoint cp = read_checkpoint(base);
  if (cp.config.hash() != cfg.hash()) {
    std::string msg = "checkpoint " + base.string() + " was written under a different config:";
    for (const auto& line : config_diff(cp.config, cfg)) msg += "\n  " + line;
    throw ConfigError(msg);
  }
  return std::move(cp.state);
}

Tensor encode_codes(const Model& model, const Tensor& features) {
  const std::size_t n = features.dim(0);
  const std::size_t width = model.vae.direct_heads ? model.vae.feature_dim() : model.vae.latent_dim;
  Tensor out({n, width});
  for (std::size_t start = 0; start < n; start += kEmbedChunk) {
    const std::size_t end = std::min(n, start + kEmbedChunk);
    Tape tape;
    const ParamBinding p(tape, model.vae_params, false);
    const Var z = encode(p, model.vae, tape.constant(features.slice_rows(start, end)));
    std::copy(z.value().data().begin(), z.value().data().end(), out.data().begin() + start * width);
  }
  return out;
}

Tensor embed(const Model& model, Ablation ablation, const Tensor& features, std::uint64_t seed) {
  const std::size_t n = features.dim(0);
  const std::size_t d = model.vae.latent_dim;
  const bool direct = uses_direct_heads(ablation);
  if (direct != model.vae.direct_heads)
    throw ContractError("ablation " + to_string(ablation) + " does not match the model's head layout");
  Tensor out({n, d});
  Rng rng(seed, kEvalStream);
  for (std::size_t start = 0; start < n; start += kEmbedChunk) {
    const std::size_t end = std::min(n, start + kEmbedChunk);
    Tape tape;
    const ParamBinding p(tape, model.vae_params, false);
    const Var z_i = encode(p, model.vae, tape.constant(features.slice_rows(start, end)));
    Tensor code;
    if (!direct) {
      code = z_i.value();
    } else {
      const LatentPair lp = generate(p, model.vae, z_i, rng);
      code = ablation == Ablation::vae_mu ? lp.mu.value() : lp.z_s.value();
    }
    std::copy(code.data().begin(), code.data().end(), out.data().begin() + start * d);
  }
  return out;
}

}  // namespace avae
