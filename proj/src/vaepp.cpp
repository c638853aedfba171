#include "avae/vaepp.hpp"

#include <algorithm>
#include <cmath>

#include "avae/errors.hpp"
#include "avae/ops.hpp"

namespace avae {

namespace {

constexpr double kSigmaFloor = 1e-6;

void glorot(ParamStore& params, const std::string& name, Shape shape, std::size_t fan_in,
            std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w(std::move(shape));
  for (double& v : w.data()) v = rng.uniform(-limit, limit);
  params.add(name, std::move(w));
}

void dense(ParamStore& params, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
  glorot(params, prefix + ".w", {in, out}, in, out, rng);
  params.add(prefix + ".b", Tensor(Shape{out}));
}

void conv(ParamStore& params, const std::string& prefix, std::size_t k, std::size_t cin,
          std::size_t cout, Rng& rng) {
  glorot(params, prefix + ".k", {k, k, cin, cout}, k * k * cin, k * k * cout, rng);
  params.add(prefix + ".b", Tensor(Shape{cout}));
}

Var affine(const ParamBinding& p, const std::string& prefix, const Var& x) {
  return add(matmul(x, p(prefix + ".w")), p(prefix + ".b"));
}

Var conv_bias(const ParamBinding& p, const std::string& prefix, const Var& x) {
  return add(conv2d(x, p(prefix + ".k")), p(prefix + ".b"));
}

std::size_t half_up(std::size_t n) { return (n + 1) / 2; }

void check_input(const VaeArch& arch, const Var& x) {
  const Shape& s = x.shape();
  bool ok = s.size() == arch.sample_shape.size() + 1;
  for (std::size_t i = 0; ok && i < arch.sample_shape.size(); ++i) ok = s[i + 1] == arch.sample_shape[i];
  if (!ok)
    throw ShapeError("encoder expects samples of shape " + shape_str(arch.sample_shape) + ", got " +
                     shape_str(s));
}

}  // namespace

std::string to_string(DataMode mode) { return mode == DataMode::vector ? "vector" : "image"; }

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::vae_mu: return "vae_mu";
    case Ablation::vae: return "vae";
    case Ablation::vaepp: return "vaepp";
    case Ablation::avae: return "avae";
  }
  return "?";
}

DataMode parse_data_mode(std::string_view text) {
  if (text == "vector") return DataMode::vector;
  if (text == "image") return DataMode::image;
  throw ConfigError("unknown mode '" + std::string(text) + "' (expected vector or image)");
}

Ablation parse_ablation(std::string_view text) {
  for (Ablation a : {Ablation::vae_mu, Ablation::vae, Ablation::vaepp, Ablation::avae})
    if (text == to_string(a)) return a;
  throw ConfigError("unknown ablation '" + std::string(text) + "' (expected vae_mu, vae, vaepp or avae)");
}

bool uses_direct_heads(Ablation a) { return a == Ablation::vae_mu || a == Ablation::vae; }
bool uses_adversary(Ablation a) { return a == Ablation::avae; }

std::size_t default_latent_dim(std::size_t input_dim) { return std::max<std::size_t>(1, (input_dim + 3) / 4); }

std::size_t VaeArch::input_dim() const { return shape_size(sample_shape); }

std::size_t VaeArch::pooled_h() const { return half_up(half_up(sample_shape.at(0))); }
std::size_t VaeArch::pooled_w() const { return half_up(half_up(sample_shape.at(1))); }

std::size_t VaeArch::feature_dim() const {
  if (mode == DataMode::vector) return input_dim();
  return pooled_h() * pooled_w() * conv2_filters;
}

void init_vaepp(ParamStore& params, const VaeArch& arch, Rng& rng) {
  if (arch.latent_dim == 0) throw ConfigError("latent dimension must be positive");
  if (arch.mode == DataMode::image && arch.sample_shape.size() != 3)
    throw ShapeError("image mode expects H x W x C samples, got " + shape_str(arch.sample_shape));
  if (arch.mode == DataMode::vector && arch.sample_shape.size() != 1)
    throw ShapeError("vector mode expects flat samples, got " + shape_str(arch.sample_shape));

  const std::size_t d = arch.latent_dim;
  const std::size_t feat = arch.feature_dim();
  if (arch.mode == DataMode::image) {
    const std::size_t c = arch.sample_shape[2];
    conv(params, "enc.conv1", 3, c, arch.conv1_filters, rng);
    conv(params, "enc.conv2", 5, arch.conv1_filters, arch.conv2_filters, rng);
  }
  if (!arch.direct_heads) dense(params, "enc.fc", feat, d, rng);
  const std::size_t head_in = arch.direct_heads ? feat : d;
  dense(params, "gen.mu", head_in, d, rng);
  dense(params, "gen.sigma", head_in, d, rng);
  if (arch.mode == DataMode::vector) {
    dense(params, "dec.fc", d, arch.input_dim(), rng);
  } else {
    dense(params, "dec.fc", d, feat, rng);
    conv(params, "dec.conv1", 5, arch.conv2_filters, arch.conv1_filters, rng);
    conv(params, "dec.conv2", 3, arch.conv1_filters, arch.sample_shape[2], rng);
  }
}

Var encode(const ParamBinding& p, const VaeArch& arch, const Var& x) {
  check_input(arch, x);
  const std::size_t b = x.shape()[0];
  Var features;
  if (arch.mode == DataMode::vector) {
    features = x;
  } else {
    Var h = relu(conv_bias(p, "enc.conv1", x));
    h = max_pool2d(h, 2, 2);
    h = relu(conv_bias(p, "enc.conv2", h));
    h = max_pool2d(h, 2, 2);
    features = reshape(h, {b, arch.feature_dim()});
  }
  if (arch.direct_heads) return features;
  Var z = affine(p, "enc.fc", features);
  return arch.mode == DataMode::vector ? relu(z) : z;
}

LatentPair generate(const ParamBinding& p, const VaeArch& arch, const Var& z_i, Rng& rng) {
  Tensor eps = sample_standard_normal(rng, {z_i.shape()[0], arch.latent_dim});
  return generate_with_noise(p, arch, z_i, std::move(eps));
}

LatentPair generate_with_noise(const ParamBinding& p, const VaeArch& arch, const Var& z_i, Tensor eps) {
  const std::size_t head_in = arch.direct_heads ? arch.feature_dim() : arch.latent_dim;
  if (z_i.shape().size() != 2 || z_i.shape()[1] != head_in)
    throw ShapeError("generator expects [B x " + std::to_string(head_in) + "] input, got " +
                     shape_str(z_i.shape()));
  LatentPair out;
  out.z_i = z_i;
  out.mu = affine(p, "gen.mu", z_i);
  out.sigma = add_scalar(softplus(affine(p, "gen.sigma", z_i)), kSigmaFloor);
  if (eps.shape() != out.mu.shape())
    throw ShapeError("noise shape " + shape_str(eps.shape()) + " does not match " + shape_str(out.mu.shape()));
  out.eps = std::move(eps);
  out.z_s = add(out.mu, mul(out.sigma, p.tape().constant(out.eps)));
  return out;
}

Var decode_logits(const ParamBinding& p, const VaeArch& arch, const Var& z_s) {
  if (z_s.shape().size() != 2 || z_s.shape()[1] != arch.latent_dim)
    throw ShapeError("decoder expects [B x " + std::to_string(arch.latent_dim) + "] codes, got " +
                     shape_str(z_s.shape()));
  if (arch.mode == DataMode::vector) return affine(p, "dec.fc", z_s);
  const std::size_t b = z_s.shape()[0];
  const std::size_t h = arch.sample_shape[0], w = arch.sample_shape[1];
  Var t = relu(affine(p, "dec.fc", z_s));
  t = reshape(t, {b, arch.pooled_h(), arch.pooled_w(), arch.conv2_filters});
  t = upsample_nearest(t, half_up(h), half_up(w));
  t = relu(conv_bias(p, "dec.conv1", t));
  t = upsample_nearest(t, h, w);
  return conv_bias(p, "dec.conv2", t);
}

Var decode(const ParamBinding& p, const VaeArch& arch, const Var& z_s) {
  Var out = decode_logits(p, arch, z_s);
  return arch.mode == DataMode::image ? sigmoid(out) : out;
}

double gaussian_kl(double mu, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("sigma must be positive, got " + std::to_string(sigma));
  const double s2 = sigma * sigma;
  return 0.5 * (mu * mu + s2 - std::log(s2) - 1.0);
}

Var kl_divergence(const Var& mu, const Var& sigma) {
  const double batch = static_cast<double>(mu.shape()[0]);
  Var s2 = square(sigma);
  Var terms = add_scalar(sub(add(square(mu), s2), log(s2)), -1.0);
  return scale(sum(terms), 0.5 / std::max(batch, 1.0));
}

VaeLoss vae_loss(const Var& x, const Var& decoded, const Var& mu, const Var& sigma, DataMode mode) {
  for (std::size_t i = 0; i < sigma.value().size(); ++i)
    if (!(sigma.value()[i] > 0.0))
      throw DomainError("sigma must be positive, got " + std::to_string(sigma.value()[i]) + " at index " +
                        std::to_string(i));
  if (x.value().size() != decoded.value().size())
    throw ShapeError("reconstruction " + shape_str(decoded.shape()) + " does not match input " +
                     shape_str(x.shape()));
  const double batch = std::max<double>(1.0, static_cast<double>(x.shape()[0]));
  Var target = reshape(x, decoded.shape());
  Var per_elem = mode == DataMode::vector ? square(sub(target, decoded))
                                          : sub(softplus(decoded), mul(target, decoded));
  VaeLoss out;
  out.recon = scale(sum(per_elem), 1.0 / batch);
  out.kl = kl_divergence(mu, sigma);
  out.total = add(out.recon, out.kl);
  return out;
}

VaeForward vae_forward(const ParamBinding& p, const VaeArch& arch, const Var& x, Rng& rng) {
  VaeForward f;
  f.latent = generate(p, arch, encode(p, arch, x), rng);
  f.decoded = decode_logits(p, arch, f.latent.z_s);
  f.loss = vae_loss(x, f.decoded, f.latent.mu, f.latent.sigma, arch.mode);
  return f;
}

}  // namespace avae
