#include "avae/adversary.hpp"

#include <cmath>
#include <string>

#include "avae/data.hpp"
#include "avae/errors.hpp"
#include "avae/ops.hpp"

namespace avae {

namespace {

void glorot(ParamStore& params, const std::string& name, Shape shape, std::size_t fan_in,
            std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w(std::move(shape));
  for (double& v : w.data()) v = rng.uniform(-limit, limit);
  params.add(name, std::move(w));
}

// q(K+1 | z) per row, clamped, as a [B x 1] column.
Var fake_probability(const Var& logits) {
  const std::size_t k1 = logits.shape()[1];
  return clamp(slice_cols(softmax_rows(logits), k1 - 1, k1), kProbClamp, 1.0 - kProbClamp);
}

Var zero(const Var& like) { return like.tape().constant(Tensor::scalar(0.0)); }

std::vector<std::size_t> rows_where(std::span<const int> labels, bool labelled) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if ((labels[i] != kUnlabelled) == labelled) rows.push_back(i);
  return rows;
}

Var real_unlabel_term(const Var& logits_real) {
  if (logits_real.shape()[0] == 0) return zero(logits_real);
  return neg(mean(log(add_scalar(neg(fake_probability(logits_real)), 1.0))));
}

Var fake_unlabel_term(const Var& logits_fake) {
  if (logits_fake.shape()[0] == 0) return zero(logits_fake);
  return neg(mean(log(fake_probability(logits_fake))));
}

}  // namespace

GridShape latent_grid(std::size_t d) {
  if (d < 4)
    throw ConfigError("discriminator needs a latent dimension of at least 4 for its 2x2 filters, got " +
                      std::to_string(d));
  GridShape g;
  g.rows = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d))));
  while (g.rows * g.rows > d) --g.rows;
  while ((g.rows + 1) * (g.rows + 1) <= d) ++g.rows;
  g.cols = (d + g.rows - 1) / g.rows;
  return g;
}

DiscArch make_disc_arch(std::size_t latent_dim, std::size_t num_classes, std::size_t input_dim,
                        std::size_t hidden_override) {
  if (num_classes < 1) throw ConfigError("discriminator needs at least one class");
  DiscArch a;
  a.latent_dim = latent_dim;
  a.num_classes = num_classes;
  a.grid = latent_grid(latent_dim);
  a.hidden = hidden_override > 0 ? hidden_override : std::max<std::size_t>(1, (input_dim + 3) / 4);
  return a;
}

void init_discriminator(ParamStore& params, const DiscArch& arch, Rng& rng) {
  const std::size_t flat = arch.grid.rows * arch.grid.cols * arch.filters;
  glorot(params, "disc.conv.k", {2, 2, 1, arch.filters}, 4, 4 * arch.filters, rng);
  params.add("disc.conv.b", Tensor(Shape{arch.filters}));
  glorot(params, "disc.fc1.w", {flat, arch.hidden}, flat, arch.hidden, rng);
  params.add("disc.fc1.b", Tensor(Shape{arch.hidden}));
  glorot(params, "disc.fc2.w", {arch.hidden, arch.outputs()}, arch.hidden, arch.outputs(), rng);
  params.add("disc.fc2.b", Tensor(Shape{arch.outputs()}));
}

Var discriminate(const ParamBinding& p, const DiscArch& arch, const Var& z) {
  if (z.shape().size() != 2 || z.shape()[1] != arch.latent_dim)
    throw ShapeError("discriminator expects [B x " + std::to_string(arch.latent_dim) + "] codes, got " +
                     shape_str(z.shape()));
  const std::size_t b = z.shape()[0];
  const std::size_t cells = arch.grid.rows * arch.grid.cols;
  Var g = reshape(pad_cols(z, cells), {b, arch.grid.rows, arch.grid.cols, 1});
  Var h = relu(add(conv2d(g, p("disc.conv.k")), p("disc.conv.b")));
  h = reshape(h, {b, cells * arch.filters});
  h = sigmoid(add(matmul(h, p("disc.fc1.w")), p("disc.fc1.b")));
  return add(matmul(h, p("disc.fc2.w")), p("disc.fc2.b"));
}

Var loss_label(const Var& logits, std::span<const int> labels) {
  const std::size_t b = logits.shape()[0];
  const std::size_t k = logits.shape()[1] - 1;
  if (labels.size() != b)
    throw ContractError("loss_label: " + std::to_string(labels.size()) + " labels for " + std::to_string(b) +
                        " rows");
  if (b == 0) return zero(logits);
  Tensor onehot({b, k});
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
      throw ContractError("loss_label: row " + std::to_string(i) + " carries tag " + std::to_string(labels[i]) +
                          ", only real classes 0.." + std::to_string(k - 1) + " are allowed");
    onehot.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  Var logq = log_softmax_rows(slice_cols(logits, 0, k));
  return scale(sum(mul(logq, logits.tape().constant(std::move(onehot)))), -1.0 / static_cast<double>(b));
}

Var loss_unlabel(const Var& logits_real, const Var& logits_fake) {
  return add(real_unlabel_term(logits_real), fake_unlabel_term(logits_fake));
}

Var generator_adversarial_loss(const Var& logits_fake) { return real_unlabel_term(logits_fake); }

GanLoss loss_gan(const ParamBinding& p, const DiscArch& arch, const Var& z_real, const Var& z_fake,
                 std::span<const int> labels, const GanWeights& w) {
  const std::size_t b = z_real.shape()[0];
  if (z_fake.shape()[0] != b || labels.size() != b)
    throw ContractError("loss_gan: real, fake and label counts differ");
  const Var logits_real = discriminate(p, arch, z_real);
  const Var logits_fake = discriminate(p, arch, z_fake);

  const auto labelled = rows_where(labels, true);
  std::vector<int> y;
  for (std::size_t r : labelled) y.push_back(labels[r]);

  GanLoss out;
  out.label = loss_label(take_rows(logits_real, labelled), y);
  if (w.labelled_in_unsup) {
    out.unlabel = loss_unlabel(logits_real, logits_fake);
  } else {
    const auto unl = rows_where(labels, false);
    out.unlabel = loss_unlabel(take_rows(logits_real, unl), take_rows(logits_fake, unl));
  }
  out.total = add(scale(out.label, w.w1), scale(out.unlabel, w.w2));
  return out;
}

Var gan_real_branch(const ParamBinding& p, const DiscArch& arch, const Var& z_real,
                    std::span<const int> labels, const GanWeights& w) {
  const Var logits_real = discriminate(p, arch, z_real);
  const auto labelled = rows_where(labels, true);
  std::vector<int> y;
  for (std::size_t r : labelled) y.push_back(labels[r]);
  Var label = loss_label(take_rows(logits_real, labelled), y);
  Var real = w.labelled_in_unsup ? logits_real : take_rows(logits_real, rows_where(labels, false));
  return add(scale(label, w.w1), scale(real_unlabel_term(real), w.w2));
}

}  // namespace avae
