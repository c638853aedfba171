#include "avae/adam.hpp"

#include <cmath>

#include "avae/errors.hpp"

namespace avae {

void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& cfg) {
  if (grad.shape() != param.shape() || state.m.shape() != param.shape() ||
      state.v.shape() != param.shape()) {
    throw ShapeError("adam_step: parameter " + shape_str(param.shape()) + ", gradient " +
                     shape_str(grad.shape()) + ", moments " + shape_str(state.m.shape()) + "/" +
                     shape_str(state.v.shape()));
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    param[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

void Adam::step(ParamStore& params, const Gradients& grads) {
  for (const auto& name : params.names()) {
    auto g = grads.find(name);
    if (g == grads.end()) continue;
    Tensor& p = params.get(name);
    auto [it, inserted] = states_.try_emplace(name, AdamState::zeros_like(p));
    adam_step(p, g->second, it->second, cfg_);
  }
}

}  // namespace avae
