#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "avae/autodiff.hpp"
#include "avae/tensor.hpp"

namespace avae {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  Tensor m;
  Tensor v;

  static AdamState zeros_like(const Tensor& param) {
    return AdamState{0, Tensor(param.shape()), Tensor(param.shape())};
  }
};

/// One bias-corrected Adam update of `param` in place.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& cfg);

/// Adam over every tensor of a ParamStore, keyed by parameter name.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Updates every parameter that has an entry in `grads`.
  void step(ParamStore& params, const Gradients& grads);

  const AdamConfig& config() const noexcept { return cfg_; }
  const std::map<std::string, AdamState>& states() const noexcept { return states_; }
  std::map<std::string, AdamState>& states() noexcept { return states_; }

 private:
  AdamConfig cfg_;
  std::map<std::string, AdamState> states_;
};

}  // namespace avae
