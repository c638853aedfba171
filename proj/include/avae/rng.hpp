#pragma once

#include <cstdint>
#include <span>

#include "avae/tensor.hpp"

namespace avae {

/// Counter-based generator: the n-th output is a pure function of (key, n).
///
/// Independent streams come from `split`, which derives a fresh key, so data
/// shuffling, weight init and noise sampling never share a sequence. The
/// whole state is two integers, which makes checkpointing trivial.
class Rng {
 public:
  struct State {
    std::uint64_t key = 0;
    std::uint64_t counter = 0;
  };

  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller; consumes two counter values.
  double normal();

  Rng split(std::uint64_t stream) const;

  State state() const noexcept { return {key_, counter_}; }
  void set_state(State s) noexcept {
    key_ = s.key;
    counter_ = s.counter;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// I.i.d. N(0,1) draws in row-major order.
Tensor sample_standard_normal(Rng& rng, const Shape& shape);

template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace avae
