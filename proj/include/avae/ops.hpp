#pragma once

#include <cstddef>
#include <span>

#include "avae/autodiff.hpp"

namespace avae {

// Differentiable ops over tape values. Binary elementwise ops broadcast
// only when one shape (leading 1s ignored) is a trailing suffix of the other,
// which covers bias addition and scalar operands.

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double value);

Var relu(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
/// Throws DomainError if any input is <= 0.
Var log(const Var& a);
/// ln(1 + e^x), evaluated without overflow.
Var softplus(const Var& a);
Var square(const Var& a);
/// Gradient passes where lo <= x <= hi, zero elsewhere.
Var clamp(const Var& a, double lo, double hi);

/// [m x k] * [k x n]
Var matmul(const Var& a, const Var& b);

enum class Padding { same, valid };

struct Conv2dOptions {
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  Padding padding = Padding::same;
};

/// Cross-correlation of NHWC input with [kh x kw x Cin x Cout] kernels.
/// `same` padding yields ceil(in / stride) outputs per spatial axis.
Var conv2d(const Var& x, const Var& kernels, const Conv2dOptions& opts = {});

/// Max pooling over NHWC input; padded cells never win.
Var max_pool2d(const Var& x, std::size_t window, std::size_t stride,
               Padding padding = Padding::same);

/// Nearest-neighbour resize of NHWC input to out_h x out_w.
Var upsample_nearest(const Var& x, std::size_t out_h, std::size_t out_w);

Var reshape(const Var& a, Shape shape);
Var sum(const Var& a);
Var mean(const Var& a);

/// Row-wise softmax with max subtraction.
Var softmax_rows(const Var& logits);
Var log_softmax_rows(const Var& logits);

/// Columns [begin, end) of a matrix.
Var slice_cols(const Var& a, std::size_t begin, std::size_t end);
/// Zero-pads a matrix on the right to `width` columns.
Var pad_cols(const Var& a, std::size_t width);
Var concat_rows(const Var& a, const Var& b);
Var take_rows(const Var& a, std::span<const std::size_t> rows);

/// Same value, no gradient.
Var stop_gradient(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator-(const Var& a) { return neg(a); }

/// Output spatial size of a conv/pool along one axis.
std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding);

}  // namespace avae
