#include "avae/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "avae/errors.hpp"
#include "avae/kernels.hpp"

namespace avae {
namespace {

const kernels::KernelTable& kern() { return kernels::active(); }

using Grads = std::vector<Tensor>;
using Needs = std::vector<bool>;

Shape strip_leading_ones(const Shape& s) {
  std::size_t i = 0;
  while (i < s.size() && s[i] == 1) ++i;
  return Shape(s.begin() + static_cast<std::ptrdiff_t>(i), s.end());
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return a;
  if (is_suffix(strip_leading_ones(b), a)) return a;
  if (is_suffix(strip_leading_ones(a), b)) return b;
  throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                   " are not broadcast-compatible");
}

// Sums a gradient over the repeats of a broadcast operand.
Tensor reduce_to(const Tensor& g, const Shape& shape) {
  const std::size_t n = shape_size(shape);
  if (n == g.size()) return g.reshaped(shape);
  Tensor out(shape);
  if (n == 0) return out;
  for (std::size_t r = 0; r < g.size(); r += n) kern().add(n, out.raw(), g.raw() + r, out.raw());
  return out;
}

// Elementwise op whose derivative is a function of (x, y).
template <typename F, typename DF>
Var unary(const Var& a, const char* name, F f, DF df) {
  Tape& tape = a.tape();
  const Tensor& x = a.value();
  Tensor y = Tensor::uninitialized(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t aid = a.id();
  const std::size_t oid = tape.size();
  return tape.record(name, std::move(y), {a}, [&tape, aid, oid, df](const Tensor& g, const Needs&) {
    const Tensor& xv = tape.value(aid);
    const Tensor& yv = tape.value(oid);
    Tensor gx = Tensor::uninitialized(xv.shape());
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = g[i] * df(xv[i], yv[i]);
    return Grads{std::move(gx)};
  });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void transpose(const double* in, std::size_t rows, std::size_t cols, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = in[r * cols + c];
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + " expects rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

struct ConvGeometry {
  std::size_t n, h, w, cin, kh, kw, cout, oh, ow, sh, sw, pad_top, pad_left;
  std::size_t patch() const { return kh * kw * cin; }
  std::size_t positions() const { return oh * ow; }
};

std::size_t same_pad_before(std::size_t in, std::size_t out, std::size_t kernel,
                            std::size_t stride) {
  const std::ptrdiff_t total = static_cast<std::ptrdiff_t>((out - 1) * stride + kernel) -
                               static_cast<std::ptrdiff_t>(in);
  return total > 0 ? static_cast<std::size_t>(total / 2) : 0;
}

// Gathers receptive fields of image `img` into col[positions x patch].
void im2col(const ConvGeometry& g, const double* img, double* col) {
  const std::size_t patch = g.patch();
  for (std::size_t oy = 0; oy < g.oh; ++oy) {
    for (std::size_t ox = 0; ox < g.ow; ++ox) {
      double* row = col + (oy * g.ow + ox) * patch;
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.sh + ky) -
                                  static_cast<std::ptrdiff_t>(g.pad_top);
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.sw + kx) -
                                    static_cast<std::ptrdiff_t>(g.pad_left);
          double* dst = row + (ky * g.kw + kx) * g.cin;
          if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.h) ||
              ix >= static_cast<std::ptrdiff_t>(g.w)) {
            std::fill(dst, dst + g.cin, 0.0);
          } else {
            std::memcpy(dst, img + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.cin,
                        g.cin * sizeof(double));
          }
        }
      }
    }
  }
}

// Scatter-adds col[positions x patch] back into image gradient `img`.
void col2im(const ConvGeometry& g, const double* col, double* img) {
  const std::size_t patch = g.patch();
  for (std::size_t oy = 0; oy < g.oh; ++oy) {
    for (std::size_t ox = 0; ox < g.ow; ++ox) {
      const double* row = col + (oy * g.ow + ox) * patch;
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.sh + ky) -
                                  static_cast<std::ptrdiff_t>(g.pad_top);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.sw + kx) -
                                    static_cast<std::ptrdiff_t>(g.pad_left);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
          const double* src = row + (ky * g.kw + kx) * g.cin;
          double* dst = img + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.cin;
          for (std::size_t c = 0; c < g.cin; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

}  // namespace

std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride,
                          Padding padding) {
  if (stride == 0) throw ShapeError("stride must be >= 1");
  if (padding == Padding::same) return (in + stride - 1) / stride;
  if (kernel > in) {
    throw ShapeError("kernel extent " + std::to_string(kernel) + " exceeds input extent " +
                     std::to_string(in) + " with valid padding");
  }
  return (in - kernel) / stride + 1;
}

// ---------------------------------------------------------------- binary

Var add(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Shape out_shape = broadcast_shape(av.shape(), bv.shape(), "add");
  Tensor y = Tensor::uninitialized(out_shape);
  if (av.size() == bv.size()) {
    kern().add(y.size(), av.raw(), bv.raw(), y.raw());
  } else {
    // The smaller operand's size divides the larger one's.
    const bool a_big = av.size() > bv.size();
    const Tensor& big = a_big ? av : bv;
    const Tensor& small = a_big ? bv : av;
    const std::size_t ns = small.size();
    if (ns > 0) {
      for (std::size_t r = 0; r < y.size(); r += ns) {
        if (a_big) kern().add(ns, big.raw() + r, small.raw(), y.raw() + r);
        else kern().add(ns, small.raw(), big.raw() + r, y.raw() + r);
      }
    }
  }
  const Shape sa = av.shape(), sb = bv.shape();
  return a.tape().record("add", std::move(y), {a, b}, [sa, sb](const Tensor& g, const Needs& need) {
    Grads out(2);
    if (need[0]) out[0] = reduce_to(g, sa);
    if (need[1]) out[1] = reduce_to(g, sb);
    return out;
  });
}

Var sub(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Shape out_shape = broadcast_shape(av.shape(), bv.shape(), "sub");
  Tensor y = Tensor::uninitialized(out_shape);
  const std::size_t na = av.size(), nb = bv.size();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i % na] - bv[i % nb];
  const Shape sa = av.shape(), sb = bv.shape();
  return a.tape().record("sub", std::move(y), {a, b}, [sa, sb](const Tensor& g, const Needs& need) {
    Grads out(2);
    if (need[0]) out[0] = reduce_to(g, sa);
    if (need[1]) {
      out[1] = reduce_to(g, sb);
      for (double& v : out[1].data()) v = -v;
    }
    return out;
  });
}

Var mul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Shape out_shape = broadcast_shape(av.shape(), bv.shape(), "mul");
  Tensor y = Tensor::uninitialized(out_shape);
  const std::size_t na = av.size(), nb = bv.size();
  if (na == nb) {
    kern().mul(y.size(), av.raw(), bv.raw(), y.raw());
  } else {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i % na] * bv[i % nb];
  }
  Tape& tape = a.tape();
  const std::size_t aid = a.id(), bid = b.id();
  return tape.record("mul", std::move(y), {a, b}, [&tape, aid, bid](const Tensor& g, const Needs& need) {
    const Tensor& av = tape.value(aid);
    const Tensor& bv = tape.value(bid);
    const std::size_t na = av.size(), nb = bv.size();
    Grads out(2);
    if (need[0]) {
      Tensor ga = Tensor::uninitialized(g.shape());
      if (nb == g.size()) kern().mul(nb, g.raw(), bv.raw(), ga.raw());
      else for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * bv[i % nb];
      out[0] = reduce_to(ga, av.shape());
    }
    if (need[1]) {
      Tensor gb = Tensor::uninitialized(g.shape());
      if (na == g.size()) kern().mul(na, g.raw(), av.raw(), gb.raw());
      else for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * av[i % na];
      out[1] = reduce_to(gb, bv.shape());
    }
    return out;
  });
}

// ---------------------------------------------------------------- unary

Var neg(const Var& a) {
  return unary(a, "neg", [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var scale(const Var& a, double factor) {
  return unary(a, "scale", [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Var add_scalar(const Var& a, double value) {
  return unary(a, "add_scalar", [value](double x) { return x + value; },
               [](double, double) { return 1.0; });
}

Var relu(const Var& a) {
  Tape& tape = a.tape();
  const Tensor& x = a.value();
  Tensor y = Tensor::uninitialized(x.shape());
  kern().relu(x.size(), x.raw(), y.raw());
  const std::size_t aid = a.id();
  return tape.record("relu", std::move(y), {a}, [&tape, aid](const Tensor& g, const Needs&) {
    const Tensor& xv = tape.value(aid);
    Tensor gx = Tensor::uninitialized(xv.shape());
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = xv[i] > 0.0 ? g[i] : 0.0;
    return Grads{std::move(gx)};
  });
}

Var sigmoid(const Var& a) {
  return unary(a, "sigmoid", stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var exp(const Var& a) {
  return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0)) {
      throw DomainError("log: non-positive input " + std::to_string(x[i]) + " at index " +
                        std::to_string(i));
    }
  }
  return unary(a, "log", [](double v) { return std::log(v); },
               [](double v, double) { return 1.0 / v; });
}

Var softplus(const Var& a) {
  return unary(
      a, "softplus", [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) { return stable_sigmoid(x); });
}

Var square(const Var& a) {
  return unary(a, "square", [](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------- linear algebra

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: dimension mismatch between " + shape_str(av.shape()) + " and " +
                     shape_str(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor y = Tensor::uninitialized(Shape{m, n});
  kern().gemm(m, n, k, av.raw(), bv.raw(), y.raw());
  Tape& tape = a.tape();
  const std::size_t aid = a.id(), bid = b.id();
  return tape.record("matmul", std::move(y), {a, b},
                     [&tape, aid, bid, m, k, n](const Tensor& g, const Needs& need) {
                       const Tensor& av = tape.value(aid);
                       const Tensor& bv = tape.value(bid);
                       Grads out(2);
                       if (need[0]) {
                         std::vector<double> bt(k * n);
                         transpose(bv.raw(), k, n, bt.data());
                         out[0] = Tensor::uninitialized(Shape{m, k});
                         kern().gemm(m, k, n, g.raw(), bt.data(), out[0].raw());
                       }
                       if (need[1]) {
                         out[1] = Tensor(Shape{k, n});
                         kern().gemm_tn_acc(k, n, m, av.raw(), g.raw(), out[1].raw());
                       }
                       return out;
                     });
}

// ---------------------------------------------------------------- convolution

Var conv2d(const Var& x, const Var& kernels, const Conv2dOptions& opts) {
  const Tensor& xv = x.value();
  const Tensor& kv = kernels.value();
  require_rank(xv, 4, "conv2d input");
  require_rank(kv, 4, "conv2d kernels");
  if (kv.dim(2) != xv.dim(3)) {
    throw ShapeError("conv2d: input channels " + shape_str(xv.shape()) +
                     " do not match kernels " + shape_str(kv.shape()));
  }
  if (opts.stride_h == 0 || opts.stride_w == 0) throw ShapeError("conv2d: stride must be >= 1");
  ConvGeometry geo{};
  geo.n = xv.dim(0);
  geo.h = xv.dim(1);
  geo.w = xv.dim(2);
  geo.cin = xv.dim(3);
  geo.kh = kv.dim(0);
  geo.kw = kv.dim(1);
  geo.cout = kv.dim(3);
  geo.sh = opts.stride_h;
  geo.sw = opts.stride_w;
  geo.oh = conv_out_size(geo.h, geo.kh, geo.sh, opts.padding);
  geo.ow = conv_out_size(geo.w, geo.kw, geo.sw, opts.padding);
  if (opts.padding == Padding::same) {
    geo.pad_top = same_pad_before(geo.h, geo.oh, geo.kh, geo.sh);
    geo.pad_left = same_pad_before(geo.w, geo.ow, geo.kw, geo.sw);
  }

  Tensor y = Tensor::uninitialized(Shape{geo.n, geo.oh, geo.ow, geo.cout});
  std::vector<double> col(geo.positions() * geo.patch());
  const std::size_t in_img = geo.h * geo.w * geo.cin;
  const std::size_t out_img = geo.positions() * geo.cout;
  for (std::size_t i = 0; i < geo.n; ++i) {
    im2col(geo, xv.raw() + i * in_img, col.data());
    kern().gemm(geo.positions(), geo.cout, geo.patch(), col.data(), kv.raw(), y.raw() + i * out_img);
  }

  Tape& tape = x.tape();
  const std::size_t xid = x.id(), kid = kernels.id();
  return tape.record("conv2d", std::move(y), {x, kernels},
                     [&tape, xid, kid, geo](const Tensor& g, const Needs& need) {
                       const Tensor& xv = tape.value(xid);
                       const Tensor& kv = tape.value(kid);
                       const std::size_t P = geo.positions(), K = geo.patch(), C = geo.cout;
                       const std::size_t in_img = geo.h * geo.w * geo.cin;
                       Grads out(2);
                       std::vector<double> col(P * K);
                       if (need[0]) out[0] = Tensor(xv.shape());
                       if (need[1]) out[1] = Tensor(kv.shape());
                       std::vector<double> kt;
                       if (need[0]) {
                         kt.resize(K * C);
                         transpose(kv.raw(), K, C, kt.data());
                       }
                       for (std::size_t i = 0; i < geo.n; ++i) {
                         const double* gi = g.raw() + i * P * C;
                         if (need[1]) {
                           im2col(geo, xv.raw() + i * in_img, col.data());
                           kern().gemm_tn_acc(K, C, P, col.data(), gi, out[1].raw());
                         }
                         if (need[0]) {
                           kern().gemm(P, K, C, gi, kt.data(), col.data());
                           col2im(geo, col.data(), out[0].raw() + i * in_img);
                         }
                       }
                       return out;
                     });
}

Var max_pool2d(const Var& x, std::size_t window, std::size_t stride, Padding padding) {
  const Tensor& xv = x.value();
  require_rank(xv, 4, "max_pool2d");
  const std::size_t n = xv.dim(0), h = xv.dim(1), w = xv.dim(2), c = xv.dim(3);
  const std::size_t oh = conv_out_size(h, window, stride, padding);
  const std::size_t ow = conv_out_size(w, window, stride, padding);
  const std::size_t pt = padding == Padding::same ? same_pad_before(h, oh, window, stride) : 0;
  const std::size_t pl = padding == Padding::same ? same_pad_before(w, ow, window, stride) : 0;
  Tensor y = Tensor::uninitialized(Shape{n, oh, ow, c});
  std::vector<std::size_t> argmax(y.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_idx = 0;
          for (std::size_t ky = 0; ky < window; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pt);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < window; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pl);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              const std::size_t idx = ((i * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) * c + ch;
              if (xv[idx] > best) {
                best = xv[idx];
                best_idx = idx;
              }
            }
          }
          const std::size_t o = ((i * oh + oy) * ow + ox) * c + ch;
          y[o] = best;
          argmax[o] = best_idx;
        }
      }
    }
  }
  const Shape in_shape = xv.shape();
  return x.tape().record("max_pool2d", std::move(y), {x},
                         [in_shape, argmax = std::move(argmax)](const Tensor& g, const Needs&) {
                           Tensor gx(in_shape);
                           for (std::size_t o = 0; o < g.size(); ++o) gx[argmax[o]] += g[o];
                           return Grads{std::move(gx)};
                         });
}

Var upsample_nearest(const Var& x, std::size_t out_h, std::size_t out_w) {
  const Tensor& xv = x.value();
  require_rank(xv, 4, "upsample_nearest");
  const std::size_t n = xv.dim(0), h = xv.dim(1), w = xv.dim(2), c = xv.dim(3);
  if (out_h == 0 || out_w == 0 || h == 0 || w == 0) throw ShapeError("upsample_nearest: empty extent");
  auto src_index = [=](std::size_t i, std::size_t oy, std::size_t ox) {
    const std::size_t sy = oy * h / out_h, sx = ox * w / out_w;
    return ((i * h + sy) * w + sx) * c;
  };
  Tensor y = Tensor::uninitialized(Shape{n, out_h, out_w, c});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        std::memcpy(y.raw() + ((i * out_h + oy) * out_w + ox) * c, xv.raw() + src_index(i, oy, ox),
                    c * sizeof(double));
      }
    }
  }
  const Shape in_shape = xv.shape();
  return x.tape().record("upsample_nearest", std::move(y), {x},
                         [in_shape, src_index, n, out_h, out_w, c](const Tensor& g, const Needs&) {
                           Tensor gx(in_shape);
                           for (std::size_t i = 0; i < n; ++i) {
                             for (std::size_t oy = 0; oy < out_h; ++oy) {
                               for (std::size_t ox = 0; ox < out_w; ++ox) {
                                 const double* src = g.raw() + ((i * out_h + oy) * out_w + ox) * c;
                                 double* dst = gx.raw() + src_index(i, oy, ox);
                                 for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
                               }
                             }
                           }
                           return Grads{std::move(gx)};
                         });
}

// ---------------------------------------------------------------- structural

Var reshape(const Var& a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  const Shape in_shape = a.value().shape();
  return a.tape().record("reshape", std::move(y), {a}, [in_shape](const Tensor& g, const Needs&) {
    return Grads{g.reshaped(in_shape)};
  });
}

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  const Shape in_shape = a.value().shape();
  return a.tape().record("sum", Tensor::scalar(total), {a}, [in_shape](const Tensor& g, const Needs&) {
    return Grads{Tensor(in_shape, g.item())};
  });
}

Var mean(const Var& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ContractError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var softmax_rows(const Var& logits) {
  const Tensor& x = logits.value();
  require_rank(x, 2, "softmax_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.raw() + r * cols;
    double* yr = y.raw() + r * cols;
    const double mx = *std::max_element(xr, xr + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (yr[c] = std::exp(xr[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) yr[c] /= z;
  }
  Tape& tape = logits.tape();
  const std::size_t oid = tape.size();
  return tape.record("softmax_rows", std::move(y), {logits},
                     [&tape, oid, rows, cols](const Tensor& g, const Needs&) {
                       const Tensor& y = tape.value(oid);
                       Tensor gx(y.shape());
                       for (std::size_t r = 0; r < rows; ++r) {
                         double dot = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
                         for (std::size_t c = 0; c < cols; ++c) {
                           gx[r * cols + c] = y[r * cols + c] * (g[r * cols + c] - dot);
                         }
                       }
                       return Grads{std::move(gx)};
                     });
}

Var log_softmax_rows(const Var& logits) {
  const Tensor& x = logits.value();
  require_rank(x, 2, "log_softmax_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.raw() + r * cols;
    const double mx = *std::max_element(xr, xr + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(xr[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] = xr[c] - lse;
  }
  Tape& tape = logits.tape();
  const std::size_t oid = tape.size();
  return tape.record("log_softmax_rows", std::move(y), {logits},
                     [&tape, oid, rows, cols](const Tensor& g, const Needs&) {
                       const Tensor& y = tape.value(oid);
                       Tensor gx(y.shape());
                       for (std::size_t r = 0; r < rows; ++r) {
                         double gsum = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) gsum += g[r * cols + c];
                         for (std::size_t c = 0; c < cols; ++c) {
                           gx[r * cols + c] = g[r * cols + c] - std::exp(y[r * cols + c]) * gsum;
                         }
                       }
                       return Grads{std::move(gx)};
                     });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  require_rank(x, 2, "slice_cols");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (begin > end || end > cols) {
    throw ShapeError("slice_cols [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t width = end - begin;
  Tensor y(Shape{rows, width});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < width; ++c) y[r * width + c] = x[r * cols + begin + c];
  }
  return a.tape().record("slice_cols", std::move(y), {a},
                         [rows, cols, begin, width](const Tensor& g, const Needs&) {
                           Tensor gx(Shape{rows, cols});
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t c = 0; c < width; ++c) gx[r * cols + begin + c] = g[r * width + c];
                           }
                           return Grads{std::move(gx)};
                         });
}

Var pad_cols(const Var& a, std::size_t width) {
  const Tensor& x = a.value();
  require_rank(x, 2, "pad_cols");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (width < cols) throw ShapeError("pad_cols: target width smaller than input");
  Tensor y(Shape{rows, width});
  for (std::size_t r = 0; r < rows; ++r) {
    std::memcpy(y.raw() + r * width, x.raw() + r * cols, cols * sizeof(double));
  }
  return a.tape().record("pad_cols", std::move(y), {a}, [rows, cols, width](const Tensor& g, const Needs&) {
    Tensor gx(Shape{rows, cols});
    for (std::size_t r = 0; r < rows; ++r) {
      std::memcpy(gx.raw() + r * cols, g.raw() + r * width, cols * sizeof(double));
    }
    return Grads{std::move(gx)};
  });
}

Var concat_rows(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() == 0 || av.rank() != bv.rank() ||
      !std::equal(av.shape().begin() + 1, av.shape().end(), bv.shape().begin() + 1)) {
    throw ShapeError("concat_rows: incompatible shapes " + shape_str(av.shape()) + " and " +
                     shape_str(bv.shape()));
  }
  Shape out_shape = av.shape();
  out_shape[0] += bv.dim(0);
  std::vector<double> data;
  data.reserve(av.size() + bv.size());
  data.insert(data.end(), av.data().begin(), av.data().end());
  data.insert(data.end(), bv.data().begin(), bv.data().end());
  const Shape sa = av.shape(), sb = bv.shape();
  const std::size_t na = av.size();
  return a.tape().record("concat_rows", Tensor(std::move(out_shape), std::move(data)), {a, b},
                         [sa, sb, na](const Tensor& g, const Needs&) {
                           Grads out(2);
                           out[0] = Tensor(sa, std::vector<double>(g.raw(), g.raw() + na));
                           out[1] = Tensor(sb, std::vector<double>(g.raw() + na, g.raw() + g.size()));
                           return out;
                         });
}

Var take_rows(const Var& a, std::span<const std::size_t> rows) {
  Tensor y = a.value().take_rows(rows);
  const Shape in_shape = a.value().shape();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return a.tape().record("take_rows", std::move(y), {a},
                         [in_shape, idx = std::move(idx)](const Tensor& g, const Needs&) {
                           Tensor gx(in_shape);
                           const std::size_t stride = idx.empty() ? 0 : g.size() / idx.size();
                           for (std::size_t i = 0; i < idx.size(); ++i) {
                             for (std::size_t j = 0; j < stride; ++j) gx[idx[i] * stride + j] += g[i * stride + j];
                           }
                           return Grads{std::move(gx)};
                         });
}

Var stop_gradient(const Var& a) { return a.tape().constant(a.value()); }

}  // namespace avae
