#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "avae/kernels.hpp"

namespace avae::kernels {
namespace {

// Element (i, p) of A lives at a[i * rs + p * ps], which covers both A and
// A^T without copying. R rows by 8 columns of C stay in registers for the
// whole k loop; with Acc the chains start from the current C values.
template <int R, bool Acc>
inline void block_r8(std::size_t n, std::size_t ldb, std::size_t k, const double* a, std::size_t rs,
                     std::size_t ps, const double* b, double* c) {
  __m256d lo[R], hi[R];
#pragma GCC unroll 8
  for (int r = 0; r < R; ++r) {
    lo[r] = Acc ? _mm256_loadu_pd(c + r * n) : _mm256_setzero_pd();
    hi[r] = Acc ? _mm256_loadu_pd(c + r * n + 4) : _mm256_setzero_pd();
  }
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = b + p * ldb;
    const __m256d b0 = _mm256_loadu_pd(bp);
    const __m256d b1 = _mm256_loadu_pd(bp + 4);
    const double* ap = a + p * ps;
#pragma GCC unroll 8
    for (int r = 0; r < R; ++r) {
      const __m256d x = _mm256_broadcast_sd(ap + r * rs);
      lo[r] = _mm256_fmadd_pd(x, b0, lo[r]);
      hi[r] = _mm256_fmadd_pd(x, b1, hi[r]);
    }
  }
#pragma GCC unroll 8
  for (int r = 0; r < R; ++r) {
    _mm256_storeu_pd(c + r * n, lo[r]);
    _mm256_storeu_pd(c + r * n + 4, hi[r]);
  }
}

template <int R, bool Acc>
inline void block_r4(std::size_t n, std::size_t k, const double* a, std::size_t rs, std::size_t ps,
                     const double* b, double* c) {
  __m256d acc[R];
#pragma GCC unroll 8
  for (int r = 0; r < R; ++r) acc[r] = Acc ? _mm256_loadu_pd(c + r * n) : _mm256_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d bv = _mm256_loadu_pd(b + p * n);
    const double* ap = a + p * ps;
#pragma GCC unroll 8
    for (int r = 0; r < R; ++r) acc[r] = _mm256_fmadd_pd(_mm256_broadcast_sd(ap + r * rs), bv, acc[r]);
  }
#pragma GCC unroll 8
  for (int r = 0; r < R; ++r) _mm256_storeu_pd(c + r * n, acc[r]);
}

// Columns [j, n) that do not fill a vector, for R rows.
template <int R, bool Acc>
inline void block_tail(std::size_t n, std::size_t k, std::size_t j, const double* a, std::size_t rs,
                       std::size_t ps, const double* b, double* c) {
  for (; j < n; ++j) {
    double acc[R];
#pragma GCC unroll 8
    for (int r = 0; r < R; ++r) acc[r] = Acc ? c[r * n + j] : 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double bv = b[p * n + j];
      const double* ap = a + p * ps;
  #pragma GCC unroll 8
    for (int r = 0; r < R; ++r) acc[r] = std::fma(ap[r * rs], bv, acc[r]);
    }
#pragma GCC unroll 8
    for (int r = 0; r < R; ++r) c[r * n + j] = acc[r];
  }
}

// B columns [j, j + 8) copied into a contiguous k x 8 panel so the k loop
// streams through memory; all row panels then reuse it.
template <bool Acc>
void gemm_strided(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t rs,
                  std::size_t ps, const double* b, double* c) {
  thread_local std::vector<double> panel;
  panel.resize(k * 8);
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    for (std::size_t p = 0; p < k; ++p) {
      _mm256_storeu_pd(panel.data() + p * 8, _mm256_loadu_pd(b + p * n + j));
      _mm256_storeu_pd(panel.data() + p * 8 + 4, _mm256_loadu_pd(b + p * n + j + 4));
    }
    std::size_t i = 0;
    for (; i + 6 <= m; i += 6) block_r8<6, Acc>(n, 8, k, a + i * rs, rs, ps, panel.data(), c + i * n + j);
    for (; i + 4 <= m; i += 4) block_r8<4, Acc>(n, 8, k, a + i * rs, rs, ps, panel.data(), c + i * n + j);
    for (; i < m; ++i) block_r8<1, Acc>(n, 8, k, a + i * rs, rs, ps, panel.data(), c + i * n + j);
  }
  for (; j + 4 <= n; j += 4) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) block_r4<4, Acc>(n, k, a + i * rs, rs, ps, b + j, c + i * n + j);
    for (; i < m; ++i) block_r4<1, Acc>(n, k, a + i * rs, rs, ps, b + j, c + i * n + j);
  }
  if (j < n) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) block_tail<4, Acc>(n, k, j, a + i * rs, rs, ps, b, c + i * n);
    for (; i < m; ++i) block_tail<1, Acc>(n, k, j, a + i * rs, rs, ps, b, c + i * n);
  }
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  gemm_strided<false>(m, n, k, a, k, 1, b, c);
}

void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                 double* c) {
  gemm_strided<true>(m, n, k, a, 1, m, b, c);
}

void add(std::size_t n, const double* a, const double* b, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void mul(std::size_t n, const double* a, const double* b, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(av, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void relu(std::size_t n, const double* x, double* out) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    // x > 0 ? x : +0, NaN maps to 0 as in the scalar path.
    const __m256d v = _mm256_loadu_pd(x + i);
    const __m256d mask = _mm256_cmp_pd(v, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_and_pd(mask, v));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

}  // namespace

const KernelTable& avx2_variant() {
  static const KernelTable table{Isa::avx2, "avx2", gemm, gemm_tn_acc, add, mul, axpy, relu};
  return table;
}

}  // namespace avae::kernels
