#include <immintrin.h>

#include <algorithm>
#include <vector>

#include "avae/kernels.hpp"

namespace avae::kernels {

const KernelTable& avx2_variant();

namespace {

// R rows by 16 columns of C held in two zmm registers per row. Columns past
// the edge of C are masked off; the packed panel is zero there.
template <int R, bool Acc>
inline void block(std::size_t n, std::size_t k, const double* a, std::size_t rs, std::size_t ps,
                  const double* panel, double* c, __mmask8 m0, __mmask8 m1) {
  __m512d lo[R], hi[R];
#pragma GCC unroll 16
  for (int r = 0; r < R; ++r) {
    lo[r] = Acc ? _mm512_maskz_loadu_pd(m0, c + r * n) : _mm512_setzero_pd();
    hi[r] = Acc ? _mm512_maskz_loadu_pd(m1, c + r * n + 8) : _mm512_setzero_pd();
  }
  for (std::size_t p = 0; p < k; ++p) {
    const __m512d b0 = _mm512_loadu_pd(panel + p * 16);
    const __m512d b1 = _mm512_loadu_pd(panel + p * 16 + 8);
    const double* ap = a + p * ps;
#pragma GCC unroll 16
    for (int r = 0; r < R; ++r) {
      const __m512d x = _mm512_set1_pd(ap[r * rs]);
      lo[r] = _mm512_fmadd_pd(x, b0, lo[r]);
      hi[r] = _mm512_fmadd_pd(x, b1, hi[r]);
    }
  }
#pragma GCC unroll 16
  for (int r = 0; r < R; ++r) {
    _mm512_mask_storeu_pd(c + r * n, m0, lo[r]);
    _mm512_mask_storeu_pd(c + r * n + 8, m1, hi[r]);
  }
}

__mmask8 lane_mask(std::size_t width) {
  return width >= 8 ? __mmask8(0xFF) : static_cast<__mmask8>((1u << width) - 1u);
}

// Few output columns: lanes run over 8 rows of C instead, from a transposed
// copy of those rows of A.
template <bool Acc>
void gemm_narrow(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t rs,
                 std::size_t ps, const double* b, double* c) {
  thread_local std::vector<double> panel;
  panel.resize(k * 8);
  alignas(64) double tmp[8];
  for (std::size_t i = 0; i < m; i += 8) {
    const std::size_t h = std::min<std::size_t>(8, m - i);
    for (std::size_t p = 0; p < k; ++p) {
      double* dst = panel.data() + p * 8;
      for (std::size_t r = 0; r < h; ++r) dst[r] = a[(i + r) * rs + p * ps];
      for (std::size_t r = h; r < 8; ++r) dst[r] = 0.0;
    }
    for (std::size_t j = 0; j < n; ++j) {
      __m512d acc = _mm512_setzero_pd();
      if (Acc) {
        for (std::size_t r = 0; r < h; ++r) tmp[r] = c[(i + r) * n + j];
        acc = _mm512_maskz_loadu_pd(lane_mask(h), tmp);
      }
      for (std::size_t p = 0; p < k; ++p)
        acc = _mm512_fmadd_pd(_mm512_loadu_pd(panel.data() + p * 8), _mm512_set1_pd(b[p * n + j]), acc);
      _mm512_store_pd(tmp, acc);
      for (std::size_t r = 0; r < h; ++r) c[(i + r) * n + j] = tmp[r];
    }
  }
}

// Same element order as the scalar reference: every output is one fused
// multiply-add chain over p = 0..k-1.
template <bool Acc>
void gemm_strided(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t rs,
                  std::size_t ps, const double* b, double* c) {
  constexpr std::size_t kRows = 8;
  if (n <= 2) {
    gemm_narrow<Acc>(m, n, k, a, rs, ps, b, c);
    return;
  }
  thread_local std::vector<double> panel;
  panel.resize(k * 16);
  for (std::size_t j = 0; j < n; j += 16) {
    const std::size_t w = std::min<std::size_t>(16, n - j);
    const __mmask8 m0 = lane_mask(w), m1 = lane_mask(w > 8 ? w - 8 : 0);
    for (std::size_t p = 0; p < k; ++p) {
      _mm512_storeu_pd(panel.data() + p * 16, _mm512_maskz_loadu_pd(m0, b + p * n + j));
      _mm512_storeu_pd(panel.data() + p * 16 + 8, _mm512_maskz_loadu_pd(m1, b + p * n + j + 8));
    }
    std::size_t i = 0;
    for (; i + kRows <= m; i += kRows)
      block<kRows, Acc>(n, k, a + i * rs, rs, ps, panel.data(), c + i * n + j, m0, m1);
    for (; i + 4 <= m; i += 4) block<4, Acc>(n, k, a + i * rs, rs, ps, panel.data(), c + i * n + j, m0, m1);
    for (; i < m; ++i) block<1, Acc>(n, k, a + i * rs, rs, ps, panel.data(), c + i * n + j, m0, m1);
  }
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  gemm_strided<false>(m, n, k, a, k, 1, b, c);
}

void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                 double* c) {
  gemm_strided<true>(m, n, k, a, 1, m, b, c);
}

}  // namespace

const KernelTable& avx512_variant() {
  // Elementwise loops are memory-bound; the AVX2 versions are kept.
  const KernelTable& base = avx2_variant();
  static const KernelTable table{Isa::avx512, "avx512", gemm, gemm_tn_acc, base.add, base.mul, base.axpy, base.relu};
  return table;
}

}  // namespace avae::kernels
