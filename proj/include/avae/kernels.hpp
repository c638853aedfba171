#pragma once

#include <cstddef>
#include <string_view>

namespace avae::kernels {

enum class Isa { scalar, avx2, avx512 };

/// Data-parallel inner loops used by the tensor ops.
///
/// Every variant computes each output element with the same sequence of
/// IEEE operations as the scalar reference (gemm accumulates k in ascending
/// order with fused multiply-add), so all variants agree bitwise.
struct KernelTable {
  Isa isa;
  std::string_view name;
  /// c[m x n] = a[m x k] * b[k x n], all row-major and contiguous.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
               double* c);
  /// c[m x n] += a^T * b with a stored as [k x m]; each element continues
  /// its fused multiply-add chain from the value already in c.
  void (*gemm_tn_acc)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                      double* c);
  void (*add)(std::size_t n, const double* a, const double* b, double* out);
  void (*mul)(std::size_t n, const double* a, const double* b, double* out);
  /// y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  void (*relu)(std::size_t n, const double* x, double* out);
};

const KernelTable& scalar_table();
/// nullptr when the variant was not compiled in or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table();
/// nullptr unless built with AVX-512 support and the CPU has AVX-512F.
const KernelTable* avx512_table();

/// Table in use. Chosen on first call: the widest available variant, or the
/// one named by the environment variable AVAE_KERNELS (scalar, avx2, avx512).
const KernelTable& active();
/// Switch variants; throws ContractError if `isa` is unavailable.
void use(Isa isa);

}  // namespace avae::kernels
