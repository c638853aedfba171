#include <atomic>
#include <cstdlib>
#include <string_view>

#include "avae/errors.hpp"
#include "avae/kernels.hpp"

namespace avae::kernels {

#ifdef AVAE_HAVE_AVX2
const KernelTable& avx2_variant();
#endif
#ifdef AVAE_HAVE_AVX512
const KernelTable& avx512_variant();
#endif

const KernelTable* avx2_table() {
#ifdef AVAE_HAVE_AVX2
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  return supported ? &avx2_variant() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* avx512_table() {
#ifdef AVAE_HAVE_AVX512
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx512f") && avx2_table() != nullptr;
  }();
  return supported ? &avx512_variant() : nullptr;
#else
  return nullptr;
#endif
}

namespace {

const KernelTable* table_for(Isa isa) {
  switch (isa) {
    case Isa::scalar: return &scalar_table();
    case Isa::avx2: return avx2_table();
    case Isa::avx512: return avx512_table();
  }
  return nullptr;
}

const KernelTable* initial_table() {
  const char* env = std::getenv("AVAE_KERNELS");
  if (env != nullptr) {
    const std::string_view want(env);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::avx512})
      if (const KernelTable* t = table_for(isa); t != nullptr && t->name == want) return t;
  }
  if (const KernelTable* t = avx512_table()) return t;
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void use(Isa isa) {
  const KernelTable* table = table_for(isa);
  if (table == nullptr) throw ContractError("kernel variant not available on this CPU/build");
  current().store(table, std::memory_order_release);
}

}  // namespace avae::kernels
