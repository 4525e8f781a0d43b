#include <atomic>
#include <cstdlib>
#include <string>

#include "rifenet/simd.hpp"

namespace rifenet::simd {

#if defined(RIFENET_HAVE_AVX2)
const KernelTable* avx2_table_unchecked();
#endif

const KernelTable* avx2_kernels() {
#if defined(RIFENET_HAVE_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? avx2_table_unchecked() : nullptr;
#else
  return nullptr;
#endif
}

namespace {

const KernelTable* select_default() {
  const char* env = std::getenv("RIFENET_SIMD");
  if (env != nullptr && std::string(env) == "scalar") return &scalar_kernels();
  if (const KernelTable* t = avx2_kernels()) return t;
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{select_default()};
  return table;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

Isa active_isa() { return active().isa; }

bool force_isa(Isa isa) {
  if (isa == Isa::Scalar) {
    current().store(&scalar_kernels());
    return true;
  }
  const KernelTable* t = avx2_kernels();
  if (t == nullptr) return false;
  current().store(t);
  return true;
}

std::string_view isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

}  // namespace rifenet::simd
