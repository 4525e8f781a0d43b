#pragma once
// Dense arithmetic kernels behind a runtime-selected dispatch table.
//
// Every kernel has a portable scalar reference implementation; x86-64 builds
// also compile an AVX2/FMA variant that is picked at startup when the CPU
// reports support. RIFENET_SIMD=scalar in the environment forces the
// reference path.

#include <cstddef>
#include <string_view>

namespace rifenet::simd {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
  Isa isa;
  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // y[i] *= a
  void (*scale)(double a, double* y, std::size_t n);
  // C[m x n] += A[m x k] * B[k x n], all row-major and densely packed.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* A, const double* B, double* C);
};

const KernelTable& scalar_kernels();
// nullptr when the AVX2 variant is not compiled in or the CPU lacks it.
const KernelTable* avx2_kernels();

const KernelTable& active();
Isa active_isa();
// Test hook; returns false if the requested ISA is unavailable.
bool force_isa(Isa isa);
std::string_view isa_name(Isa isa);

inline double dot(const double* x, const double* y, std::size_t n) { return active().dot(x, y, n); }
inline void axpy(double a, const double* x, double* y, std::size_t n) { active().axpy(a, x, y, n); }
inline void scale(double a, double* y, std::size_t n) { active().scale(a, y, n); }
inline void gemm(std::size_t m, std::size_t n, std::size_t k, const double* A, const double* B, double* C) {
  active().gemm(m, n, k, A, B, C);
}

}  // namespace rifenet::simd
