// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include "rifenet/simd.hpp"

namespace rifenet::simd {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), a0);
    a1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), a1);
    a2 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 8), _mm256_loadu_pd(y + i + 8), a2);
    a3 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 12), _mm256_loadu_pd(y + i + 12), a3);
  }
  for (; i + 4 <= n; i += 4) a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), a0);
  double acc = hsum(_mm256_add_pd(_mm256_add_pd(a0, a1), _mm256_add_pd(a2, a3)));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i + 4, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void scale_avx2(double a, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_mul_pd(va, _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] *= a;
}

void gemm_avx2(std::size_t m, std::size_t n, std::size_t k, const double* A, const double* B, double* C) {
  constexpr std::size_t kBlock = 256;
  const std::size_t n8 = n - n % 8;
  for (std::size_t p0 = 0; p0 < k; p0 += kBlock) {
    const std::size_t kb = (p0 + kBlock <= k) ? kBlock : k - p0;
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      const double* a = A + i * k + p0;
      double* c = C + i * n;
      for (std::size_t j = 0; j < n8; j += 8) {
        __m256d c00 = _mm256_loadu_pd(c + 0 * n + j), c01 = _mm256_loadu_pd(c + 0 * n + j + 4);
        __m256d c10 = _mm256_loadu_pd(c + 1 * n + j), c11 = _mm256_loadu_pd(c + 1 * n + j + 4);
        __m256d c20 = _mm256_loadu_pd(c + 2 * n + j), c21 = _mm256_loadu_pd(c + 2 * n + j + 4);
        __m256d c30 = _mm256_loadu_pd(c + 3 * n + j), c31 = _mm256_loadu_pd(c + 3 * n + j + 4);
        const double* b = B + p0 * n + j;
        for (std::size_t p = 0; p < kb; ++p, b += n) {
          const __m256d b0 = _mm256_loadu_pd(b);
          const __m256d b1 = _mm256_loadu_pd(b + 4);
          __m256d av = _mm256_broadcast_sd(a + 0 * k + p);
          c00 = _mm256_fmadd_pd(av, b0, c00);
          c01 = _mm256_fmadd_pd(av, b1, c01);
          av = _mm256_broadcast_sd(a + 1 * k + p);
          c10 = _mm256_fmadd_pd(av, b0, c10);
          c11 = _mm256_fmadd_pd(av, b1, c11);
          av = _mm256_broadcast_sd(a + 2 * k + p);
          c20 = _mm256_fmadd_pd(av, b0, c20);
          c21 = _mm256_fmadd_pd(av, b1, c21);
          av = _mm256_broadcast_sd(a + 3 * k + p);
          c30 = _mm256_fmadd_pd(av, b0, c30);
          c31 = _mm256_fmadd_pd(av, b1, c31);
        }
        _mm256_storeu_pd(c + 0 * n + j, c00);
        _mm256_storeu_pd(c + 0 * n + j + 4, c01);
        _mm256_storeu_pd(c + 1 * n + j, c10);
        _mm256_storeu_pd(c + 1 * n + j + 4, c11);
        _mm256_storeu_pd(c + 2 * n + j, c20);
        _mm256_storeu_pd(c + 2 * n + j + 4, c21);
        _mm256_storeu_pd(c + 3 * n + j, c30);
        _mm256_storeu_pd(c + 3 * n + j + 4, c31);
      }
      if (n8 < n) {
        for (std::size_t r = 0; r < 4; ++r) {
          const double* ar = a + r * k;
          double* cr = c + r * n;
          for (std::size_t p = 0; p < kb; ++p) {
            const double av = ar[p];
            const double* br = B + (p0 + p) * n;
            for (std::size_t j = n8; j < n; ++j) cr[j] += av * br[j];
          }
        }
      }
    }
    for (; i < m; ++i) {
      const double* a = A + i * k + p0;
      double* c = C + i * n;
      for (std::size_t p = 0; p < kb; ++p) {
        const double av = a[p];
        const double* br = B + (p0 + p) * n;
        const __m256d va = _mm256_set1_pd(av);
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4)
          _mm256_storeu_pd(c + j, _mm256_fmadd_pd(va, _mm256_loadu_pd(br + j), _mm256_loadu_pd(c + j)));
        for (; j < n; ++j) c[j] += av * br[j];
      }
    }
  }
}

}  // namespace

const KernelTable* avx2_table_unchecked() {
  static const KernelTable table{Isa::Avx2, dot_avx2, axpy_avx2, scale_avx2, gemm_avx2};
  return &table;
}

}  // namespace rifenet::simd
