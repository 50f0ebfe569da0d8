// Compiled with -mavx2 -mfma; only reached after a cpuid check.
#include "promptsteer/simd.hpp"

#include <immintrin.h>

namespace promptsteer::simd::detail {
namespace {

double dot_avx2(const double* a, const double* b, std::size_t n) noexcept {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    if (i + 4 <= n) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        i += 4;
    }
    acc0 = _mm256_add_pd(acc0, acc1);
    const __m128d lo = _mm256_castpd256_pd128(acc0);
    const __m128d hi = _mm256_extractf128_pd(acc0, 1);
    __m128d sum = _mm_add_pd(lo, hi);
    sum = _mm_add_sd(sum, _mm_unpackhi_pd(sum, sum));
    double acc = _mm_cvtsd_f64(sum);
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

// No FMA here: the separately rounded mul+add keeps lanes bit-identical to
// the scalar loop.
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) noexcept {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

extern const KernelTable kAvx2Table{Isa::avx2, &dot_avx2, &axpy_avx2};

}  // namespace promptsteer::simd::detail
