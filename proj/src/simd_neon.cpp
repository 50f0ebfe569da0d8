// AArch64 only; the build adds this file when targeting arm64.
#include "promptsteer/simd.hpp"

#include <arm_neon.h>

namespace promptsteer::simd::detail {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) noexcept {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
        acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
    }
    double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) noexcept {
    const float64x2_t va = vdupq_n_f64(alpha);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t prod = vmulq_f64(va, vld1q_f64(x + i));
        vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), prod));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

extern const KernelTable kNeonTable{Isa::neon, &dot_neon, &axpy_neon};

}  // namespace promptsteer::simd::detail
