#pragma once
// Data-parallel inner loops of the encoder, with a scalar reference and
// per-ISA variants selected once at runtime.
//
// Contract shared by every variant:
//   axpy  is elementwise (y[i] += a * x[i], separately rounded multiply and
//         add), so all variants are bit-identical to the scalar reference.
//   dot   is a reduction; variants may reassociate, so results agree with
//         the scalar reference only to within n * eps * sum|a[i] b[i]|.

#include <cstddef>
#include <span>
#include <string_view>

namespace promptsteer::simd {

enum class Isa { scalar, avx2, neon };

std::string_view to_string(Isa isa) noexcept;

struct KernelTable {
    Isa isa;
    double (*dot)(const double* a, const double* b, std::size_t n) noexcept;
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n) noexcept;
};

const KernelTable& scalar_kernels() noexcept;

// nullptr when the variant was not compiled in or the CPU lacks it.
const KernelTable* avx2_kernels() noexcept;
const KernelTable* neon_kernels() noexcept;

// The table used by the encoder. Chosen on first use: PROMPTSTEER_SIMD
// (scalar|avx2|neon|auto) if set, else the widest supported variant.
const KernelTable& active() noexcept;

// Overrides the active table. Returns false (and changes nothing) if the
// requested variant is unavailable on this machine.
bool select(Isa isa) noexcept;

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
    return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) noexcept {
    active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace promptsteer::simd
