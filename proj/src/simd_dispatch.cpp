#include "promptsteer/simd.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace promptsteer::simd {

namespace detail {
#if defined(PROMPTSTEER_HAVE_AVX2)
extern const KernelTable kAvx2Table;
#endif
#if defined(PROMPTSTEER_HAVE_NEON)
extern const KernelTable kNeonTable;
#endif
}  // namespace detail

std::string_view to_string(Isa isa) noexcept {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
        case Isa::neon: return "neon";
    }
    return "unknown";
}

const KernelTable* avx2_kernels() noexcept {
#if defined(PROMPTSTEER_HAVE_AVX2)
    static const bool supported =
        __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return supported ? &detail::kAvx2Table : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable* neon_kernels() noexcept {
#if defined(PROMPTSTEER_HAVE_NEON)
    // Advanced SIMD is mandatory on AArch64.
    return &detail::kNeonTable;
#else
    return nullptr;
#endif
}

namespace {

const KernelTable* lookup(Isa isa) noexcept {
    switch (isa) {
        case Isa::scalar: return &scalar_kernels();
        case Isa::avx2: return avx2_kernels();
        case Isa::neon: return neon_kernels();
    }
    return nullptr;
}

const KernelTable* initial_table() noexcept {
    if (const char* env = std::getenv("PROMPTSTEER_SIMD")) {
        const std::string want(env);
        if (want == "scalar") return &scalar_kernels();
        if (want == "avx2" && avx2_kernels()) return avx2_kernels();
        if (want == "neon" && neon_kernels()) return neon_kernels();
    }
    if (const auto* t = avx2_kernels()) return t;
    if (const auto* t = neon_kernels()) return t;
    return &scalar_kernels();
}

std::atomic<const KernelTable*>& slot() noexcept {
    static std::atomic<const KernelTable*> table{initial_table()};
    return table;
}

}  // namespace

const KernelTable& active() noexcept { return *slot().load(std::memory_order_acquire); }

bool select(Isa isa) noexcept {
    const KernelTable* t = lookup(isa);
    if (t == nullptr) return false;
    slot().store(t, std::memory_order_release);
    return true;
}

}  // namespace promptsteer::simd
