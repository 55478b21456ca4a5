#include "meshdrag/simd/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <string_view>

namespace meshdrag::simd {

namespace {

struct KernelTable {
    decltype(&scalar::adan_update) adan_update;
    decltype(&scalar::residual) residual;
    decltype(&scalar::residual_difference) residual_difference;
    decltype(&scalar::scale) scale;
    decltype(&scalar::squared_norm) squared_norm;
};

constexpr KernelTable kScalar{scalar::adan_update, scalar::residual, scalar::residual_difference,
                              scalar::scale, scalar::squared_norm};
#if defined(MESHDRAG_HAVE_AVX2_KERNELS)
constexpr KernelTable kAvx2{avx2::adan_update, avx2::residual, avx2::residual_difference, avx2::scale,
                            avx2::squared_norm};
#endif
#if defined(MESHDRAG_HAVE_NEON_KERNELS)
constexpr KernelTable kNeon{neon::adan_update, neon::residual, neon::residual_difference, neon::scale,
                            neon::squared_norm};
#endif

const KernelTable& table_for(Backend b) {
    switch (b) {
#if defined(MESHDRAG_HAVE_AVX2_KERNELS)
        case Backend::Avx2: return kAvx2;
#endif
#if defined(MESHDRAG_HAVE_NEON_KERNELS)
        case Backend::Neon: return kNeon;
#endif
        default: return kScalar;
    }
}

Backend detect() noexcept {
    if (const char* env = std::getenv("MESHDRAG_SIMD")) {
        const std::string_view want(env);
        if (want == "scalar") return Backend::Scalar;
        if (want == "avx2" && backend_available(Backend::Avx2)) return Backend::Avx2;
        if (want == "neon" && backend_available(Backend::Neon)) return Backend::Neon;
    }
    if (backend_available(Backend::Avx2)) return Backend::Avx2;
    if (backend_available(Backend::Neon)) return Backend::Neon;
    return Backend::Scalar;
}

std::atomic<Backend>& current() {
    static std::atomic<Backend> backend{detect()};
    return backend;
}

const KernelTable& active() { return table_for(current().load(std::memory_order_relaxed)); }

}  // namespace

const char* backend_name(Backend b) noexcept {
    switch (b) {
        case Backend::Scalar: return "scalar";
        case Backend::Avx2: return "avx2";
        case Backend::Neon: return "neon";
    }
    return "unknown";
}

bool backend_available(Backend b) noexcept {
    switch (b) {
        case Backend::Scalar: return true;
        case Backend::Avx2:
#if defined(MESHDRAG_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
            return __builtin_cpu_supports("avx2");
#else
            return false;
#endif
        case Backend::Neon:
#if defined(MESHDRAG_HAVE_NEON_KERNELS)
            return true;  // mandatory on AArch64
#else
            return false;
#endif
    }
    return false;
}

Backend active_backend() noexcept { return current().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
    if (!backend_available(b))
        throw std::invalid_argument(std::string("SIMD backend not available: ") + backend_name(b));
    current().store(b, std::memory_order_relaxed);
}

void adan_update(const AdanCoefficients& c, const AdanBuffers& buf, std::span<const double> grad) {
    active().adan_update(c, buf, grad);
}
void residual(std::span<const double> x, std::span<const double> target, std::span<double> out) {
    active().residual(x, target, out);
}
void residual_difference(std::span<const double> edit, std::span<const double> ref,
                         std::span<const double> target, std::span<double> out) {
    active().residual_difference(edit, ref, target, out);
}
void scale(std::span<double> x, double s) { active().scale(x, s); }
double squared_norm(std::span<const double> x) { return active().squared_norm(x); }

}  // namespace meshdrag::simd
