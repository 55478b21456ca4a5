#pragma once

// Elementwise inner loops of the optimizer and the mock guidance.
//
// Every kernel has a scalar reference in `scalar::` and vector variants
// (`avx2::` on x86-64, `neon::` on AArch64) that perform the same IEEE
// operations in the same order per element, so results are bit-identical to
// the reference except for the reductions (squared_norm), which differ only
// by summation order. The free functions dispatch to the best backend the
// CPU supports; MESHDRAG_SIMD=scalar|avx2|neon overrides the choice.

#include <span>

namespace meshdrag::simd {

enum class Backend { Scalar, Avx2, Neon };

const char* backend_name(Backend b) noexcept;
bool backend_available(Backend b) noexcept;
Backend active_backend() noexcept;
/// Throws std::invalid_argument if `b` is not available on this CPU.
void set_backend(Backend b);

/// Per-step Adan coefficients (see optimizer.hpp for the update rule).
struct AdanCoefficients {
    double beta1;
    double beta2;
    double beta3;
    double step1;       // lr / (1 - beta1^k)
    double step2;       // lr * beta2 / (1 - beta2^k)
    double bias3_sqrt;  // sqrt(1 - beta3^k)
    double decay;       // 1 - lr * weight_decay
    double eps;
    bool first_step;    // gradient difference is zero on the first step
};

struct AdanBuffers {
    std::span<double> param;
    std::span<double> prev_grad;
    std::span<double> m;  // first moment
    std::span<double> v;  // gradient-difference moment
    std::span<double> n;  // second moment
};

void adan_update(const AdanCoefficients& c, const AdanBuffers& buf, std::span<const double> grad);
/// out = 2 (x - target)
void residual(std::span<const double> x, std::span<const double> target, std::span<double> out);
/// out = 2 (edit - target) - 2 (ref - target)
void residual_difference(std::span<const double> edit, std::span<const double> ref,
                         std::span<const double> target, std::span<double> out);
void scale(std::span<double> x, double s);
double squared_norm(std::span<const double> x);

#define MESHDRAG_SIMD_DECLARE_BACKEND(ns)                                                          \
    namespace ns {                                                                                 \
    void adan_update(const AdanCoefficients& c, const AdanBuffers& buf, std::span<const double> grad); \
    void residual(std::span<const double> x, std::span<const double> target, std::span<double> out); \
    void residual_difference(std::span<const double> edit, std::span<const double> ref,            \
                             std::span<const double> target, std::span<double> out);               \
    void scale(std::span<double> x, double s);                                                     \
    double squared_norm(std::span<const double> x);                                                \
    }

MESHDRAG_SIMD_DECLARE_BACKEND(scalar)
#if defined(__x86_64__) || defined(_M_X64)
#define MESHDRAG_HAVE_AVX2_KERNELS 1
MESHDRAG_SIMD_DECLARE_BACKEND(avx2)
#endif
#if defined(__aarch64__) && defined(__ARM_NEON)
#define MESHDRAG_HAVE_NEON_KERNELS 1
MESHDRAG_SIMD_DECLARE_BACKEND(neon)
#endif

#undef MESHDRAG_SIMD_DECLARE_BACKEND

}  // namespace meshdrag::simd
