#include "meshdrag/simd/kernels.hpp"

#include <cmath>
#include <cstddef>

namespace meshdrag::simd::scalar {

void adan_update(const AdanCoefficients& c, const AdanBuffers& buf, std::span<const double> grad) {
    const double c1 = 1.0 - c.beta1;
    const double c2 = 1.0 - c.beta2;
    const double c3 = 1.0 - c.beta3;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        const double g = grad[i];
        const double diff = c.first_step ? 0.0 : g - buf.prev_grad[i];
        const double m = buf.m[i] * c.beta1 + g * c1;
        const double v = buf.v[i] * c.beta2 + diff * c2;
        const double u = g + diff * c.beta2;
        const double n = buf.n[i] * c.beta3 + (u * u) * c3;
        const double denom = std::sqrt(n) / c.bias3_sqrt + c.eps;
        double p = buf.param[i] * c.decay;
        p = p - c.step1 * (m / denom);
        p = p - c.step2 * (v / denom);
        buf.m[i] = m;
        buf.v[i] = v;
        buf.n[i] = n;
        buf.param[i] = p;
        buf.prev_grad[i] = g;
    }
}

void residual(std::span<const double> x, std::span<const double> target, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = 2.0 * (x[i] - target[i]);
}

void residual_difference(std::span<const double> edit, std::span<const double> ref,
                         std::span<const double> target, std::span<double> out) {
    for (std::size_t i = 0; i < edit.size(); ++i)
        out[i] = 2.0 * (edit[i] - target[i]) - 2.0 * (ref[i] - target[i]);
}

void scale(std::span<double> x, double s) {
    for (double& v : x) v *= s;
}

double squared_norm(std::span<const double> x) {
    double acc = 0.0;
    for (const double v : x) acc += v * v;
    return acc;
}

}  // namespace meshdrag::simd::scalar
