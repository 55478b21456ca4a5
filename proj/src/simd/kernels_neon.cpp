#include "meshdrag/simd/kernels.hpp"

#if defined(MESHDRAG_HAVE_NEON_KERNELS)

#include <arm_neon.h>

#include <cstddef>

namespace meshdrag::simd::neon {

namespace {
constexpr std::size_t kLanes = 2;
}

// vmulq/vaddq only (no vfmaq) to match the scalar rounding.
void adan_update(const AdanCoefficients& c, const AdanBuffers& buf, std::span<const double> grad) {
    const std::size_t size = grad.size();
    const float64x2_t b1 = vdupq_n_f64(c.beta1);
    const float64x2_t b2 = vdupq_n_f64(c.beta2);
    const float64x2_t b3 = vdupq_n_f64(c.beta3);
    const float64x2_t c1 = vdupq_n_f64(1.0 - c.beta1);
    const float64x2_t c2 = vdupq_n_f64(1.0 - c.beta2);
    const float64x2_t c3 = vdupq_n_f64(1.0 - c.beta3);
    const float64x2_t s1 = vdupq_n_f64(c.step1);
    const float64x2_t s2 = vdupq_n_f64(c.step2);
    const float64x2_t bias3 = vdupq_n_f64(c.bias3_sqrt);
    const float64x2_t decay = vdupq_n_f64(c.decay);
    const float64x2_t eps = vdupq_n_f64(c.eps);

    std::size_t i = 0;
    for (; i + kLanes <= size; i += kLanes) {
        const float64x2_t g = vld1q_f64(grad.data() + i);
        const float64x2_t diff = c.first_step ? vdupq_n_f64(0.0) : vsubq_f64(g, vld1q_f64(buf.prev_grad.data() + i));
        const float64x2_t m = vaddq_f64(vmulq_f64(vld1q_f64(buf.m.data() + i), b1), vmulq_f64(g, c1));
        const float64x2_t v = vaddq_f64(vmulq_f64(vld1q_f64(buf.v.data() + i), b2), vmulq_f64(diff, c2));
        const float64x2_t u = vaddq_f64(g, vmulq_f64(diff, b2));
        const float64x2_t n = vaddq_f64(vmulq_f64(vld1q_f64(buf.n.data() + i), b3), vmulq_f64(vmulq_f64(u, u), c3));
        const float64x2_t denom = vaddq_f64(vdivq_f64(vsqrtq_f64(n), bias3), eps);
        float64x2_t p = vmulq_f64(vld1q_f64(buf.param.data() + i), decay);
        p = vsubq_f64(p, vmulq_f64(s1, vdivq_f64(m, denom)));
        p = vsubq_f64(p, vmulq_f64(s2, vdivq_f64(v, denom)));
        vst1q_f64(buf.m.data() + i, m);
        vst1q_f64(buf.v.data() + i, v);
        vst1q_f64(buf.n.data() + i, n);
        vst1q_f64(buf.param.data() + i, p);
        vst1q_f64(buf.prev_grad.data() + i, g);
    }
    if (i < size) {
        const AdanBuffers tail{buf.param.subspan(i), buf.prev_grad.subspan(i), buf.m.subspan(i),
                               buf.v.subspan(i), buf.n.subspan(i)};
        scalar::adan_update(c, tail, grad.subspan(i));
    }
}

void residual(std::span<const double> x, std::span<const double> target, std::span<double> out) {
    const float64x2_t two = vdupq_n_f64(2.0);
    std::size_t i = 0;
    for (; i + kLanes <= x.size(); i += kLanes)
        vst1q_f64(out.data() + i, vmulq_f64(two, vsubq_f64(vld1q_f64(x.data() + i), vld1q_f64(target.data() + i))));
    scalar::residual(x.subspan(i), target.subspan(i), out.subspan(i));
}

void residual_difference(std::span<const double> edit, std::span<const double> ref,
                         std::span<const double> target, std::span<double> out) {
    const float64x2_t two = vdupq_n_f64(2.0);
    std::size_t i = 0;
    for (; i + kLanes <= edit.size(); i += kLanes) {
        const float64x2_t t = vld1q_f64(target.data() + i);
        const float64x2_t de = vmulq_f64(two, vsubq_f64(vld1q_f64(edit.data() + i), t));
        const float64x2_t dr = vmulq_f64(two, vsubq_f64(vld1q_f64(ref.data() + i), t));
        vst1q_f64(out.data() + i, vsubq_f64(de, dr));
    }
    scalar::residual_difference(edit.subspan(i), ref.subspan(i), target.subspan(i), out.subspan(i));
}

void scale(std::span<double> x, double s) {
    const float64x2_t vs = vdupq_n_f64(s);
    std::size_t i = 0;
    for (; i + kLanes <= x.size(); i += kLanes) vst1q_f64(x.data() + i, vmulq_f64(vld1q_f64(x.data() + i), vs));
    scalar::scale(x.subspan(i), s);
}

double squared_norm(std::span<const double> x) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + kLanes <= x.size(); i += kLanes) {
        const float64x2_t v = vld1q_f64(x.data() + i);
        acc = vaddq_f64(acc, vmulq_f64(v, v));
    }
    return (vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1)) + scalar::squared_norm(x.subspan(i));
}

}  // namespace meshdrag::simd::neon

#endif
