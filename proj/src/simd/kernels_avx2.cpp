// Compiled with -mavx2 (no FMA); only reached after a runtime CPU check.
#include "meshdrag/simd/kernels.hpp"

#include <immintrin.h>

#include <cmath>
#include <cstddef>

namespace meshdrag::simd::avx2 {

namespace {
constexpr std::size_t kLanes = 4;
}

void adan_update(const AdanCoefficients& c, const AdanBuffers& buf, std::span<const double> grad) {
    const std::size_t size = grad.size();
    const __m256d b1 = _mm256_set1_pd(c.beta1);
    const __m256d b2 = _mm256_set1_pd(c.beta2);
    const __m256d b3 = _mm256_set1_pd(c.beta3);
    const __m256d c1 = _mm256_set1_pd(1.0 - c.beta1);
    const __m256d c2 = _mm256_set1_pd(1.0 - c.beta2);
    const __m256d c3 = _mm256_set1_pd(1.0 - c.beta3);
    const __m256d s1 = _mm256_set1_pd(c.step1);
    const __m256d s2 = _mm256_set1_pd(c.step2);
    const __m256d bias3 = _mm256_set1_pd(c.bias3_sqrt);
    const __m256d decay = _mm256_set1_pd(c.decay);
    const __m256d eps = _mm256_set1_pd(c.eps);

    std::size_t i = 0;
    for (; i + kLanes <= size; i += kLanes) {
        const __m256d g = _mm256_loadu_pd(grad.data() + i);
        const __m256d diff = c.first_step ? _mm256_setzero_pd()
                                          : _mm256_sub_pd(g, _mm256_loadu_pd(buf.prev_grad.data() + i));
        const __m256d m = _mm256_add_pd(_mm256_mul_pd(_mm256_loadu_pd(buf.m.data() + i), b1), _mm256_mul_pd(g, c1));
        const __m256d v = _mm256_add_pd(_mm256_mul_pd(_mm256_loadu_pd(buf.v.data() + i), b2), _mm256_mul_pd(diff, c2));
        const __m256d u = _mm256_add_pd(g, _mm256_mul_pd(diff, b2));
        const __m256d n = _mm256_add_pd(_mm256_mul_pd(_mm256_loadu_pd(buf.n.data() + i), b3),
                                        _mm256_mul_pd(_mm256_mul_pd(u, u), c3));
        const __m256d denom = _mm256_add_pd(_mm256_div_pd(_mm256_sqrt_pd(n), bias3), eps);
        __m256d p = _mm256_mul_pd(_mm256_loadu_pd(buf.param.data() + i), decay);
        p = _mm256_sub_pd(p, _mm256_mul_pd(s1, _mm256_div_pd(m, denom)));
        p = _mm256_sub_pd(p, _mm256_mul_pd(s2, _mm256_div_pd(v, denom)));
        _mm256_storeu_pd(buf.m.data() + i, m);
        _mm256_storeu_pd(buf.v.data() + i, v);
        _mm256_storeu_pd(buf.n.data() + i, n);
        _mm256_storeu_pd(buf.param.data() + i, p);
        _mm256_storeu_pd(buf.prev_grad.data() + i, g);
    }
    if (i < size) {
        const AdanBuffers tail{buf.param.subspan(i), buf.prev_grad.subspan(i), buf.m.subspan(i),
                               buf.v.subspan(i), buf.n.subspan(i)};
        scalar::adan_update(c, tail, grad.subspan(i));
    }
}

void residual(std::span<const double> x, std::span<const double> target, std::span<double> out) {
    const __m256d two = _mm256_set1_pd(2.0);
    std::size_t i = 0;
    for (; i + kLanes <= x.size(); i += kLanes) {
        const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x.data() + i), _mm256_loadu_pd(target.data() + i));
        _mm256_storeu_pd(out.data() + i, _mm256_mul_pd(two, d));
    }
    scalar::residual(x.subspan(i), target.subspan(i), out.subspan(i));
}

void residual_difference(std::span<const double> edit, std::span<const double> ref,
                         std::span<const double> target, std::span<double> out) {
    const __m256d two = _mm256_set1_pd(2.0);
    std::size_t i = 0;
    for (; i + kLanes <= edit.size(); i += kLanes) {
        const __m256d t = _mm256_loadu_pd(target.data() + i);
        const __m256d de = _mm256_mul_pd(two, _mm256_sub_pd(_mm256_loadu_pd(edit.data() + i), t));
        const __m256d dr = _mm256_mul_pd(two, _mm256_sub_pd(_mm256_loadu_pd(ref.data() + i), t));
        _mm256_storeu_pd(out.data() + i, _mm256_sub_pd(de, dr));
    }
    scalar::residual_difference(edit.subspan(i), ref.subspan(i), target.subspan(i), out.subspan(i));
}

void scale(std::span<double> x, double s) {
    const __m256d vs = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + kLanes <= x.size(); i += kLanes)
        _mm256_storeu_pd(x.data() + i, _mm256_mul_pd(_mm256_loadu_pd(x.data() + i), vs));
    scalar::scale(x.subspan(i), s);
}

double squared_norm(std::span<const double> x) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + kLanes <= x.size(); i += kLanes) {
        const __m256d v = _mm256_loadu_pd(x.data() + i);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(v, v));
    }
    alignas(32) double lanes[kLanes];
    _mm256_store_pd(lanes, acc);
    return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + scalar::squared_norm(x.subspan(i));
}

}  // namespace meshdrag::simd::avx2
