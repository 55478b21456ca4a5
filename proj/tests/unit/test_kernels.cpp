#include "meshdrag/simd/kernels.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

using namespace meshdrag::simd;

namespace {

struct KernelSet {
    const char* name;
    void (*adan_update)(const AdanCoefficients&, const AdanBuffers&, std::span<const double>);
    void (*residual)(std::span<const double>, std::span<const double>, std::span<double>);
    void (*residual_difference)(std::span<const double>, std::span<const double>, std::span<const double>,
                                std::span<double>);
    void (*scale)(std::span<double>, double);
    double (*squared_norm)(std::span<const double>);
};

std::vector<KernelSet> vector_backends() {
    std::vector<KernelSet> out;
#ifdef MESHDRAG_HAVE_AVX2_KERNELS
    if (backend_available(Backend::Avx2))
        out.push_back({"avx2", avx2::adan_update, avx2::residual, avx2::residual_difference, avx2::scale,
                       avx2::squared_norm});
#endif
#ifdef MESHDRAG_HAVE_NEON_KERNELS
    if (backend_available(Backend::Neon))
        out.push_back({"neon", neon::adan_update, neon::residual, neon::residual_difference, neon::scale,
                       neon::squared_norm});
#endif
    return out;
}

std::vector<double> random_vector(std::size_t n, std::mt19937& gen) {
    std::normal_distribution<double> d(0.0, 3.0);
    std::vector<double> v(n);
    for (double& x : v) x = d(gen);
    return v;
}

// Lengths around the vector width exercise the remainder loops.
const std::size_t kLengths[] = {0, 1, 3, 4, 5, 7, 8, 9, 17, 1001};

}  // namespace

TEST_CASE("vector kernels match the scalar reference") {
    const auto backends = vector_backends();
    if (backends.empty()) MESSAGE("no vector backend on this CPU; only the scalar path is exercised");
    std::mt19937 gen(11);
    for (const auto& k : backends) {
        CAPTURE(k.name);
        for (const std::size_t n : kLengths) {
            CAPTURE(n);
            const auto x = random_vector(n, gen), t = random_vector(n, gen), r = random_vector(n, gen);
            std::vector<double> want(n), got(n);

            scalar::residual(x, t, want);
            k.residual(x, t, got);
            CHECK(want == got);

            scalar::residual_difference(x, r, t, want);
            k.residual_difference(x, r, t, got);
            CHECK(want == got);

            want = x;
            got = x;
            scalar::scale(want, -0.37);
            k.scale(got, -0.37);
            CHECK(want == got);

            const double a = scalar::squared_norm(x), b = k.squared_norm(x);
            CHECK(std::abs(a - b) <= 1e-13 * std::max(1.0, a));
        }
    }
}

TEST_CASE("vector Adan update matches the scalar reference bit for bit") {
    const auto backends = vector_backends();
    std::mt19937 gen(12);
    for (const auto& k : backends) {
        CAPTURE(k.name);
        for (const std::size_t n : kLengths) {
            CAPTURE(n);
            auto p1 = random_vector(n, gen), g1 = random_vector(n, gen), m1 = random_vector(n, gen),
                 v1 = random_vector(n, gen), n1 = random_vector(n, gen);
            for (double& e : n1) e = std::abs(e);
            auto p2 = p1, g2 = g1, m2 = m1, v2 = v1, n2 = n1;
            for (int step = 1; step <= 3; ++step) {
                const AdanCoefficients c{0.98, 0.92, 0.99, 0.005 / (1 - std::pow(0.98, step)),
                                         0.005 * 0.92 / (1 - std::pow(0.92, step)),
                                         std::sqrt(1 - std::pow(0.99, step)), 1.0 - 0.005 * 0.01, 1e-8, step == 1};
                const auto grad = random_vector(n, gen);
                scalar::adan_update(c, {p1, g1, m1, v1, n1}, grad);
                k.adan_update(c, {p2, g2, m2, v2, n2}, grad);
                CHECK(p1 == p2);
                CHECK(g1 == g2);
                CHECK(m1 == m2);
                CHECK(v1 == v2);
                CHECK(n1 == n2);
            }
        }
    }
}

TEST_CASE("scalar kernels compute the documented formulas") {
    const std::vector<double> x{1.0, -2.0, 0.5}, t{0.5, 0.5, 0.5}, r{1.0, 1.0, 1.0};
    std::vector<double> out(3);
    scalar::residual(x, t, out);
    CHECK(out == std::vector<double>{1.0, -5.0, 0.0});
    scalar::residual_difference(x, r, t, out);
    CHECK(out == std::vector<double>{0.0, -6.0, -1.0});
    CHECK(scalar::squared_norm(x) == 5.25);
}

TEST_CASE("backend selection") {
    CHECK(backend_available(Backend::Scalar));
    const Backend original = active_backend();
    CHECK(backend_available(original));
    set_backend(Backend::Scalar);
    CHECK(active_backend() == Backend::Scalar);
    CHECK(std::string(backend_name(Backend::Scalar)) == "scalar");

    // Dispatched calls agree with the backend they were routed to.
    std::mt19937 gen(13);
    const auto x = random_vector(33, gen);
    const double via_scalar = squared_norm(x);
    CHECK(via_scalar == scalar::squared_norm(x));
    for (const Backend b : {Backend::Avx2, Backend::Neon}) {
        if (backend_available(b)) {
            set_backend(b);
            CHECK(active_backend() == b);
            CHECK(std::abs(squared_norm(x) - via_scalar) <= 1e-13 * via_scalar);
        } else {
            CHECK_THROWS_AS(set_backend(b), std::invalid_argument);
        }
    }
    set_backend(original);
}
