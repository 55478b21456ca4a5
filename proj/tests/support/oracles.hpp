#pragma once
// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the library's numerical code.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace meshdrag::testing {

/// Edges of a synthetic one-ring: rest edge vectors r_k, deformed d_k, weights w_k.
struct OneRing {
    std::vector<Eigen::Vector3d> rest;
    std::vector<Eigen::Vector3d> deformed;
    std::vector<double> weights;

    Eigen::Matrix3d covariance() const {
        Eigen::Matrix3d s = Eigen::Matrix3d::Zero();
        for (std::size_t k = 0; k < rest.size(); ++k) s += weights[k] * rest[k] * deformed[k].transpose();
        return s;
    }

    double energy(const Eigen::Matrix3d& r) const {
        double e = 0.0;
        for (std::size_t k = 0; k < rest.size(); ++k) e += weights[k] * (deformed[k] - r * rest[k]).squaredNorm();
        return e;
    }
};

/// Ring of 5 to 8 neighbours around a vertex, deformed by a random rotation,
/// an anisotropic stretch and per-edge noise.
inline OneRing random_one_ring(std::mt19937& gen) {
    std::uniform_int_distribution<int> count(5, 8);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> w(0.05, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    const Eigen::Matrix3d rot =
        Eigen::Quaterniond(n(gen), n(gen), n(gen), n(gen)).normalized().toRotationMatrix();
    const Eigen::Vector3d stretch(1.0 + 0.3 * u(gen), 1.0 + 0.3 * u(gen), 1.0 + 0.3 * u(gen));
    OneRing ring;
    const int k = count(gen);
    for (int i = 0; i < k; ++i) {
        const double phi = 2.0 * std::numbers::pi * i / k + 0.2 * u(gen);
        const Eigen::Vector3d r(std::cos(phi), std::sin(phi), 0.3 * u(gen));
        ring.rest.push_back(r);
        ring.deformed.push_back(rot * stretch.asDiagonal() * r + 0.05 * Eigen::Vector3d(u(gen), u(gen), u(gen)));
        ring.weights.push_back(w(gen));
    }
    return ring;
}

/// Lowest one-ring energy over a ZYZ Euler grid with `step_deg` spacing.
/// The energy is affine in R: E(R) = sum w (|d|^2 + |r|^2) - 2 tr(R S), so the
/// grid scan only needs tr(R S).
inline double grid_search_energy(const OneRing& ring, double step_deg) {
    const Eigen::Matrix3d s = ring.covariance();
    double constant = 0.0;
    for (std::size_t k = 0; k < ring.rest.size(); ++k)
        constant += ring.weights[k] * (ring.deformed[k].squaredNorm() + ring.rest[k].squaredNorm());
    const double step = step_deg * std::numbers::pi / 180.0;
    const int n_full = static_cast<int>(std::lround(360.0 / step_deg));
    const int n_half = static_cast<int>(std::lround(180.0 / step_deg));
    double best = -1e300;
    for (int i = 0; i < n_full; ++i) {
        const Eigen::Matrix3d ra = Eigen::AngleAxisd(i * step, Eigen::Vector3d::UnitZ()).toRotationMatrix();
        for (int j = 0; j <= n_half; ++j) {
            const Eigen::Matrix3d rab = ra * Eigen::AngleAxisd(j * step, Eigen::Vector3d::UnitY()).toRotationMatrix();
            for (int l = 0; l < n_full; ++l) {
                const double c = std::cos(l * step), sn = std::sin(l * step);
                Eigen::Matrix3d rc;
                rc << c, -sn, 0, sn, c, 0, 0, 0, 1;
                best = std::max(best, (rab * rc * s).trace());
            }
        }
    }
    return constant - 2.0 * best;
}

/// Adan on a flat vector, written out element by element with a
/// step counter k starting at 1 and no weight decay:
///   d_k = g_k - g_{k-1}            (d_1 = 0)
///   m_k = b1 m_{k-1} + (1-b1) g_k
///   v_k = b2 v_{k-1} + (1-b2) d_k
///   n_k = b3 n_{k-1} + (1-b3) (g_k + b2 d_k)^2
///   eta = lr / (sqrt(n_k / (1 - b3^k)) + eps)
///   x_k = x_{k-1} - eta (m_k / (1 - b1^k) + b2 v_k / (1 - b2^k))
struct AdanReference {
    double b1 = 0.98, b2 = 0.92, b3 = 0.99, lr = 0.005, eps = 1e-8;
    std::vector<double> m, v, n, prev;
    int k = 0;

    explicit AdanReference(std::size_t size) : m(size, 0.0), v(size, 0.0), n(size, 0.0), prev(size, 0.0) {}

    void step(const std::vector<double>& g, std::vector<double>& x) {
        ++k;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = k == 1 ? 0.0 : g[i] - prev[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * d;
            const double u = g[i] + b2 * d;
            n[i] = b3 * n[i] + (1.0 - b3) * u * u;
            const double eta = lr / (std::sqrt(n[i] / (1.0 - std::pow(b3, k))) + eps);
            x[i] -= eta * (m[i] / (1.0 - std::pow(b1, k)) + b2 * v[i] / (1.0 - std::pow(b2, k)));
            prev[i] = g[i];
        }
    }
};

}  // namespace meshdrag::testing
