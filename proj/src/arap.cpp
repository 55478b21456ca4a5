#include "meshdrag/arap.hpp"

#include "meshdrag/operators.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <stdexcept>

namespace meshdrag {

ArapState make_arap_state(const TriMesh& mesh) {
    ArapState state;
    const auto nv = static_cast<std::size_t>(mesh.vertex_count());
    state.neighbors.resize(nv);
    for (const auto& e : cotangent_edges(mesh.rest_vertices(), mesh.faces())) {
        state.neighbors[static_cast<std::size_t>(e.i)].push_back({e.j, e.weight});
        state.neighbors[static_cast<std::size_t>(e.j)].push_back({e.i, e.weight});
    }
    state.rotations.assign(nv, Eigen::Matrix3d::Identity());
    return state;
}

Eigen::Matrix3d best_rotation(const Eigen::Matrix3d& covariance) {
    const Eigen::JacobiSVD<Eigen::Matrix3d> svd(covariance, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Matrix3d& u = svd.matrixU();
    const Eigen::Matrix3d& v = svd.matrixV();
    Eigen::Vector3d d(1.0, 1.0, (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0);
    return v * d.asDiagonal() * u.transpose();
}

ArapState fit_rotations(const TriMesh& mesh, const Positions& deformed, ArapState state) {
    if (deformed.rows() != mesh.vertex_count())
        throw std::invalid_argument("fit_rotations: deformed vertex count mismatch");
    const Positions& rest = mesh.rest_vertices();
    for (std::size_t i = 0; i < state.neighbors.size(); ++i) {
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        const auto vi = static_cast<long>(i);
        bool undeformed = true;
        for (const auto& [j, w] : state.neighbors[i]) {
            const Eigen::Vector3d r = rest.row(vi) - rest.row(j);
            const Eigen::Vector3d d = deformed.row(vi) - deformed.row(j);
            undeformed = undeformed && r == d;
            cov += w * r * d.transpose();
        }
        // The SVD of an exactly symmetric covariance is only identity up to round-off.
        state.rotations[i] = undeformed ? Eigen::Matrix3d::Identity() : best_rotation(cov);
    }
    return state;
}

double arap_energy(const TriMesh& mesh, const Positions& deformed, const ArapState& state) {
    const Positions& rest = mesh.rest_vertices();
    double energy = 0.0;
    for (std::size_t i = 0; i < state.neighbors.size(); ++i) {
        const auto vi = static_cast<long>(i);
        for (const auto& [j, w] : state.neighbors[i]) {
            const Eigen::Vector3d r = rest.row(vi) - rest.row(j);
            const Eigen::Vector3d d = deformed.row(vi) - deformed.row(j);
            energy += w * (d - state.rotations[i] * r).squaredNorm();
        }
    }
    return energy;
}

Positions arap_gradient(const TriMesh& mesh, const Positions& deformed, const ArapState& state) {
    const Positions& rest = mesh.rest_vertices();
    Positions grad = Positions::Zero(deformed.rows(), 3);
    for (std::size_t i = 0; i < state.neighbors.size(); ++i) {
        const auto vi = static_cast<long>(i);
        for (const auto& [j, w] : state.neighbors[i]) {
            const Eigen::Vector3d r = rest.row(vi) - rest.row(j);
            const Eigen::Vector3d d = deformed.row(vi) - deformed.row(j);
            const Eigen::Vector3d res = 2.0 * w * (d - state.rotations[i] * r);
            grad.row(vi) += res.transpose();
            grad.row(j) -= res.transpose();
        }
    }
    return grad;
}

}  // namespace meshdrag
