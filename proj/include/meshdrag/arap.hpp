#pragma once

#include "meshdrag/mesh.hpp"

#include <Eigen/Core>

#include <vector>

namespace meshdrag {

struct ArapNeighbor {
    int vertex;
    double weight;  // cotangent weight, symmetric in the pair
};

/// Per-vertex one-ring with cotangent weights (from the rest pose) and the
/// current local rotation estimates.
struct ArapState {
    std::vector<std::vector<ArapNeighbor>> neighbors;
    std::vector<Eigen::Matrix3d> rotations;
};

/// One-rings and weights from `mesh.rest_vertices()`; rotations start at identity.
ArapState make_arap_state(const TriMesh& mesh);

/// Closed-form best rotation per vertex from the weighted covariance of
/// rest vs. deformed one-ring edges (SVD with reflection correction).
ArapState fit_rotations(const TriMesh& mesh, const Positions& deformed, ArapState state);

/// Rotation R minimising sum_k w_k |d_k - R r_k|^2 for covariance
/// S = sum_k w_k r_k d_k^T.
Eigen::Matrix3d best_rotation(const Eigen::Matrix3d& covariance);

double arap_energy(const TriMesh& mesh, const Positions& deformed, const ArapState& state);

/// dE/d(deformed) with the state's rotations held fixed.
Positions arap_gradient(const TriMesh& mesh, const Positions& deformed, const ArapState& state);

}  // namespace meshdrag
