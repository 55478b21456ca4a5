#pragma once

// Gradient-domain encoding of a mesh: per-face Jacobians and the Poisson
// solve that maps a Jacobian field back to vertex positions.

#include "meshdrag/mesh.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

namespace meshdrag {

using SparseMatrix = Eigen::SparseMatrix<double>;
using RowMajorMatrix3d = Eigen::Matrix<double, 3, 3, Eigen::RowMajor>;

/// One 3x3 matrix per face, stored row-major and contiguous (9 doubles per
/// face). Row a of a face matrix is the surface gradient of coordinate a.
class JacobianField {
public:
    JacobianField() = default;
    explicit JacobianField(int face_count) : data_(static_cast<std::size_t>(face_count) * 9, 0.0) {}

    int face_count() const noexcept { return static_cast<int>(data_.size() / 9); }

    Eigen::Map<RowMajorMatrix3d> face(int f) { return Eigen::Map<RowMajorMatrix3d>(data_.data() + 9 * f); }
    Eigen::Map<const RowMajorMatrix3d> face(int f) const {
        return Eigen::Map<const RowMajorMatrix3d>(data_.data() + 9 * f);
    }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    bool all_finite() const;

    JacobianField& operator*=(double s);
    friend JacobianField operator*(double s, JacobianField field) { return field *= s; }
    /// Left-multiplies every face matrix by `r`.
    friend JacobianField operator*(const Eigen::Matrix3d& r, const JacobianField& field);

private:
    std::vector<double> data_;
};

class FactorizationError : public std::runtime_error {
public:
    FactorizationError(const std::string& what, long pivot) : std::runtime_error(what), pivot_(pivot) {}
    long pivot() const noexcept { return pivot_; }

private:
    long pivot_;
};

/// Prefactored operators built once from the rest pose.
///
/// Gauge: vertices listed as pinned (the complement of a deformation mask)
/// are held at their rest positions. A connected component without pinned
/// vertices is solved in its mean-zero subspace and translated so its
/// centroid matches the rest centroid of that component.
class MeshOperators {
public:
    /// 3F x V; rows 3f..3f+2 give the x/y/z gradient of a vertex function on face f.
    const SparseMatrix& grad() const noexcept { return grad_; }
    /// V x V positive semi-definite cotangent Laplacian, w_ij = (cot a + cot b) / 2.
    const SparseMatrix& laplacian() const noexcept { return laplacian_; }
    /// Face areas (the diagonal of the per-face mass matrix).
    const Eigen::VectorXd& face_areas() const noexcept { return areas_; }

    int vertex_count() const noexcept { return static_cast<int>(laplacian_.rows()); }
    int face_count() const noexcept { return static_cast<int>(areas_.size()); }
    bool is_pinned(int v) const { return pinned_[static_cast<std::size_t>(v)] != 0; }

    /// Linear map M -> vertices, without the constant gauge/pin offset.
    Positions solve_linear(const JacobianField& field) const;
    /// Transpose of solve_linear.
    JacobianField solve_linear_transpose(const Positions& grad_vertices) const;
    const Positions& solve_offset() const noexcept { return offset_; }

private:
    friend MeshOperators build_operators(const TriMesh& mesh, const DeformationMask* mask);

    Eigen::MatrixXd stacked_rhs(const JacobianField& field) const;
    Eigen::MatrixXd solve_free(const Eigen::MatrixXd& rhs) const;

    SparseMatrix grad_;
    SparseMatrix laplacian_;
    Eigen::VectorXd areas_;

    std::vector<unsigned char> pinned_;        // Dirichlet pins (rest position)
    std::vector<int> component_;               // per-vertex component id
    std::vector<unsigned char> gauge_component_;  // component solved with centroid gauge
    std::vector<int> free_index_;              // vertex -> row in reduced system, or -1
    std::vector<int> free_vertices_;
    SparseMatrix laplacian_free_;
    std::shared_ptr<Eigen::SimplicialLDLT<SparseMatrix>> solver_;
    Positions offset_;
};

/// Builds operators from `mesh.rest_vertices()`. With a mask that does not
/// cover every vertex, unmasked vertices are pinned at rest.
/// Throws FactorizationError on a non-positive pivot.
MeshOperators build_operators(const TriMesh& mesh, const DeformationMask* mask = nullptr);

JacobianField extract_jacobians(const MeshOperators& ops, const Positions& vertices);

/// Least-squares vertices whose Jacobians best match `field`, under the gauge.
Positions poisson_solve(const MeshOperators& ops, const JacobianField& field);

/// dLoss/dField given dLoss/dVertices of poisson_solve's output.
JacobianField poisson_adjoint(const MeshOperators& ops, const Positions& grad_vertices);

/// Cotangent weight (cot a + cot b)/2 of every undirected edge, keyed by
/// (min, max) vertex pair; shared by the Laplacian and the ARAP energy.
struct CotanEdge {
    int i;
    int j;
    double weight;
};
std::vector<CotanEdge> cotangent_edges(const Positions& rest, const Faces& faces);

}  // namespace meshdrag
