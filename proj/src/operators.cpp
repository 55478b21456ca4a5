#include "meshdrag/operators.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace meshdrag {

bool JacobianField::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

JacobianField& JacobianField::operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
}

JacobianField operator*(const Eigen::Matrix3d& r, const JacobianField& field) {
    JacobianField out(field.face_count());
    for (int f = 0; f < field.face_count(); ++f) out.face(f) = r * field.face(f);
    return out;
}

std::vector<CotanEdge> cotangent_edges(const Positions& rest, const Faces& faces) {
    std::map<std::pair<int, int>, double> weights;
    for (long f = 0; f < faces.rows(); ++f) {
        for (int k = 0; k < 3; ++k) {
            const int o = faces(f, k);
            const int i = faces(f, (k + 1) % 3);
            const int j = faces(f, (k + 2) % 3);
            const Eigen::Vector3d u = rest.row(i) - rest.row(o);
            const Eigen::Vector3d v = rest.row(j) - rest.row(o);
            const double cot = u.dot(v) / u.cross(v).norm();
            weights[std::minmax(i, j)] += 0.5 * cot;
        }
    }
    std::vector<CotanEdge> edges;
    edges.reserve(weights.size());
    for (const auto& [key, w] : weights) edges.push_back({key.first, key.second, w});
    return edges;
}

namespace {

SparseMatrix build_gradient(const Positions& rest, const Faces& faces, Eigen::VectorXd& areas) {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(faces.rows()) * 9);
    areas.resize(faces.rows());
    for (long f = 0; f < faces.rows(); ++f) {
        const Eigen::Vector3d p[3] = {rest.row(faces(f, 0)), rest.row(faces(f, 1)), rest.row(faces(f, 2))};
        const Eigen::Vector3d cross = (p[1] - p[0]).cross(p[2] - p[0]);
        const double twice_area = cross.norm();
        const Eigen::Vector3d n = cross / twice_area;
        areas(f) = 0.5 * twice_area;
        for (int k = 0; k < 3; ++k) {
            // Gradient of the hat function of corner k: N x (opposite edge) / 2A.
            const Eigen::Vector3d g = n.cross(p[(k + 2) % 3] - p[(k + 1) % 3]) / twice_area;
            for (int axis = 0; axis < 3; ++axis)
                trips.emplace_back(static_cast<int>(3 * f + axis), faces(f, k), g(axis));
        }
    }
    SparseMatrix grad(3 * faces.rows(), rest.rows());
    grad.setFromTriplets(trips.begin(), trips.end());
    return grad;
}

}  // namespace

MeshOperators build_operators(const TriMesh& mesh, const DeformationMask* mask) {
    MeshOperators ops;
    const Positions& rest = mesh.rest_vertices();
    const Faces& faces = mesh.faces();
    const int nv = mesh.vertex_count();

    ops.grad_ = build_gradient(rest, faces, ops.areas_);

    std::vector<Eigen::Triplet<double>> trips;
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(nv);
    for (const auto& e : cotangent_edges(rest, faces)) {
        trips.emplace_back(e.i, e.j, -e.weight);
        trips.emplace_back(e.j, e.i, -e.weight);
        diag(e.i) += e.weight;
        diag(e.j) += e.weight;
    }
    for (int v = 0; v < nv; ++v) trips.emplace_back(v, v, diag(v));
    ops.laplacian_.resize(nv, nv);
    ops.laplacian_.setFromTriplets(trips.begin(), trips.end());

    int ncomp = 0;
    ops.component_ = vertex_components(nv, faces, &ncomp);
    ops.pinned_.assign(static_cast<std::size_t>(nv), 0);
    if (mask && !mask->covers_all())
        for (int v = 0; v < nv; ++v) ops.pinned_[static_cast<std::size_t>(v)] = mask->vertex_movable(v) ? 0 : 1;

    std::vector<unsigned char> comp_has_pin(static_cast<std::size_t>(ncomp), 0);
    for (int v = 0; v < nv; ++v)
        if (ops.pinned_[static_cast<std::size_t>(v)]) comp_has_pin[static_cast<std::size_t>(ops.component_[static_cast<std::size_t>(v)])] = 1;
    ops.gauge_component_.assign(static_cast<std::size_t>(ncomp), 0);
    std::vector<unsigned char> gauge_vertex(static_cast<std::size_t>(nv), 0);
    for (int v = 0; v < nv; ++v) {
        const auto c = static_cast<std::size_t>(ops.component_[static_cast<std::size_t>(v)]);
        if (!comp_has_pin[c]) {
            // Lowest-index vertex of a pin-free component anchors the solve.
            comp_has_pin[c] = 1;
            ops.gauge_component_[c] = 1;
            gauge_vertex[static_cast<std::size_t>(v)] = 1;
        }
    }

    ops.free_index_.assign(static_cast<std::size_t>(nv), -1);
    for (int v = 0; v < nv; ++v) {
        if (ops.pinned_[static_cast<std::size_t>(v)] || gauge_vertex[static_cast<std::size_t>(v)]) continue;
        ops.free_index_[static_cast<std::size_t>(v)] = static_cast<int>(ops.free_vertices_.size());
        ops.free_vertices_.push_back(v);
    }

    const int nf = static_cast<int>(ops.free_vertices_.size());
    std::vector<Eigen::Triplet<double>> free_trips;
    for (int k = 0; k < ops.laplacian_.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(ops.laplacian_, k); it; ++it) {
            const int r = ops.free_index_[static_cast<std::size_t>(it.row())];
            const int c = ops.free_index_[static_cast<std::size_t>(it.col())];
            if (r >= 0 && c >= 0) free_trips.emplace_back(r, c, it.value());
        }
    ops.laplacian_free_.resize(nf, nf);
    ops.laplacian_free_.setFromTriplets(free_trips.begin(), free_trips.end());

    ops.solver_ = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>();
    if (nf > 0) {
        ops.solver_->compute(ops.laplacian_free_);
        if (ops.solver_->info() != Eigen::Success)
            throw FactorizationError("Laplacian factorization failed", -1);
        const Eigen::VectorXd d = ops.solver_->vectorD();
        const double scale = d.cwiseAbs().maxCoeff();
        for (int k = 0; k < d.size(); ++k) {
            if (!(d(k) > 1e-13 * scale)) {
                const int vertex = ops.free_vertices_[static_cast<std::size_t>(ops.solver_->permutationPinv().indices()(k))];
                throw FactorizationError("Laplacian factorization hit non-positive pivot " +
                                             std::to_string(d(k)) + " at vertex " + std::to_string(vertex),
                                         vertex);
            }
        }
    }

    // Constant part of the solve: Dirichlet pins plus the propagated boundary
    // values, and rest centroids for gauge components.
    Eigen::MatrixXd pinned_values = Eigen::MatrixXd::Zero(nv, 3);
    for (int v = 0; v < nv; ++v)
        if (ops.pinned_[static_cast<std::size_t>(v)]) pinned_values.row(v) = rest.row(v);
    const Eigen::MatrixXd coupling = -(ops.laplacian_ * pinned_values);
    Eigen::MatrixXd x = ops.solve_free(coupling);
    for (int v = 0; v < nv; ++v)
        if (ops.pinned_[static_cast<std::size_t>(v)]) x.row(v) = rest.row(v);
    Eigen::MatrixXd centroid = Eigen::MatrixXd::Zero(ncomp, 3);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(ncomp);
    for (int v = 0; v < nv; ++v) {
        centroid.row(ops.component_[static_cast<std::size_t>(v)]) += rest.row(v);
        count(ops.component_[static_cast<std::size_t>(v)]) += 1.0;
    }
    for (int v = 0; v < nv; ++v) {
        const int c = ops.component_[static_cast<std::size_t>(v)];
        if (ops.gauge_component_[static_cast<std::size_t>(c)]) x.row(v) = centroid.row(c) / count(c);
    }
    ops.offset_ = x;
    return ops;
}

Eigen::MatrixXd MeshOperators::stacked_rhs(const JacobianField& field) const {
    const int nf = face_count();
    Eigen::MatrixXd stacked(3 * nf, 3);
    for (int f = 0; f < nf; ++f) {
        const auto m = field.face(f);
        for (int b = 0; b < 3; ++b)
            for (int a = 0; a < 3; ++a) stacked(3 * f + b, a) = areas_(f) * m(a, b);
    }
    return grad_.transpose() * stacked;
}

Eigen::MatrixXd MeshOperators::solve_free(const Eigen::MatrixXd& rhs) const {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(rhs.rows(), 3);
    if (free_vertices_.empty()) return x;
    Eigen::MatrixXd reduced(static_cast<long>(free_vertices_.size()), 3);
    for (std::size_t k = 0; k < free_vertices_.size(); ++k)
        reduced.row(static_cast<long>(k)) = rhs.row(free_vertices_[k]);
    const Eigen::MatrixXd y = solver_->solve(reduced);
    for (std::size_t k = 0; k < free_vertices_.size(); ++k)
        x.row(free_vertices_[k]) = y.row(static_cast<long>(k));
    return x;
}

namespace {

void center_gauge_components(Eigen::MatrixXd& x, const std::vector<int>& component,
                             const std::vector<unsigned char>& gauge) {
    const std::size_t ncomp = gauge.size();
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(static_cast<long>(ncomp), 3);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(static_cast<long>(ncomp));
    for (long v = 0; v < x.rows(); ++v) {
        mean.row(component[static_cast<std::size_t>(v)]) += x.row(v);
        count(component[static_cast<std::size_t>(v)]) += 1.0;
    }
    for (long v = 0; v < x.rows(); ++v) {
        const int c = component[static_cast<std::size_t>(v)];
        if (gauge[static_cast<std::size_t>(c)]) x.row(v) -= mean.row(c) / count(c);
    }
}

}  // namespace

Positions MeshOperators::solve_linear(const JacobianField& field) const {
    if (field.face_count() != face_count())
        throw std::invalid_argument("Jacobian field length does not match face count");
    Eigen::MatrixXd x = solve_free(stacked_rhs(field));
    center_gauge_components(x, component_, gauge_component_);
    return x;
}

JacobianField MeshOperators::solve_linear_transpose(const Positions& grad_vertices) const {
    if (grad_vertices.rows() != vertex_count())
        throw std::invalid_argument("vertex gradient length does not match vertex count");
    Eigen::MatrixXd g = grad_vertices;
    center_gauge_components(g, component_, gauge_component_);
    const Eigen::MatrixXd y = solve_free(g);
    const Eigen::MatrixXd gy = grad_ * y;  // 3F x 3
    JacobianField out(face_count());
    for (int f = 0; f < face_count(); ++f) {
        auto m = out.face(f);
        for (int b = 0; b < 3; ++b)
            for (int a = 0; a < 3; ++a) m(a, b) = areas_(f) * gy(3 * f + b, a);
    }
    return out;
}

JacobianField extract_jacobians(const MeshOperators& ops, const Positions& vertices) {
    if (vertices.rows() != ops.vertex_count())
        throw std::invalid_argument("vertex count does not match operators");
    const Eigen::MatrixXd g = ops.grad() * vertices;  // 3F x 3
    JacobianField field(ops.face_count());
    for (int f = 0; f < ops.face_count(); ++f) {
        auto m = field.face(f);
        for (int b = 0; b < 3; ++b)
            for (int a = 0; a < 3; ++a) m(a, b) = g(3 * f + b, a);
    }
    return field;
}

Positions poisson_solve(const MeshOperators& ops, const JacobianField& field) {
    Positions x = ops.solve_linear(field);
    x += ops.solve_offset();
    return x;
}

JacobianField poisson_adjoint(const MeshOperators& ops, const Positions& grad_vertices) {
    return ops.solve_linear_transpose(grad_vertices);
}

}  // namespace meshdrag
