#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace meshdrag {

using Positions = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3>;
using Colors = Eigen::Matrix<double, Eigen::Dynamic, 3>;

class MeshError : public std::runtime_error {
public:
    enum class Kind { Parse, Validation, Io };

    MeshError(Kind kind, const std::string& what, long element = -1)
        : std::runtime_error(what), kind_(kind), element_(element) {}

    Kind kind() const noexcept { return kind_; }
    /// Offending face / line / vertex index, or -1 when not applicable.
    long element() const noexcept { return element_; }

private:
    Kind kind_;
    long element_;
};

/// Indexed triangle mesh. Only `vertices` is mutable after construction;
/// `rest_vertices` is the snapshot taken when the mesh was built.
class TriMesh {
public:
    TriMesh() = default;
    /// Validates and snapshots the rest pose. Throws MeshError(Validation).
    TriMesh(Positions vertices, Faces faces, std::optional<Colors> colors = std::nullopt);

    Positions vertices;

    const Positions& rest_vertices() const noexcept { return rest_; }
    const Faces& faces() const noexcept { return faces_; }
    const std::optional<Colors>& colors() const noexcept { return colors_; }

    int vertex_count() const noexcept { return static_cast<int>(rest_.rows()); }
    int face_count() const noexcept { return static_cast<int>(faces_.rows()); }

private:
    Positions rest_;
    Faces faces_;
    std::optional<Colors> colors_;
};

/// Throws MeshError(Validation) naming the first offending face.
void validate_mesh(const Positions& vertices, const Faces& faces);

TriMesh load_obj(const std::filesystem::path& path);
TriMesh parse_obj(const std::string& text);
/// Writes the current `vertices` (not the rest pose).
void save_obj(const TriMesh& mesh, const std::filesystem::path& path);

struct BoundingInfo {
    Eigen::Vector3d centroid;
    double diagonal;
};

BoundingInfo bounding_info(const Positions& vertices);
inline BoundingInfo bounding_info(const TriMesh& mesh) { return bounding_info(mesh.vertices); }

/// Region of influence painted on vertices. A face may move iff at least one
/// of its vertices may.
class DeformationMask {
public:
    /// Every vertex movable.
    static DeformationMask all(int vertex_count, const Faces& faces);
    /// Throws std::out_of_range for indices outside [0, vertex_count).
    static DeformationMask from_vertices(const std::vector<int>& vertices, int vertex_count,
                                         const Faces& faces);

    bool covers_all() const noexcept { return covers_all_; }
    bool vertex_movable(int v) const { return vertex_flags_[static_cast<std::size_t>(v)] != 0; }
    bool face_movable(int f) const { return face_flags_[static_cast<std::size_t>(f)] != 0; }
    const std::vector<unsigned char>& vertex_flags() const noexcept { return vertex_flags_; }
    const std::vector<unsigned char>& face_flags() const noexcept { return face_flags_; }
    std::vector<int> face_set() const;

private:
    bool covers_all_ = true;
    std::vector<unsigned char> vertex_flags_;
    std::vector<unsigned char> face_flags_;
};

struct HandleConstraint {
    int vertex_index = 0;
    Eigen::Vector3d target = Eigen::Vector3d::Zero();
};

/// Unit icosphere centred at the origin; subdivisions 0,1,2 give 12, 42, 162 vertices.
TriMesh make_icosphere(int subdivisions, double radius = 1.0);

/// Unit-area face normals (rows) of `vertices` on `faces`.
Positions face_normals(const Positions& vertices, const Faces& faces);

/// Connected-component id per vertex (via shared faces); isolated vertices get their own id.
std::vector<int> vertex_components(int vertex_count, const Faces& faces, int* component_count = nullptr);

}  // namespace meshdrag
