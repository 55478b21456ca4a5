#include "meshdrag/mesh.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <utility>

namespace meshdrag {

namespace {

std::uint64_t edge_key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
}

bool parse_double(const std::string& token, double& out) {
    const char* first = token.data();
    const char* last = first + token.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

}  // namespace

void validate_mesh(const Positions& vertices, const Faces& faces) {
    const long nv = vertices.rows();
    for (long v = 0; v < nv; ++v) {
        if (!vertices.row(v).allFinite())
            throw MeshError(MeshError::Kind::Validation,
                            "vertex " + std::to_string(v) + " has a non-finite coordinate", v);
    }
    const double diag = nv > 0 ? bounding_info(vertices).diagonal : 0.0;
    const double min_area = 1e-12 * diag * diag;

    std::unordered_map<std::uint64_t, int> edge_faces;
    edge_faces.reserve(static_cast<std::size_t>(faces.rows()) * 3);
    for (long f = 0; f < faces.rows(); ++f) {
        const std::string name = "face " + std::to_string(f);
        for (int k = 0; k < 3; ++k) {
            const int idx = faces(f, k);
            if (idx < 0 || idx >= nv)
                throw MeshError(MeshError::Kind::Validation,
                                name + " references vertex " + std::to_string(idx) +
                                    " out of range [0, " + std::to_string(nv) + ")",
                                f);
        }
        if (faces(f, 0) == faces(f, 1) || faces(f, 1) == faces(f, 2) || faces(f, 0) == faces(f, 2))
            throw MeshError(MeshError::Kind::Validation, name + " repeats a vertex", f);

        const Eigen::Vector3d a = vertices.row(faces(f, 0));
        const Eigen::Vector3d b = vertices.row(faces(f, 1));
        const Eigen::Vector3d c = vertices.row(faces(f, 2));
        const double area = 0.5 * (b - a).cross(c - a).norm();
        if (!(area > min_area))
            throw MeshError(MeshError::Kind::Validation, name + " has zero area", f);

        for (int k = 0; k < 3; ++k) {
            const int count = ++edge_faces[edge_key(faces(f, k), faces(f, (k + 1) % 3))];
            if (count > 2)
                throw MeshError(MeshError::Kind::Validation,
                                name + " makes edge (" + std::to_string(faces(f, k)) + ", " +
                                    std::to_string(faces(f, (k + 1) % 3)) +
                                    ") shared by more than two faces",
                                f);
        }
    }
}

TriMesh::TriMesh(Positions vertices_in, Faces faces, std::optional<Colors> colors)
    : vertices(std::move(vertices_in)), faces_(std::move(faces)), colors_(std::move(colors)) {
    validate_mesh(vertices, faces_);
    if (colors_) {
        if (colors_->rows() != vertices.rows())
            throw MeshError(MeshError::Kind::Validation, "color count does not match vertex count");
        for (long v = 0; v < colors_->rows(); ++v) {
            const auto row = colors_->row(v);
            if (!row.allFinite() || row.minCoeff() < 0.0 || row.maxCoeff() > 1.0)
                throw MeshError(MeshError::Kind::Validation,
                                "vertex " + std::to_string(v) + " color outside [0,1]", v);
        }
    }
    rest_ = vertices;
}

TriMesh parse_obj(const std::string& text) {
    std::vector<Eigen::Vector3d> positions;
    std::vector<Eigen::Vector3d> colors;
    std::vector<std::array<int, 3>> triangles;
    bool any_color = false;
    bool any_plain = false;

    std::istringstream in(text);
    std::string line;
    long line_no = 0;
    auto fail = [&](const std::string& msg) -> MeshError {
        return MeshError(MeshError::Kind::Parse, "line " + std::to_string(line_no) + ": " + msg,
                         line_no);
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;

        std::vector<std::string> tokens;
        for (std::string t; ls >> t;) tokens.push_back(t);

        if (tag == "v") {
            if (tokens.size() != 3 && tokens.size() != 4 && tokens.size() != 6)
                throw fail("vertex record needs 3, 4 or 6 numbers");
            std::array<double, 6> vals{};
            for (std::size_t i = 0; i < tokens.size(); ++i)
                if (!parse_double(tokens[i], vals[i])) throw fail("bad number '" + tokens[i] + "'");
            positions.emplace_back(vals[0], vals[1], vals[2]);
            if (tokens.size() == 6) {
                colors.emplace_back(vals[3], vals[4], vals[5]);
                any_color = true;
            } else {
                colors.emplace_back(Eigen::Vector3d::Zero());
                any_plain = true;
            }
        } else if (tag == "f") {
            if (tokens.size() < 3) throw fail("face record needs at least 3 vertices");
            std::vector<int> poly;
            for (const auto& tok : tokens) {
                const std::string head = tok.substr(0, tok.find('/'));
                int idx = 0;
                auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), idx);
                if (ec != std::errc() || ptr != head.data() + head.size() || idx == 0)
                    throw fail("bad face index '" + tok + "'");
                const int n = static_cast<int>(positions.size());
                const int resolved = idx > 0 ? idx - 1 : n + idx;
                if (resolved < 0 || resolved >= n)
                    throw fail("face index " + std::to_string(idx) + " out of range");
                poly.push_back(resolved);
            }
            for (std::size_t k = 1; k + 1 < poly.size(); ++k)
                triangles.push_back({poly[0], poly[k], poly[k + 1]});
        }
        // Other records (vn, vt, o, g, s, usemtl, mtllib, ...) carry nothing we use.
    }
    if (any_color && any_plain)
        throw MeshError(MeshError::Kind::Parse, "vertex colors present on some vertices only");

    Positions v(static_cast<long>(positions.size()), 3);
    for (std::size_t i = 0; i < positions.size(); ++i) v.row(static_cast<long>(i)) = positions[i];
    Faces f(static_cast<long>(triangles.size()), 3);
    for (std::size_t i = 0; i < triangles.size(); ++i)
        for (int k = 0; k < 3; ++k) f(static_cast<long>(i), k) = triangles[i][static_cast<std::size_t>(k)];

    std::optional<Colors> c;
    if (any_color) {
        Colors cm(static_cast<long>(colors.size()), 3);
        for (std::size_t i = 0; i < colors.size(); ++i) cm.row(static_cast<long>(i)) = colors[i];
        c = std::move(cm);
    }
    return TriMesh(std::move(v), std::move(f), std::move(c));
}

TriMesh load_obj(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MeshError(MeshError::Kind::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_obj(ss.str());
}

void save_obj(const TriMesh& mesh, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw MeshError(MeshError::Kind::Io, "cannot write " + path.string());
    out << std::setprecision(9);
    const auto& colors = mesh.colors();
    for (int v = 0; v < mesh.vertex_count(); ++v) {
        out << "v " << mesh.vertices(v, 0) << ' ' << mesh.vertices(v, 1) << ' ' << mesh.vertices(v, 2);
        if (colors) out << ' ' << (*colors)(v, 0) << ' ' << (*colors)(v, 1) << ' ' << (*colors)(v, 2);
        out << '\n';
    }
    const auto& faces = mesh.faces();
    for (int f = 0; f < mesh.face_count(); ++f)
        out << "f " << faces(f, 0) + 1 << ' ' << faces(f, 1) + 1 << ' ' << faces(f, 2) + 1 << '\n';
    out.flush();
    if (!out) throw MeshError(MeshError::Kind::Io, "write failed for " + path.string());
}

BoundingInfo bounding_info(const Positions& vertices) {
    if (vertices.rows() == 0) throw std::invalid_argument("bounding_info: empty vertex set");
    const Eigen::Vector3d lo = vertices.colwise().minCoeff();
    const Eigen::Vector3d hi = vertices.colwise().maxCoeff();
    return {vertices.colwise().mean(), (hi - lo).norm()};
}

DeformationMask DeformationMask::all(int vertex_count, const Faces& faces) {
    DeformationMask m;
    m.covers_all_ = true;
    m.vertex_flags_.assign(static_cast<std::size_t>(vertex_count), 1);
    m.face_flags_.assign(static_cast<std::size_t>(faces.rows()), 1);
    return m;
}

DeformationMask DeformationMask::from_vertices(const std::vector<int>& vertices, int vertex_count,
                                               const Faces& faces) {
    DeformationMask m;
    m.vertex_flags_.assign(static_cast<std::size_t>(vertex_count), 0);
    for (const int v : vertices) {
        if (v < 0 || v >= vertex_count)
            throw std::out_of_range("mask vertex " + std::to_string(v) + " out of range");
        m.vertex_flags_[static_cast<std::size_t>(v)] = 1;
    }
    m.face_flags_.assign(static_cast<std::size_t>(faces.rows()), 0);
    for (long f = 0; f < faces.rows(); ++f)
        for (int k = 0; k < 3; ++k)
            if (m.vertex_flags_[static_cast<std::size_t>(faces(f, k))]) m.face_flags_[static_cast<std::size_t>(f)] = 1;
    m.covers_all_ = std::all_of(m.vertex_flags_.begin(), m.vertex_flags_.end(),
                                [](unsigned char c) { return c != 0; });
    return m;
}

std::vector<int> DeformationMask::face_set() const {
    std::vector<int> out;
    for (std::size_t f = 0; f < face_flags_.size(); ++f)
        if (face_flags_[f]) out.push_back(static_cast<int>(f));
    return out;
}

TriMesh make_icosphere(int subdivisions, double radius) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Eigen::Vector3d> pts = {
        {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
        {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    std::vector<std::array<int, 3>> tris = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
        {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
        {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
    for (auto& p : pts) p.normalize();

    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
            pts.push_back((pts[static_cast<std::size_t>(a)] + pts[static_cast<std::size_t>(b)]).normalized());
            const int id = static_cast<int>(pts.size()) - 1;
            midpoint.emplace(key, id);
            return id;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(tris.size() * 4);
        for (const auto& tri : tris) {
            const int ab = mid(tri[0], tri[1]);
            const int bc = mid(tri[1], tri[2]);
            const int ca = mid(tri[2], tri[0]);
            next.push_back({tri[0], ab, ca});
            next.push_back({tri[1], bc, ab});
            next.push_back({tri[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        tris = std::move(next);
    }

    Positions v(static_cast<long>(pts.size()), 3);
    for (std::size_t i = 0; i < pts.size(); ++i) v.row(static_cast<long>(i)) = radius * pts[i];
    Faces f(static_cast<long>(tris.size()), 3);
    for (std::size_t i = 0; i < tris.size(); ++i)
        for (int k = 0; k < 3; ++k) f(static_cast<long>(i), k) = tris[i][static_cast<std::size_t>(k)];
    return TriMesh(std::move(v), std::move(f));
}

Positions face_normals(const Positions& vertices, const Faces& faces) {
    Positions n(faces.rows(), 3);
    for (long f = 0; f < faces.rows(); ++f) {
        const Eigen::Vector3d a = vertices.row(faces(f, 0));
        const Eigen::Vector3d b = vertices.row(faces(f, 1));
        const Eigen::Vector3d c = vertices.row(faces(f, 2));
        n.row(f) = (b - a).cross(c - a).normalized();
    }
    return n;
}

std::vector<int> vertex_components(int vertex_count, const Faces& faces, int* component_count) {
    std::vector<int> parent(static_cast<std::size_t>(vertex_count));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    };
    for (long f = 0; f < faces.rows(); ++f)
        for (int k = 1; k < 3; ++k) {
            const int a = find(faces(f, 0));
            const int b = find(faces(f, k));
            if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
        }
    std::vector<int> label(static_cast<std::size_t>(vertex_count), -1);
    std::vector<int> root_label(static_cast<std::size_t>(vertex_count), -1);
    int next = 0;
    for (int v = 0; v < vertex_count; ++v) {
        const int r = find(v);
        if (root_label[static_cast<std::size_t>(r)] < 0) root_label[static_cast<std::size_t>(r)] = next++;
        label[static_cast<std::size_t>(v)] = root_label[static_cast<std::size_t>(r)];
    }
    if (component_count) *component_count = next;
    return label;
}

}  // namespace meshdrag
