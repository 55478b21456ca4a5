#include "meshdrag/constraints.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace meshdrag {

using json = nlohmann::json;

namespace {

void only_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConstraintError(where.empty() ? key : where + "." + key, "unknown key");
    }
}

long long integer(const json& v, const std::string& where) {
    if (!v.is_number_integer()) throw ConstraintError(where, "expected an integer");
    return v.get<long long>();
}

}  // namespace

ConstraintFile parse_constraints(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConstraintError("<document>", std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConstraintError("<document>", "expected an object");
    only_keys(doc, "", {"handles", "mask", "prompt", "camera_distance"});

    ConstraintFile out;
    if (!doc.contains("handles")) throw ConstraintError("handles", "missing");
    const json& handles = doc["handles"];
    if (!handles.is_array()) throw ConstraintError("handles", "expected an array");
    for (std::size_t i = 0; i < handles.size(); ++i) {
        const std::string where = "handles[" + std::to_string(i) + "]";
        const json& h = handles[i];
        if (!h.is_object()) throw ConstraintError(where, "expected an object");
        only_keys(h, where, {"vertex", "target"});
        if (!h.contains("vertex")) throw ConstraintError(where + ".vertex", "missing");
        if (!h.contains("target")) throw ConstraintError(where + ".target", "missing");
        ConstraintFile::Handle handle;
        handle.vertex = integer(h["vertex"], where + ".vertex");
        const json& t = h["target"];
        if (!t.is_array() || t.size() != 3) throw ConstraintError(where + ".target", "expected [x, y, z]");
        for (std::size_t k = 0; k < 3; ++k) {
            if (!t[k].is_number()) throw ConstraintError(where + ".target", "expected numbers");
            handle.target.push_back(t[k].get<double>());
        }
        out.handles.push_back(std::move(handle));
    }

    if (doc.contains("mask")) {
        const json& m = doc["mask"];
        if (!m.is_object()) throw ConstraintError("mask", "expected an object");
        only_keys(m, "mask", {"type", "vertices"});
        if (!m.contains("type") || !m["type"].is_string()) throw ConstraintError("mask.type", "expected a string");
        const std::string type = m["type"].get<std::string>();
        if (type == "all") {
            if (m.contains("vertices")) throw ConstraintError("mask.vertices", "not allowed for type \"all\"");
        } else if (type == "vertex_set") {
            if (!m.contains("vertices") || !m["vertices"].is_array())
                throw ConstraintError("mask.vertices", "expected an array");
            out.mask_all = false;
            const json& verts = m["vertices"];
            for (std::size_t i = 0; i < verts.size(); ++i)
                out.mask_vertices.push_back(integer(verts[i], "mask.vertices[" + std::to_string(i) + "]"));
        } else {
            throw ConstraintError("mask.type", "expected \"all\" or \"vertex_set\"");
        }
    }

    if (!doc.contains("prompt")) throw ConstraintError("prompt", "missing");
    if (!doc["prompt"].is_string()) throw ConstraintError("prompt", "expected a string");
    out.prompt = doc["prompt"].get<std::string>();

    if (doc.contains("camera_distance") && !doc["camera_distance"].is_null()) {
        if (!doc["camera_distance"].is_number()) throw ConstraintError("camera_distance", "expected a number");
        out.camera_distance = doc["camera_distance"].get<double>();
    }
    return out;
}

ConstraintFile load_constraints(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConstraintError("<file>", "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_constraints(ss.str());
}

std::vector<std::string> validate(const TriMesh& mesh, const ConstraintFile& c) {
    std::vector<std::string> findings;
    const long long nv = mesh.vertex_count();

    std::set<long long> mask;
    for (std::size_t i = 0; i < c.mask_vertices.size(); ++i) {
        const long long v = c.mask_vertices[i];
        if (v < 0 || v >= nv)
            findings.push_back("mask.vertices[" + std::to_string(i) + "]: vertex " + std::to_string(v) +
                               " out of range [0, " + std::to_string(nv) + ")");
        else
            mask.insert(v);
    }

    if (c.handles.empty()) findings.push_back("handles: at least one handle is required");
    std::set<long long> seen;
    for (std::size_t i = 0; i < c.handles.size(); ++i) {
        const auto& h = c.handles[i];
        const std::string where = "handles[" + std::to_string(i) + "]";
        if (h.vertex < 0 || h.vertex >= nv) {
            findings.push_back(where + ".vertex: vertex " + std::to_string(h.vertex) + " out of range [0, " +
                               std::to_string(nv) + ")");
            continue;
        }
        if (!seen.insert(h.vertex).second)
            findings.push_back(where + ".vertex: duplicate handle " + std::to_string(h.vertex));
        if (!c.mask_all && !mask.count(h.vertex))
            findings.push_back(where + ".vertex: handle " + std::to_string(h.vertex) + " not in mask");
        for (const double x : h.target)
            if (!std::isfinite(x)) {
                findings.push_back(where + ".target: not finite");
                break;
            }
    }
    if (c.camera_distance && !(*c.camera_distance > 0.0 && std::isfinite(*c.camera_distance)))
        findings.push_back("camera_distance: must be a finite number > 0");
    return findings;
}

std::vector<HandleConstraint> to_handles(const ConstraintFile& c) {
    std::vector<HandleConstraint> out;
    for (const auto& h : c.handles)
        out.push_back({static_cast<int>(h.vertex), Eigen::Vector3d(h.target[0], h.target[1], h.target[2])});
    return out;
}

DeformationMask to_mask(const TriMesh& mesh, const ConstraintFile& c) {
    if (c.mask_all) return DeformationMask::all(mesh.vertex_count(), mesh.faces());
    std::vector<int> verts(c.mask_vertices.begin(), c.mask_vertices.end());
    return DeformationMask::from_vertices(verts, mesh.vertex_count(), mesh.faces());
}

}  // namespace meshdrag
