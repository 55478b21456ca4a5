#pragma once

#include "meshdrag/mesh.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace meshdrag {

/// Parsed constraint JSON:
///   { "handles": [{"vertex": int, "target": [x, y, z]}, ...],
///     "mask": {"type": "all"} | {"type": "vertex_set", "vertices": [int, ...]},
///     "prompt": string,
///     "camera_distance": number (optional) }
/// Unknown keys are rejected.
struct ConstraintFile {
    struct Handle {
        long long vertex = 0;
        std::vector<double> target;
    };
    std::vector<Handle> handles;
    bool mask_all = true;
    std::vector<long long> mask_vertices;
    std::string prompt;
    std::optional<double> camera_distance;
};

/// Schema violation; `field` is a path such as "handles[0].target".
class ConstraintError : public std::runtime_error {
public:
    ConstraintError(std::string field, const std::string& what)
        : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

ConstraintFile parse_constraints(const std::string& json_text);
ConstraintFile load_constraints(const std::filesystem::path& path);

/// Cross-checks a constraint file against a mesh. Empty result means valid.
std::vector<std::string> validate(const TriMesh& mesh, const ConstraintFile& constraints);

/// Requires validate() to have returned no findings.
std::vector<HandleConstraint> to_handles(const ConstraintFile& constraints);
DeformationMask to_mask(const TriMesh& mesh, const ConstraintFile& constraints);

}  // namespace meshdrag
