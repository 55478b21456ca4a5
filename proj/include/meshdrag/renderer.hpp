#pragma once

// Deterministic differentiable rasterizer: perspective projection, nearest
// face depth test, flat Lambertian shading under a headlight, and a one-pixel
// linear coverage band outside silhouettes so outline pixels carry gradient.

#include "meshdrag/image.hpp"
#include "meshdrag/mesh.hpp"
#include "meshdrag/rng.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <vector>

namespace meshdrag {

struct Camera {
    double azimuth_deg = 0.0;    // [-180, 180], 0 looks from +Z
    double elevation_deg = 0.0;  // [0, 90], 90 looks straight down
    double distance = 1.0;
    Eigen::Vector3d look_at = Eigen::Vector3d::Zero();
    double fov_y_deg = 45.0;
    int image_size = 64;

    /// Throws std::invalid_argument when an invariant is violated.
    void validate() const;
    /// Unit vector from look_at toward the eye; also the headlight direction.
    Eigen::Vector3d view_direction() const;
    Eigen::Vector3d eye() const { return look_at + distance * view_direction(); }
};

struct Shading {
    double ambient = 0.2;
    double diffuse = 0.8;
    Eigen::Vector3d background{0.5, 0.5, 0.5};
    Eigen::Vector3d default_color{0.8, 0.8, 0.8};  // when the mesh has no vertex colors
};

/// Geometry to draw; references must outlive the call.
struct Surface {
    const Positions& vertices;
    const Faces& faces;
    const Colors* colors = nullptr;
};

enum class PixelKind : std::uint8_t { Background, Covered, Band };

struct PixelSample {
    PixelKind kind = PixelKind::Background;
    std::int32_t face = -1;
    std::int8_t edge = -1;  // band pixels: edge (k, k+1) of the face nearest to the pixel centre
    Eigen::Vector3d barycentric = Eigen::Vector3d::Zero();  // covered pixels, perspective-correct
};

struct RenderedView {
    Image rgb;
    std::vector<PixelSample> aux;  // one per pixel, row-major
    Camera camera;
};

/// Draws exactly three uniforms per camera, in order: azimuth, elevation, distance.
std::vector<Camera> sample_cameras(Rng& rng, double d0, const Eigen::Vector3d& look_at, int count,
                                   double fov_y_deg = 45.0, int image_size = 64);

/// Front, right, back, left at elevation 0 and distance d0.
std::vector<Camera> canonical_cameras(double d0, const Eigen::Vector3d& look_at, double fov_y_deg = 45.0,
                                      int image_size = 64);

RenderedView render(const Surface& surface, const Camera& camera, const Shading& shading = {});

/// Vertex gradient of sum(grad_rgb * view.rgb) for the vertices `view` was rendered from.
Positions render_backward(const RenderedView& view, const Image& grad_rgb, const Surface& surface,
                          const Shading& shading = {});

}  // namespace meshdrag
