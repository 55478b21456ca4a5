#include "meshdrag/renderer.hpp"

#include <unsupported/Eigen/AutoDiff>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace meshdrag {

namespace {

using Ad = Eigen::AutoDiffScalar<Eigen::Matrix<double, 9, 1>>;

inline double value_of(double x) { return x; }
inline double value_of(const Ad& x) { return x.value(); }
inline double sqrt_of(double x) { return std::sqrt(x); }
inline Ad sqrt_of(const Ad& x) { return Eigen::sqrt(x); }

template <class T>
struct Vec3 {
    T x, y, z;
};

template <class T>
Vec3<T> operator-(const Vec3<T>& a, const Vec3<T>& b) {
    return {T(a.x - b.x), T(a.y - b.y), T(a.z - b.z)};
}

template <class T>
T dot(const Vec3<T>& a, const Eigen::Vector3d& b) {
    return T(a.x * b.x() + a.y * b.y() + a.z * b.z());
}

template <class T>
Vec3<T> cross(const Vec3<T>& a, const Vec3<T>& b) {
    return {T(a.y * b.z - a.z * b.y), T(a.z * b.x - a.x * b.z), T(a.x * b.y - a.y * b.x)};
}

struct Frame {
    Eigen::Vector3d eye;
    Eigen::Vector3d right;
    Eigen::Vector3d up;
    Eigen::Vector3d forward;
    Eigen::Vector3d light;
    double tan_half;
    double size;
    double near;
};

Frame make_frame(const Camera& cam) {
    const double az = cam.azimuth_deg * std::numbers::pi / 180.0;
    Frame fr;
    fr.light = cam.view_direction();
    fr.eye = cam.look_at + cam.distance * fr.light;
    fr.forward = -fr.light;
    fr.right = Eigen::Vector3d(std::cos(az), 0.0, -std::sin(az));
    fr.up = fr.right.cross(fr.forward);
    fr.tan_half = std::tan(0.5 * cam.fov_y_deg * std::numbers::pi / 180.0);
    fr.size = cam.image_size;
    fr.near = 1e-2 * cam.distance;
    return fr;
}

template <class T>
struct ScreenPoint {
    T sx, sy, z;
};

template <class T>
ScreenPoint<T> project(const Frame& fr, const Vec3<T>& p) {
    const Vec3<T> d{T(p.x - fr.eye.x()), T(p.y - fr.eye.y()), T(p.z - fr.eye.z())};
    const T x = dot(d, fr.right);
    const T y = dot(d, fr.up);
    const T z = dot(d, fr.forward);
    const T denom = z * fr.tan_half;
    return {T((x / denom + 1.0) * (0.5 * fr.size)), T((1.0 - y / denom) * (0.5 * fr.size)), z};
}

template <class T>
T cross2(const T& ax, const T& ay, const T& bx, const T& by) {
    return T(ax * by - ay * bx);
}

template <class T>
T shade_factor(const Frame& fr, const Shading& sh, const std::array<Vec3<T>, 3>& p) {
    const Vec3<T> n = cross(p[1] - p[0], p[2] - p[0]);
    const T len = sqrt_of(T(n.x * n.x + n.y * n.y + n.z * n.z));
    const T ndl = dot(n, fr.light) / len;
    if (value_of(ndl) > 0.0) return T(sh.ambient + sh.diffuse * ndl);
    return T(sh.ambient);
}

struct Barycentric {
    std::array<double, 3> lambda;
    double inv_depth;
};

/// Screen-space barycentrics of q; false if the projected triangle is degenerate.
bool screen_barycentric(const std::array<ScreenPoint<double>, 3>& s, double qx, double qy, Barycentric& out) {
    const double area = cross2(s[1].sx - s[0].sx, s[1].sy - s[0].sy, s[2].sx - s[0].sx, s[2].sy - s[0].sy);
    if (std::abs(area) < 1e-12) return false;
    for (int k = 0; k < 3; ++k) {
        const auto& a = s[static_cast<std::size_t>((k + 1) % 3)];
        const auto& b = s[static_cast<std::size_t>((k + 2) % 3)];
        out.lambda[static_cast<std::size_t>(k)] = cross2(a.sx - qx, a.sy - qy, b.sx - qx, b.sy - qy) / area;
    }
    out.inv_depth = out.lambda[0] / s[0].z + out.lambda[1] / s[1].z + out.lambda[2] / s[2].z;
    return true;
}

template <class T>
std::array<T, 3> covered_pixel(const Frame& fr, const Shading& sh, const std::array<Vec3<T>, 3>& p,
                               const std::array<Eigen::Vector3d, 3>& c, double qx, double qy) {
    std::array<ScreenPoint<T>, 3> s;
    for (std::size_t k = 0; k < 3; ++k) s[k] = project(fr, p[k]);
    const T area = cross2(T(s[1].sx - s[0].sx), T(s[1].sy - s[0].sy), T(s[2].sx - s[0].sx), T(s[2].sy - s[0].sy));
    std::array<T, 3> w;
    for (std::size_t k = 0; k < 3; ++k) {
        const auto& a = s[(k + 1) % 3];
        const auto& b = s[(k + 2) % 3];
        const T lambda = cross2(T(a.sx - qx), T(a.sy - qy), T(b.sx - qx), T(b.sy - qy)) / area;
        w[k] = lambda / s[k].z;
    }
    const T wsum = w[0] + w[1] + w[2];
    const T shade = shade_factor(fr, sh, p);
    std::array<T, 3> rgb;
    for (int ch = 0; ch < 3; ++ch) {
        const T col = T((w[0] * c[0](ch) + w[1] * c[1](ch) + w[2] * c[2](ch)) / wsum);
        rgb[static_cast<std::size_t>(ch)] = col * shade;
    }
    return rgb;
}

/// Pixel just outside edge (edge, edge+1): coverage 1 - distance blends the
/// shaded edge colour over the background.
template <class T>
std::array<T, 3> band_pixel(const Frame& fr, const Shading& sh, const std::array<Vec3<T>, 3>& p,
                            const std::array<Eigen::Vector3d, 3>& c, int edge, double qx, double qy) {
    const auto ia = static_cast<std::size_t>(edge);
    const auto ib = static_cast<std::size_t>((edge + 1) % 3);
    const ScreenPoint<T> a = project(fr, p[ia]);
    const ScreenPoint<T> b = project(fr, p[ib]);
    const T ex = b.sx - a.sx;
    const T ey = b.sy - a.sy;
    T t = ((qx - a.sx) * ex + (qy - a.sy) * ey) / (ex * ex + ey * ey);
    if (value_of(t) < 0.0) t = T(0.0);
    if (value_of(t) > 1.0) t = T(1.0);
    const T dx = a.sx + t * ex - qx;
    const T dy = a.sy + t * ey - qy;
    const T dist = sqrt_of(T(dx * dx + dy * dy));
    const T alpha = 1.0 - dist;
    const T shade = shade_factor(fr, sh, p);
    std::array<T, 3> rgb;
    for (int ch = 0; ch < 3; ++ch) {
        const T col = T(((1.0 - t) * c[ia](ch) + t * c[ib](ch)) * shade);
        rgb[static_cast<std::size_t>(ch)] = T(alpha * col + (1.0 - alpha) * sh.background(ch));
    }
    return rgb;
}

double point_segment_distance(double qx, double qy, const ScreenPoint<double>& a, const ScreenPoint<double>& b) {
    const double ex = b.sx - a.sx;
    const double ey = b.sy - a.sy;
    const double t = std::clamp(((qx - a.sx) * ex + (qy - a.sy) * ey) / (ex * ex + ey * ey), 0.0, 1.0);
    const double dx = a.sx + t * ex - qx;
    const double dy = a.sy + t * ey - qy;
    return std::sqrt(dx * dx + dy * dy);
}

std::array<Eigen::Vector3d, 3> face_colors(const Surface& s, const Shading& sh, int f) {
    std::array<Eigen::Vector3d, 3> c;
    for (int k = 0; k < 3; ++k)
        c[static_cast<std::size_t>(k)] = s.colors ? Eigen::Vector3d(s.colors->row(s.faces(f, k)).transpose())
                                                  : sh.default_color;
    return c;
}

std::array<Vec3<double>, 3> face_points(const Surface& s, int f) {
    std::array<Vec3<double>, 3> p;
    for (int k = 0; k < 3; ++k) {
        const int v = s.faces(f, k);
        p[static_cast<std::size_t>(k)] = {s.vertices(v, 0), s.vertices(v, 1), s.vertices(v, 2)};
    }
    return p;
}

}  // namespace

void Camera::validate() const {
    if (!(distance > 0.0)) throw std::invalid_argument("camera distance must be > 0");
    if (!(fov_y_deg > 0.0 && fov_y_deg < 180.0)) throw std::invalid_argument("camera fov_y must be in (0, 180)");
    if (image_size < 8) throw std::invalid_argument("camera image_size must be >= 8");
    if (!look_at.allFinite() || !std::isfinite(azimuth_deg) || !std::isfinite(elevation_deg))
        throw std::invalid_argument("camera parameters must be finite");
}

Eigen::Vector3d Camera::view_direction() const {
    const double az = azimuth_deg * std::numbers::pi / 180.0;
    const double el = elevation_deg * std::numbers::pi / 180.0;
    return {std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az)};
}

std::vector<Camera> sample_cameras(Rng& rng, double d0, const Eigen::Vector3d& look_at, int count,
                                   double fov_y_deg, int image_size) {
    if (!(d0 > 0.0)) throw std::invalid_argument("sample_cameras: d0 must be > 0");
    std::vector<Camera> cams;
    cams.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (int i = 0; i < count; ++i) {
        Camera c;
        c.azimuth_deg = rng.uniform(-180.0, 180.0);
        c.elevation_deg = rng.uniform(0.0, 90.0);
        c.distance = rng.uniform(d0, d0 + 2.0);
        c.look_at = look_at;
        c.fov_y_deg = fov_y_deg;
        c.image_size = image_size;
        cams.push_back(c);
    }
    return cams;
}

std::vector<Camera> canonical_cameras(double d0, const Eigen::Vector3d& look_at, double fov_y_deg, int image_size) {
    std::vector<Camera> cams;
    for (const double az : {0.0, 90.0, 180.0, -90.0}) {
        Camera c;
        c.azimuth_deg = az;
        c.elevation_deg = 0.0;
        c.distance = d0;
        c.look_at = look_at;
        c.fov_y_deg = fov_y_deg;
        c.image_size = image_size;
        cams.push_back(c);
    }
    return cams;
}

RenderedView render(const Surface& surface, const Camera& camera, const Shading& shading) {
    camera.validate();
    const Frame fr = make_frame(camera);
    const int size = camera.image_size;
    const auto npix = static_cast<std::size_t>(size) * static_cast<std::size_t>(size);

    RenderedView view;
    view.camera = camera;
    view.rgb = Image(size, size);
    view.aux.assign(npix, PixelSample{});

    const auto nv = surface.vertices.rows();
    std::vector<ScreenPoint<double>> screen(static_cast<std::size_t>(nv));
    for (long v = 0; v < nv; ++v)
        screen[static_cast<std::size_t>(v)] =
            project(fr, Vec3<double>{surface.vertices(v, 0), surface.vertices(v, 1), surface.vertices(v, 2)});

    const auto nf = static_cast<int>(surface.faces.rows());
    std::vector<unsigned char> drawable(static_cast<std::size_t>(nf), 0);
    std::vector<std::array<ScreenPoint<double>, 3>> tri(static_cast<std::size_t>(nf));
    for (int f = 0; f < nf; ++f) {
        bool ok = true;
        for (int k = 0; k < 3; ++k) {
            const auto& s = screen[static_cast<std::size_t>(surface.faces(f, k))];
            tri[static_cast<std::size_t>(f)][static_cast<std::size_t>(k)] = s;
            ok = ok && s.z > fr.near;
        }
        drawable[static_cast<std::size_t>(f)] = ok ? 1 : 0;
    }

    auto pixel_range = [size](double lo, double hi, int& first, int& last) {
        first = std::max(0, static_cast<int>(std::ceil(lo - 0.5)));
        last = std::min(size - 1, static_cast<int>(std::floor(hi - 0.5)));
    };

    // Nearest-face visibility at pixel centres.
    std::vector<double> depth(npix, -std::numeric_limits<double>::infinity());
    for (int f = 0; f < nf; ++f) {
        if (!drawable[static_cast<std::size_t>(f)]) continue;
        const auto& s = tri[static_cast<std::size_t>(f)];
        int x0, x1, y0, y1;
        pixel_range(std::min({s[0].sx, s[1].sx, s[2].sx}), std::max({s[0].sx, s[1].sx, s[2].sx}), x0, x1);
        pixel_range(std::min({s[0].sy, s[1].sy, s[2].sy}), std::max({s[0].sy, s[1].sy, s[2].sy}), y0, y1);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                Barycentric bc;
                if (!screen_barycentric(s, x + 0.5, y + 0.5, bc)) continue;
                if (bc.lambda[0] < 0.0 || bc.lambda[1] < 0.0 || bc.lambda[2] < 0.0) continue;
                const auto idx = static_cast<std::size_t>(y) * static_cast<std::size_t>(size) + static_cast<std::size_t>(x);
                if (bc.inv_depth > depth[idx]) {
                    depth[idx] = bc.inv_depth;
                    auto& px = view.aux[idx];
                    px.kind = PixelKind::Covered;
                    px.face = f;
                    for (int k = 0; k < 3; ++k)
                        px.barycentric(k) = bc.lambda[static_cast<std::size_t>(k)] / s[static_cast<std::size_t>(k)].z / bc.inv_depth;
                }
            }
    }

    // Coverage band: uncovered pixels within one pixel of some face. Faces tied
    // on distance (a shared edge or vertex) resolve to the brighter one, which
    // keeps the choice independent of face order.
    std::vector<double> band_dist(npix, 1.0);
    std::vector<double> band_shade(npix, -1.0);
    for (int f = 0; f < nf; ++f) {
        if (!drawable[static_cast<std::size_t>(f)]) continue;
        const double shade = shade_factor(fr, shading, face_points(surface, f));
        const auto& s = tri[static_cast<std::size_t>(f)];
        int x0, x1, y0, y1;
        pixel_range(std::min({s[0].sx, s[1].sx, s[2].sx}) - 1.0, std::max({s[0].sx, s[1].sx, s[2].sx}) + 1.0, x0, x1);
        pixel_range(std::min({s[0].sy, s[1].sy, s[2].sy}) - 1.0, std::max({s[0].sy, s[1].sy, s[2].sy}) + 1.0, y0, y1);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const auto idx = static_cast<std::size_t>(y) * static_cast<std::size_t>(size) + static_cast<std::size_t>(x);
                auto& px = view.aux[idx];
                if (px.kind == PixelKind::Covered) continue;
                for (int k = 0; k < 3; ++k) {
                    const double d = point_segment_distance(x + 0.5, y + 0.5, s[static_cast<std::size_t>(k)],
                                                            s[static_cast<std::size_t>((k + 1) % 3)]);
                    const bool tie = std::abs(d - band_dist[idx]) <= 1e-9;
                    if ((d < band_dist[idx] && !tie) || (tie && d < 1.0 && shade > band_shade[idx])) {
                        band_dist[idx] = d;
                        band_shade[idx] = shade;
                        px.kind = PixelKind::Band;
                        px.face = f;
                        px.edge = static_cast<std::int8_t>(k);
                    }
                }
            }
    }

    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const auto idx = static_cast<std::size_t>(y) * static_cast<std::size_t>(size) + static_cast<std::size_t>(x);
            const auto& px = view.aux[idx];
            std::array<double, 3> rgb{shading.background(0), shading.background(1), shading.background(2)};
            if (px.kind == PixelKind::Covered)
                rgb = covered_pixel(fr, shading, face_points(surface, px.face), face_colors(surface, shading, px.face),
                                    x + 0.5, y + 0.5);
            else if (px.kind == PixelKind::Band)
                rgb = band_pixel(fr, shading, face_points(surface, px.face), face_colors(surface, shading, px.face),
                                 px.edge, x + 0.5, y + 0.5);
            for (int ch = 0; ch < 3; ++ch)
                view.rgb.at(x, y, ch) = std::clamp(rgb[static_cast<std::size_t>(ch)], 0.0, 1.0);
        }
    return view;
}

Positions render_backward(const RenderedView& view, const Image& grad_rgb, const Surface& surface,
                          const Shading& shading) {
    if (!grad_rgb.same_shape(view.rgb)) throw std::invalid_argument("render_backward: gradient image shape mismatch");
    const Frame fr = make_frame(view.camera);
    const int size = view.camera.image_size;
    Positions grad = Positions::Zero(surface.vertices.rows(), 3);

    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const auto idx = static_cast<std::size_t>(y) * static_cast<std::size_t>(size) + static_cast<std::size_t>(x);
            const auto& px = view.aux[idx];
            if (px.kind == PixelKind::Background) continue;
            const double g[3] = {grad_rgb.at(x, y, 0), grad_rgb.at(x, y, 1), grad_rgb.at(x, y, 2)};
            if (g[0] == 0.0 && g[1] == 0.0 && g[2] == 0.0) continue;

            std::array<Vec3<Ad>, 3> p;
            for (int k = 0; k < 3; ++k) {
                const int v = surface.faces(px.face, k);
                p[static_cast<std::size_t>(k)] = {Ad(surface.vertices(v, 0), 9, 3 * k),
                                                  Ad(surface.vertices(v, 1), 9, 3 * k + 1),
                                                  Ad(surface.vertices(v, 2), 9, 3 * k + 2)};
            }
            const auto colors = face_colors(surface, shading, px.face);
            const std::array<Ad, 3> rgb =
                px.kind == PixelKind::Covered ? covered_pixel(fr, shading, p, colors, x + 0.5, y + 0.5)
                                              : band_pixel(fr, shading, p, colors, px.edge, x + 0.5, y + 0.5);
            Eigen::Matrix<double, 9, 1> d = Eigen::Matrix<double, 9, 1>::Zero();
            for (int ch = 0; ch < 3; ++ch) {
                const Ad& c = rgb[static_cast<std::size_t>(ch)];
                // Clamped channels carry no gradient.
                if (c.value() < 0.0 || c.value() > 1.0) continue;
                d += g[ch] * c.derivatives();
            }
            for (int k = 0; k < 3; ++k) grad.row(surface.faces(px.face, k)) += d.segment<3>(3 * k).transpose();
        }
    return grad;
}

}  // namespace meshdrag
