#include "meshdrag/renderer.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <numbers>
#include <random>

using namespace meshdrag;
using namespace meshdrag::testing;

namespace {

struct Scene {
    Positions v;
    Faces f;
    Colors c;
    Surface surface() const { return {v, f, &c}; }
};

/// Two colored triangles forming a slightly folded quad in front of the origin.
Scene folded_quad() {
    Scene s;
    s.v.resize(4, 3);
    s.v << -0.6, -0.5, 0.0,
            0.6, -0.5, 0.1,
            0.6,  0.5, -0.1,
           -0.5,  0.6, 0.05;
    s.f.resize(2, 3);
    s.f << 0, 1, 2,
           0, 2, 3;
    s.c.resize(4, 3);
    s.c << 0.9, 0.2, 0.1,
           0.1, 0.8, 0.3,
           0.2, 0.3, 0.9,
           0.7, 0.7, 0.2;
    return s;
}

/// Flat quad in the plane z = depth, uniform color.
Scene flat_quad(double half, double depth, double grey) {
    Scene s;
    s.v.resize(4, 3);
    s.v << -half, -half, depth,
            half, -half, depth,
            half,  half, depth,
           -half,  half, depth;
    s.f.resize(2, 3);
    s.f << 0, 1, 2,
           0, 2, 3;
    s.c = Colors::Constant(4, 3, grey);
    return s;
}

Camera camera_at(double az, double el, double dist, int size = 64) {
    Camera c;
    c.azimuth_deg = az;
    c.elevation_deg = el;
    c.distance = dist;
    c.image_size = size;
    return c;
}

double weighted(const Image& img, const Image& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < img.data.size(); ++i) s += img.data[i] * w.data[i];
    return s;
}

}  // namespace

TEST_CASE("head-on red triangle filling the frustum renders pure red at the centre") {
    Positions v(3, 3);
    v << -10, -10, 0, 10, -10, 0, 0, 10, 0;
    Faces f(1, 3);
    f << 0, 1, 2;
    Colors c(3, 3);
    c << 1, 0, 0, 1, 0, 0, 1, 0, 0;
    const auto view = render({v, f, &c}, camera_at(0, 0, 2.0));
    // Shading equation by hand: color * (ambient + diffuse * <n, l>) with <n, l> = 1.
    const double expected = 1.0 * (0.2 + 0.8 * 1.0);
    CHECK(view.rgb.at(32, 32, 0) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(view.rgb.at(32, 32, 1) == 0.0);
    CHECK(view.rgb.at(32, 32, 2) == 0.0);
    CHECK(view.aux[32 * 64 + 32].kind == PixelKind::Covered);
}

TEST_CASE("empty mesh renders only background") {
    const Positions v(0, 3);
    const Faces f(0, 3);
    const auto view = render({v, f}, camera_at(30, 20, 3.0));
    for (double x : view.rgb.data) CHECK(x == 0.5);
}

TEST_CASE("sphere looks the same from azimuth 0 and 180") {
    const auto mesh = make_icosphere(2);
    const Surface s{mesh.vertices, mesh.faces()};
    const auto a = render(s, camera_at(0, 0, 3.0));
    const auto b = render(s, camera_at(180, 0, 3.0));
    double worst = 0.0;
    for (std::size_t i = 0; i < a.rgb.data.size(); ++i) worst = std::max(worst, std::abs(a.rgb.data[i] - b.rgb.data[i]));
    CHECK(worst <= 1e-6);
}

TEST_CASE("render is a pure function") {
    const auto mesh = make_icosphere(1);
    const Surface s{mesh.vertices, mesh.faces()};
    const auto a = render(s, camera_at(40, 25, 3.0));
    const auto b = render(s, camera_at(40, 25, 3.0));
    CHECK(a.rgb.data == b.rgb.data);
    for (double x : a.rgb.data) {
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
    }
}

TEST_CASE("backward is zero for zero input and linear") {
    const auto scene = folded_quad();
    const auto view = render(scene.surface(), camera_at(20, 30, 2.5));
    const Image zero(64, 64, 0.0);
    CHECK(render_backward(view, zero, scene.surface()).cwiseAbs().maxCoeff() == 0.0);

    std::mt19937 gen(1);
    std::normal_distribution<double> n;
    Image g1(64, 64), g2(64, 64), mix(64, 64);
    for (std::size_t i = 0; i < g1.data.size(); ++i) {
        g1.data[i] = n(gen);
        g2.data[i] = n(gen);
        mix.data[i] = 2.0 * g1.data[i] - 3.0 * g2.data[i];
    }
    const Positions a = render_backward(view, mix, scene.surface());
    const Positions b = 2.0 * render_backward(view, g1, scene.surface()) - 3.0 * render_backward(view, g2, scene.surface());
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, a.cwiseAbs().maxCoeff()));
}

TEST_CASE("backward matches central differences on interior pixels") {
    auto scene = folded_quad();
    const Camera cam = camera_at(20, 30, 2.5);
    const auto view = render(scene.surface(), cam);

    // Pixels whose 5x5 neighbourhood is covered by the same face.
    std::vector<std::pair<int, int>> interior;
    for (int y = 2; y < 62; ++y)
        for (int x = 2; x < 62; ++x) {
            const auto& px = view.aux[static_cast<std::size_t>(y * 64 + x)];
            if (px.kind != PixelKind::Covered) continue;
            bool ok = true;
            for (int dy = -2; dy <= 2 && ok; ++dy)
                for (int dx = -2; dx <= 2 && ok; ++dx) {
                    const auto& q = view.aux[static_cast<std::size_t>((y + dy) * 64 + x + dx)];
                    ok = q.kind == PixelKind::Covered && q.face == px.face;
                }
            if (ok) interior.emplace_back(x, y);
        }
    REQUIRE(interior.size() >= 5);

    std::mt19937 gen(3);
    std::shuffle(interior.begin(), interior.end(), gen);
    std::uniform_real_distribution<double> u(0.2, 1.0);
    const double h = 1e-4;
    for (int k = 0; k < 5; ++k) {
        const auto [x, y] = interior[static_cast<std::size_t>(k)];
        Image w(64, 64, 0.0);
        for (int ch = 0; ch < 3; ++ch) w.at(x, y, ch) = u(gen);
        const Positions analytic = render_backward(view, w, scene.surface());
        Positions fd = Positions::Zero(4, 3);
        for (int v = 0; v < 4; ++v)
            for (int c = 0; c < 3; ++c) {
                const double keep = scene.v(v, c);
                scene.v(v, c) = keep + h;
                const double lp = weighted(render(scene.surface(), cam).rgb, w);
                scene.v(v, c) = keep - h;
                const double lm = weighted(render(scene.surface(), cam).rgb, w);
                scene.v(v, c) = keep;
                fd(v, c) = (lp - lm) / (2.0 * h);
            }
        CAPTURE(x);
        CAPTURE(y);
        CHECK((fd - analytic).norm() / analytic.norm() < 1e-2);
    }
}

TEST_CASE("translating a silhouette moves a ramp-weighted loss as the gradient predicts") {
    auto scene = flat_quad(0.5, 0.0, 1.0);
    const Camera cam = camera_at(0, 0, 3.0);
    const auto view = render(scene.surface(), cam);
    Image w(64, 64);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            for (int ch = 0; ch < 3; ++ch) w.at(x, y, ch) = (x + 1.0) / 64.0 + 0.3 * (y + 1.0) / 64.0;

    const Positions g = render_backward(view, w, scene.surface());
    const double world_per_pixel = 2.0 * 3.0 * std::tan(22.5 * std::numbers::pi / 180.0) / 64.0;
    const double delta = 0.01 * world_per_pixel;
    for (const Eigen::RowVector3d dir : {Eigen::RowVector3d(1, 0, 0), Eigen::RowVector3d(0, 1, 0)}) {
        const double analytic = (g * dir.transpose()).sum();
        Scene plus = scene, minus = scene;
        plus.v.rowwise() += delta * dir;
        minus.v.rowwise() -= delta * dir;
        const double fd = (weighted(render(plus.surface(), cam).rgb, w) - weighted(render(minus.surface(), cam).rgb, w)) /
                          (2.0 * delta);
        CAPTURE(dir);
        CHECK(std::abs(analytic) > 0.0);
        CHECK(std::abs(fd - analytic) <= 0.05 * std::abs(fd));
    }
}

TEST_CASE("hidden faces receive no gradient from covered pixels") {
    Scene front = flat_quad(0.6, 0.2, 0.9);
    const Scene back = flat_quad(0.3, -0.3, 0.4);
    Scene both;
    both.v.resize(8, 3);
    both.v << front.v, back.v;
    both.f.resize(4, 3);
    both.f << front.f, (back.f.array() + 4).matrix();
    both.c.resize(8, 3);
    both.c << front.c, back.c;
    const auto view = render(both.surface(), camera_at(0, 0, 3.0));
    Image w(64, 64, 0.0);
    int covered = 0;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            if (view.aux[static_cast<std::size_t>(y * 64 + x)].kind == PixelKind::Covered) {
                CHECK(view.aux[static_cast<std::size_t>(y * 64 + x)].face < 2);
                for (int ch = 0; ch < 3; ++ch) w.at(x, y, ch) = 1.0;
                ++covered;
            }
    CHECK(covered > 0);
    const Positions g = render_backward(view, w, both.surface());
    CHECK(g.bottomRows(4).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a band pixel alone produces vertex gradient") {
    const auto scene = flat_quad(0.5, 0.0, 0.9);
    const auto view = render(scene.surface(), camera_at(0, 0, 3.0));
    int found = -1;
    for (std::size_t i = 0; i < view.aux.size() && found < 0; ++i)
        if (view.aux[i].kind == PixelKind::Band) found = static_cast<int>(i);
    REQUIRE(found >= 0);
    Image w(64, 64, 0.0);
    for (int ch = 0; ch < 3; ++ch) w.at(found % 64, found / 64, ch) = 1.0;
    CHECK(render_backward(view, w, scene.surface()).norm() > 0.0);
}

TEST_CASE("camera sampling stays in range and covers it") {
    Rng rng(42);
    const auto cams = sample_cameras(rng, 2.0, Eigen::Vector3d::Zero(), 10000);
    double az_lo = 1e9, az_hi = -1e9, el_lo = 1e9, el_hi = -1e9, d_lo = 1e9, d_hi = -1e9;
    for (const auto& c : cams) {
        az_lo = std::min(az_lo, c.azimuth_deg);
        az_hi = std::max(az_hi, c.azimuth_deg);
        el_lo = std::min(el_lo, c.elevation_deg);
        el_hi = std::max(el_hi, c.elevation_deg);
        d_lo = std::min(d_lo, c.distance);
        d_hi = std::max(d_hi, c.distance);
    }
    CHECK(az_lo >= -180.0);
    CHECK(az_hi <= 180.0);
    CHECK(el_lo >= 0.0);
    CHECK(el_hi <= 90.0);
    CHECK(d_lo >= 2.0);
    CHECK(d_hi <= 4.0);
    CHECK(az_lo <= -180.0 + 3.6);
    CHECK(az_hi >= 180.0 - 3.6);
    CHECK(el_lo <= 0.9);
    CHECK(el_hi >= 89.1);
    CHECK(d_lo <= 2.02);
    CHECK(d_hi >= 3.98);
}

TEST_CASE("camera sampling is deterministic and draws three uniforms per camera") {
    Rng a(7), b(7), c(7);
    const auto ca = sample_cameras(a, 1.5, Eigen::Vector3d::Zero(), 4);
    const auto cb = sample_cameras(b, 1.5, Eigen::Vector3d::Zero(), 4);
    REQUIRE(ca.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(ca[i].azimuth_deg == cb[i].azimuth_deg);
        CHECK(ca[i].elevation_deg == cb[i].elevation_deg);
        CHECK(ca[i].distance == cb[i].distance);
    }
    for (int i = 0; i < 12; ++i) (void)c.uniform();
    CHECK(a.next_u32() == c.next_u32());
}

TEST_CASE("camera validation") {
    Camera c;
    c.distance = 0.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = Camera{};
    c.fov_y_deg = 180.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = Camera{};
    c.image_size = 4;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
