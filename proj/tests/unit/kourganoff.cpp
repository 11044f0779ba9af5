#include "doctest.h"
#include "sinai/errors.hpp"
#include "sinai/kourganoff.hpp"
#include "sinai/tables.hpp"

using namespace sinai;

namespace {
const HeightProfile& prof() {
    static const HeightProfile p(Table::build(tables::reference()));
    return p;
}
// within the clamp band of the disk, away from the ellipse
const Vec2 kCurved{0.75 + 0.23 * std::cos(1.0), 0.75 + 0.23 * std::sin(1.0)};
}  // namespace

TEST_CASE("clamp profile is the identity near zero and saturates at one") {
    const auto z = clamp_profile(0.0);
    CHECK(z[0] == 0.0);
    CHECK(z[1] == doctest::Approx(1.0));
    CHECK(clamp_profile(-0.3)[0] == -0.3);
    CHECK(clamp_profile(1.0)[0] == doctest::Approx(1.0));
    CHECK(clamp_profile(2.0)[0] == 1.0);
    CHECK(std::abs(clamp_profile(1.0 - 1e-7)[1]) < 1e-5);
    double prev = -1.0;
    for (double t = 0.0; t <= 1.0; t += 0.01) {
        const double v = clamp_profile(t)[0];
        CHECK(v >= prev);
        prev = v;
    }
    const double h = 1e-6, t = 0.4;
    CHECK(clamp_profile(t)[1] == doctest::Approx((clamp_profile(t + h)[0] - clamp_profile(t - h)[0]) / (2 * h)).epsilon(1e-6));
    CHECK(clamp_profile(t)[2] == doctest::Approx((clamp_profile(t + h)[1] - clamp_profile(t - h)[1]) / (2 * h)).epsilon(1e-5));
}

TEST_CASE("height vanishes on the boundary and is positive inside") {
    const Scatterer& d = prof().table().scatterer(1);
    for (double s = 0.0; s < d.perimeter(); s += d.perimeter() / 17) CHECK(std::abs(prof().phi(d.at(s).point)) < 1e-12);
    CHECK(prof().phi({0.75, 0.25}) > 0.0);
    CHECK(prof().phi(kCurved) > 0.0);
    CHECK(prof().phi({0.75, 0.75}) < 0.0);
    CHECK(prof().seam_gradient_min(64) > 0.0);
}

TEST_CASE("height derivatives match finite differences") {
    const double h = 1e-6;
    const auto e = prof().eval(kCurved);
    const auto ex = [&](double dx, double dy) { return prof().eval({kCurved.x + dx, kCurved.y + dy}); };
    CHECK(e.grad.x == doctest::Approx((ex(h, 0).phi - ex(-h, 0).phi) / (2 * h)).epsilon(1e-6));
    CHECK(e.grad.y == doctest::Approx((ex(0, h).phi - ex(0, -h).phi) / (2 * h)).epsilon(1e-6));
    CHECK(e.hxx == doctest::Approx((ex(h, 0).grad.x - ex(-h, 0).grad.x) / (2 * h)).epsilon(1e-5));
    CHECK(e.hxy == doctest::Approx((ex(0, h).grad.x - ex(0, -h).grad.x) / (2 * h)).epsilon(1e-5));
    CHECK(e.hyy == doctest::Approx((ex(0, h).grad.y - ex(0, -h).grad.y) / (2 * h)).epsilon(1e-5));
}

TEST_CASE("flat where every obstacle is beyond the clamp") {
    const MetricPatch m = metric_coeffs(prof(), 0.2, {0.75, 0.25});
    CHECK(m.E == 1.0);
    CHECK(m.F == 0.0);
    CHECK(m.G == 1.0);
    for (auto& a : m.gamma)
        for (auto& b : a)
            for (double g : b) CHECK(g == 0.0);
}

TEST_CASE("metric is induced by the graph of the square root") {
    const double eps = 0.3;
    const auto e = prof().eval(kCurved);
    const double zx = e.grad.x / (2 * std::sqrt(e.phi)), zy = e.grad.y / (2 * std::sqrt(e.phi));
    const MetricPatch m = metric_coeffs(prof(), eps, kCurved);
    CHECK(m.E == doctest::Approx(1 + eps * eps * zx * zx).epsilon(1e-12));
    CHECK(m.F == doctest::Approx(eps * eps * zx * zy).epsilon(1e-12));
    CHECK(m.G == doctest::Approx(1 + eps * eps * zy * zy).epsilon(1e-12));
    const MetricPatch z = metric_coeffs(prof(), 0.0, kCurved);
    CHECK(z.E == 1.0);
    CHECK(z.G == 1.0);
}

TEST_CASE("Christoffel symbols agree with differentiated metric") {
    const double eps = 0.3, h = 1e-6;
    auto g = [&](Vec2 p) {
        const MetricPatch m = metric_coeffs(prof(), eps, p);
        return std::array<std::array<double, 2>, 2>{{{m.E, m.F}, {m.F, m.G}}};
    };
    std::array<std::array<std::array<double, 2>, 2>, 2> dg{};  // dg[l][i][j] = ∂_l g_ij
    for (int l = 0; l < 2; ++l) {
        const Vec2 d = l == 0 ? Vec2{h, 0} : Vec2{0, h};
        const auto gp = g(kCurved + d), gm = g(kCurved - d);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) dg[l][i][j] = (gp[i][j] - gm[i][j]) / (2 * h);
    }
    const auto g0 = g(kCurved);
    const double det = g0[0][0] * g0[1][1] - g0[0][1] * g0[1][0];
    const double inv[2][2] = {{g0[1][1] / det, -g0[0][1] / det}, {-g0[1][0] / det, g0[0][0] / det}};
    const MetricPatch m = metric_coeffs(prof(), eps, kCurved);
    double scale = 0.0;
    for (auto& a : m.gamma)
        for (auto& b : a)
            for (double v : b) scale = std::max(scale, std::abs(v));
    REQUIRE(scale > 1e-3);
    for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                double expect = 0.0;
                for (int l = 0; l < 2; ++l) expect += 0.5 * inv[k][l] * (dg[i][j][l] + dg[j][i][l] - dg[l][i][j]);
                CHECK(std::abs(m.gamma[k][i][j] - expect) <= 1e-5 * scale);
            }
}

TEST_CASE("geodesics keep unit speed and retrace when reversed") {
    const double eps = 0.1, T = 0.3;
    const SurfaceState s0 = lift_state(prof(), eps, kCurved, {-std::sin(1.2), std::cos(1.2)});
    CHECK(s0.speed() == doctest::Approx(1.0).epsilon(1e-14));
    const GeodesicPath fwd = integrate_geodesic(prof(), eps, s0, T);
    CHECK(fwd.speed_drift < 1e-8);
    CHECK(fwd.length == doctest::Approx(T).epsilon(1e-8));
    SurfaceState back = fwd.states.back();
    for (double& v : back.V) v = -v;
    const GeodesicPath rev = integrate_geodesic(prof(), eps, back, T);
    const SurfaceState& end = rev.states.back();
    double err = 0.0;
    for (int c = 0; c < 3; ++c) err = std::max(err, std::abs(end.X[c] - s0.X[c]));
    CHECK(err <= 1e-6);
}

TEST_CASE("seam geodesic runs once round the obstacle") {
    for (int l = 0; l < 2; ++l) {
        const ClosedGeodesic c = seam_geodesic(prof(), l);
        CHECK(c.length == doctest::Approx(prof().table().scatterer(l).perimeter()).epsilon(1e-9));
    }
}

TEST_CASE("convergence test rejects points inside obstacles") {
    CHECK_THROWS_AS(convergence_test(prof(), {0.75, 0.75}, {1, 0}, 0.5), NotInA0);
}
