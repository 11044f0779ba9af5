#include <sstream>

#include "doctest.h"
#include "sinai/errors.hpp"
#include "sinai/geometry.hpp"
#include "sinai/tables.hpp"
#include "support/oracles.hpp"

using namespace sinai;

TEST_CASE("circle support function traces the circle") {
    const SupportCurve c = SupportCurve::circle({0.3, 0.6}, 0.2);
    for (double th : {0.0, 0.7, 2.0, 4.5}) {
        const Vec2 p = c.point(th);
        CHECK(norm(p - Vec2{0.3, 0.6}) == doctest::Approx(0.2).epsilon(1e-14));
        CHECK(c.radius_of_curvature(th) == doctest::Approx(0.2).epsilon(1e-14));
    }
    CHECK(c.perimeter() == doctest::Approx(2.0 * kPi * 0.2).epsilon(1e-14));
}

TEST_CASE("perimeter equals 2 pi a0 for a Fourier support function") {
    const SupportCurve c(0.38, {0.25, 0.02, 0.004}, {0.25, -0.01, 0.003});
    CHECK(c.perimeter() == doctest::Approx(2.0 * kPi * 0.38).epsilon(1e-12));
    const Scatterer s(c);
    CHECK(s.perimeter() == doctest::Approx(2.0 * kPi * 0.38).epsilon(1e-10));
}

TEST_CASE("radius of curvature sign change is a convexity error") {
    const SupportCurve bad(1.0, {0.0, 0.6}, {0.0, 0.0});
    const ConvexityScan scan = scan_convexity(bad);
    CHECK(scan.min_radius == doctest::Approx(1.0 - 1.8).epsilon(1e-9));
    CHECK_THROWS_AS(require_convex(bad), ConvexityError);
    CHECK_NOTHROW(require_convex(SupportCurve(1.0, {0.0, 0.3}, {0.0, 0.0})));
}

TEST_CASE("arclength and normal angle are inverse to each other") {
    const Scatterer s(SupportCurve(0.38, {0.25, 0.02}, {0.25, 0.0}));
    for (double th : {0.1, 1.3, 3.0, 5.9}) {
        const double a = s.angle_to_arclength(th);
        CHECK(s.arclength_to_angle(a) == doctest::Approx(th).epsilon(1e-12));
        const BoundaryPoint bp = s.at(a);
        CHECK(norm(bp.point - s.curve().point(th)) < 1e-12);
        CHECK(dot(bp.normal, bp.tangent) == doctest::Approx(0.0).scale(1.0));
    }
}

TEST_CASE("ray hits a disk at the analytic distance") {
    const Scatterer s(SupportCurve::circle({0.0, 0.0}, 0.25));
    const auto hit = ray_intersect(s, {1.0, 0.0}, {0.0, 0.1}, {1.0, 0.0});
    REQUIRE(hit.has_value());
    CHECK(hit->t == doctest::Approx(1.0 - std::sqrt(0.25 * 0.25 - 0.01)).epsilon(1e-12));
    CHECK_FALSE(ray_intersect(s, {1.0, 0.0}, {0.0, 0.3}, {1.0, 0.0}).has_value());
}

TEST_CASE("segment clearance against a disk matches point-segment distance") {
    const Scatterer s(SupportCurve::circle({0.5, 0.5}, 0.1));
    const Vec2 a{0.0, 0.0}, b{1.0, 0.3};
    const double expect = oracle::point_segment({0.5, 0.5}, a, b) - 0.1;
    CHECK(segment_clearance(s, {0, 0}, a, b) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("two disks: minimal gap is the centre distance minus the radii") {
    const Table t = Table::build(tables::two_disks(0.15, 0.2));
    CHECK(t.tau_min() == doctest::Approx(std::sqrt(0.5) - 0.35).epsilon(1e-9));
}

TEST_CASE("horizon certificates") {
    const Table ref = Table::build(tables::reference());
    CHECK(ref.finite_horizon());
    CHECK(ref.tau_max() >= ref.tau_min());
    CHECK(ref.cell_bound() == static_cast<int>(std::ceil(ref.tau_max())) + 1);

    const Table one = Table::build(tables::single_disk(0.2));
    CHECK_FALSE(one.finite_horizon());
    REQUIRE(one.horizon().witness.has_value());
    // the horizontal corridor of a single disk is the band 0.7 .. 1.3 in normal offset
    CHECK(one.horizon().witness->width() == doctest::Approx(0.6).epsilon(1e-9));
    CHECK_THROWS_AS(one.require_finite_horizon(), HorizonViolation);
}

TEST_CASE("overlapping scatterers are rejected with their ids") {
    try {
        Table::build(tables::two_disks(0.4, 0.35));
        FAIL("expected InvalidTable");
    } catch (const InvalidTable& e) {
        CHECK(std::string(e.what()).find("scatterers 0 and 1") != std::string::npos);
    }
}

TEST_CASE("table file round trip is exact") {
    std::stringstream ss;
    const auto curves = tables::tangency();
    write_table_file(ss, curves);
    const TableFile tf = read_table_file(ss);
    REQUIRE(tf.curves.size() == curves.size());
    for (size_t k = 0; k < curves.size(); ++k) CHECK(tf.curves[k].coeffs() == curves[k].coeffs());
}

TEST_CASE("table file errors carry line numbers") {
    std::stringstream ss("version = 1\ntorus = unit_square\n[scatterer]\nfourier_coeffs = 0.2 0.5 x\n");
    try {
        read_table_file(ss);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 4);
    }
    std::stringstream missing("version = 1\ntorus = unit_square\n[scatterer]\n");
    CHECK_THROWS_AS(read_table_file(missing), ParseError);
}

TEST_CASE("translation changes only the centre") {
    const SupportCurve c(0.38, {0.25, 0.02}, {0.25, 0.0});
    const SupportCurve m = c.translated({0.3, 0.7});
    CHECK(m.center().x == doctest::Approx(0.55));
    CHECK(m.center().y == doctest::Approx(0.95));
    CHECK(m.perimeter() == doctest::Approx(c.perimeter()).epsilon(1e-15));
}
