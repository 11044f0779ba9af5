#include <sstream>

#include "doctest.h"
#include "sinai/errors.hpp"
#include "sinai/perturbation.hpp"
#include "sinai/tables.hpp"

using namespace sinai;

namespace {
const Table& ref() {
    static const Table t = Table::build(tables::reference());
    return t;
}
const GeneralizedOrbit& two_cycle() {
    static const GeneralizedOrbit o = find_generalized_orbit(ref(), parse_orbit_word("(0,0;0),(-1,-1;1),(0,0;0)"));
    return o;
}
}  // namespace

TEST_CASE("zero amplitude leaves the table untouched") {
    const BumpField f = BumpField::make(ref(), 0, 0.3, 0.1, BumpField::Mode::tilt);
    const Table t = apply_perturbation(ref(), f, 0.0);
    for (int l = 0; l < ref().size(); ++l)
        for (double s : {0.0, 0.2, 0.9}) {
            const Vec2 a = ref().scatterer(l).at(s).point, b = t.scatterer(l).at(s).point;
            CHECK(a.x == b.x);
            CHECK(a.y == b.y);
        }
}

TEST_CASE("the bump vanishes outside its support") {
    const BumpField f = BumpField::make(ref(), 0, 0.5, 0.1, BumpField::Mode::move);
    const double per = ref().scatterer(0).perimeter();
    CHECK(f.lambda(ref(), 0.5) > 0.0);
    CHECK(f.lambda(ref(), 0.5 + 0.11) == 0.0);
    CHECK(f.lambda(ref(), std::fmod(0.5 + per / 2, per)) == 0.0);
    const BumpField r = BumpField::make(ref(), 0, 0.5, 0.1, BumpField::Mode::retract);
    CHECK(r.lambda(ref(), 0.5) < 0.0);
}

TEST_CASE("orbits away from the bump keep their length") {
    const GeneralizedOrbit& o = two_cycle();
    const double per = ref().scatterer(0).perimeter();
    const BumpField f = BumpField::make(ref(), 0, std::fmod(o.s[0] + per / 2, per), 0.05, BumpField::Mode::move);
    REQUIRE_FALSE(affected_by(ref(), o, f, 1e-3));
    const Table t = apply_perturbation(ref(), f, 1e-3);
    const GeneralizedOrbit p = find_generalized_orbit(t, o.word);
    CHECK(p.length == doctest::Approx(o.length).epsilon(1e-12));
}

TEST_CASE("first variation matches a central difference") {
    const GeneralizedOrbit& o = two_cycle();
    for (auto mode : {BumpField::Mode::move, BumpField::Mode::tilt}) {
        const BumpField f = BumpField::make(ref(), 0, o.s[0] + 0.03, 0.15, mode);
        const double P = p_lambda(ref(), o, f).value;
        const double h = 1e-5;
        auto L = [&](double eps) {
            const Table t = apply_perturbation(ref(), f, eps);
            return length_functional(t, o.word, carry_parameters(ref(), t, o.word, o.s)).L;
        };
        const double fd = (L(h) - L(-h)) / (2 * h);
        CHECK(std::abs(fd + P) <= 1e-6 * std::max(1.0, std::abs(P)));
    }
}

TEST_CASE("first order response predicts the shifted orbit") {
    const GeneralizedOrbit& o = two_cycle();
    const BumpField f = BumpField::make(ref(), 0, o.s[0] + 0.05, 0.15, BumpField::Mode::tilt);
    const ResponseReport r = first_order_response(ref(), o, f);
    CHECK(r.residual < 1e-10);
    REQUIRE(r.checks.size() == 3);
    for (const auto& c : r.checks) CHECK(c.length_error < 1e-2 * std::max(1.0, std::abs(r.P)));
    CHECK(r.checks.back().shift_error < r.checks.front().shift_error);
}

TEST_CASE("huge retractions are refused") {
    const BumpField f = BumpField::make(ref(), 1, 0.1, 0.02, BumpField::Mode::retract);
    CHECK_THROWS_AS(apply_perturbation(ref(), f, 10.0), PerturbationTooLarge);
}

TEST_CASE("mode names round trip") {
    for (auto m : {BumpField::Mode::move, BumpField::Mode::tilt, BumpField::Mode::retract})
        CHECK(parse_mode(to_string(m)) == m);
    CHECK_THROWS(parse_mode("wobble"));
}

TEST_CASE("logs survive a write and read and replay exactly") {
    std::vector<PerturbationStep> log;
    PerturbationStep a;
    a.field = BumpField::make(ref(), 0, 0.4, 0.1, BumpField::Mode::retract);
    a.eps = 3e-4;
    a.reason = "graze";
    a.affected = {"(0,0;0),(0,0;1),(0,0;0)"};
    a.outcome = "cleared";
    PerturbationStep b = a;
    b.field = BumpField::make(ref(), 1, 0.2, 0.08, BumpField::Mode::tilt);
    b.eps = 1e-4;
    b.reason = "collision";
    log = {a, b};
    std::stringstream ss;
    write_log(ss, log);
    const auto back = read_log(ss);
    REQUIRE(back.size() == 2);
    for (size_t k = 0; k < 2; ++k) {
        CHECK(back[k].eps == log[k].eps);
        CHECK(back[k].field.s0 == log[k].field.s0);
        CHECK(back[k].field.w == log[k].field.w);
        CHECK(back[k].field.scatterer == log[k].field.scatterer);
        CHECK(back[k].field.mode == log[k].field.mode);
    }
    const Table x = replay(ref(), log), y = replay(ref(), back);
    for (int l = 0; l < x.size(); ++l) {
        const Vec2 p = x.scatterer(l).at(0.37).point, q = y.scatterer(l).at(0.37).point;
        CHECK(p.x == q.x);
        CHECK(p.y == q.y);
    }
}
