#include <algorithm>

#include "doctest.h"
#include "sinai/errors.hpp"
#include "sinai/compare.hpp"
#include "sinai/tables.hpp"
#include "support/generators.hpp"

using namespace sinai;

namespace {
const std::vector<Table>& random_tables() {
    static const std::vector<Table> ts = [] {
        gen::Rng rng(2024);
        std::vector<Table> v;
        for (int k = 0; k < 6; ++k) v.push_back(gen::table(rng));
        return v;
    }();
    return ts;
}
}  // namespace

TEST_CASE("chord length is symmetric under swapping its ends") {
    gen::Rng rng(1);
    for (const Table& t : random_tables())
        for (int n = 0; n < 40; ++n) {
            const Cell I = gen::cell(rng, 2);
            const int a = gen::uniform_int(rng, 0, 1), b = gen::uniform_int(rng, 0, 1);
            if (a == b && I == Cell{}) continue;
            const double s = gen::uniform(rng, 0, t.scatterer(a).perimeter());
            const double s2 = gen::uniform(rng, 0, t.scatterer(b).perimeter());
            const TauPair f = tau_pair(t, I, a, b, s, s2), r = tau_pair(t, -I, b, a, s2, s);
            CHECK(std::abs(f.tau - r.tau) <= 1e-14 * std::max(1.0, f.tau));
            const Scatterer &A = t.scatterer(a), &B = t.scatterer(b);
            const double gap = norm(I.vec() + B.center() - A.center()) - A.outer_radius() - B.outer_radius();
            CHECK(f.tau >= gap - 1e-12);
        }
}

TEST_CASE("cycle length bounds the net translation") {
    gen::Rng rng(2);
    for (const Table& t : random_tables()) {
        bool trunc = false;
        const auto words = enumerate_words(t, 3, 1.3, 100000, t.cell_bound(), &trunc);
        REQUIRE_FALSE(words.empty());
        for (int n = 0; n < 30; ++n) {
            const OrbitWord& w = words[static_cast<size_t>(gen::uniform_int(rng, 0, static_cast<int>(words.size()) - 1))];
            Cell net{};
            for (Cell c : w.I) net = net + c;
            const double L = length_functional(t, w, gen::params(rng, t, w)).L;
            CHECK(L >= norm(net.vec()) - 1e-12);
        }
    }
}

TEST_CASE("canonical form is idempotent and ignores rotation and reversal") {
    gen::Rng rng(3);
    const Table& t = random_tables().front();
    bool trunc = false;
    const auto words = enumerate_words(t, 4, 1.3, 100000, t.cell_bound(), &trunc);
    for (int n = 0; n < 100; ++n) {
        const OrbitWord& w = words[static_cast<size_t>(gen::uniform_int(rng, 0, static_cast<int>(words.size()) - 1))];
        const OrbitWord c = canonical(w);
        CHECK(canonical(c) == c);
        CHECK(canonical(rotate(w, gen::uniform_int(rng, 0, w.q() - 1))) == c);
        CHECK(canonical(reverse(w)) == c);
        CHECK(parse_orbit_word(to_string(c)) == c);
    }
}

TEST_CASE("arc distance is a metric on the circle") {
    gen::Rng rng(4);
    for (int n = 0; n < 500; ++n) {
        const double per = gen::uniform(rng, 0.5, 3.0);
        const double a = gen::uniform(rng, 0, per), b = gen::uniform(rng, 0, per), c = gen::uniform(rng, 0, per);
        const double ab = arc_distance(per, a, b).value, ba = arc_distance(per, b, a).value;
        CHECK(ab == doctest::Approx(ba).epsilon(1e-14));
        CHECK(ab <= per / 2 + 1e-15);
        CHECK(ab >= 0.0);
        CHECK(ab <= arc_distance(per, a, c).value + arc_distance(per, c, b).value + 1e-14);
    }
}

TEST_CASE("billiard map runs backwards under time reversal") {
    gen::Rng rng(5);
    for (const Table& t : random_tables())
        for (int n = 0; n < 10; ++n) {
            const int l = gen::uniform_int(rng, 0, 1);
            const CollisionCoord c{{0, 0, l}, gen::uniform(rng, 0, t.scatterer(l).perimeter()), gen::uniform(rng, -1.4, 1.4)};
            const MapOrbit fwd = billiard_map(t, c, 5);
            if (!fwd.complete()) continue;
            const MapOrbit back = billiard_map(t, time_reverse(fwd.points.back()), 5);
            if (!back.complete()) continue;
            const CollisionCoord& e = back.points.back();
            CHECK(e.label.l == l);
            const double per = t.scatterer(l).perimeter();
            const double ds = std::abs(std::remainder(e.s - c.s, per));
            CHECK(ds < 1e-8);
            CHECK(std::abs(e.phi + c.phi) < 1e-8);
        }
}

TEST_CASE("rigid translation preserves orbit lengths") {
    gen::Rng rng(6);
    const OrbitWord w = parse_orbit_word("(0,0;0),(-1,-1;1),(0,0;0)");
    for (const Table& t : random_tables()) {
        const Vec2 d{gen::uniform(rng, -0.05, 0.05), gen::uniform(rng, -0.05, 0.05)};
        std::vector<SupportCurve> moved;
        for (const auto& c : t.curves()) moved.push_back(c.translated(d));
        const Table m = Table::build(moved);
        const double a = find_generalized_orbit(t, w).length, b = find_generalized_orbit(m, w).length;
        CHECK(std::abs(a - b) <= 1e-9);
    }
}

TEST_CASE("report comparison is symmetric on random reports") {
    gen::Rng rng(7);
    for (int n = 0; n < 50; ++n) {
        EnrichedTable a, b;
        for (int k = 0; k < 12; ++k) {
            EnrichedEntry e;
            e.key = "w" + std::to_string(k);
            e.EL = gen::uniform(rng, 0.5, 2.0);
            if (gen::uniform_int(rng, 0, 3) > 0) a.entries.push_back(e);
            e.EL += gen::uniform(rng, -1e-6, 1e-6);
            if (gen::uniform_int(rng, 0, 3) > 0) b.entries.push_back(e);
        }
        const ComparisonReport ab = compare_reports(2, a, 2, b), ba = compare_reports(2, b, 2, a);
        CHECK(ab.max_deviation == ba.max_deviation);
        CHECK(ab.max_deviation <= 1e-6);
        CHECK(ab.unmatched_a == ba.unmatched_b);
        CHECK(ab.rows.size() + ab.unmatched_a.size() + ab.unmatched_b.size() >= std::max(a.entries.size(), b.entries.size()));
    }
}
