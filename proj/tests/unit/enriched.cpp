#include <random>

#include "doctest.h"
#include "sinai/errors.hpp"
#include "sinai/enriched.hpp"
#include "sinai/tables.hpp"
#include "support/generators.hpp"

using namespace sinai;

namespace {
const Table& ref() {
    static const Table t = Table::build(tables::reference());
    return t;
}
const char* kMixed = "(0,0;0),(-1,-1;1),(-1,0;0)";
}  // namespace

TEST_CASE("arc distance takes the shorter way round") {
    CHECK(arc_distance(2.0, 0.1, 0.5).value == doctest::Approx(0.4));
    CHECK(arc_distance(2.0, 0.1, 0.5).sub_lo == 1.0);
    CHECK(arc_distance(2.0, 0.1, 1.9).value == doctest::Approx(0.2));
    CHECK(arc_distance(2.0, 0.1, 1.9).sub_hi == -1.0);
    const ArcDistance k = arc_distance(2.0, 0.7, 0.7);
    CHECK(k.value == 0.0);
    CHECK(k.kink());
}

TEST_CASE("bitangents of two disks have the analytic lengths") {
    const Scatterer a(SupportCurve::circle({0.0, 0.0}, 0.1)), b(SupportCurve::circle({0.0, 0.0}, 0.2));
    const double d = 0.6;
    const auto ts = common_tangents(a, {0, 0}, b, {d, 0});
    REQUIRE(ts.size() == 4);
    int outer = 0, inner = 0;
    for (const auto& t : ts) {
        CHECK(t.residual < 1e-10);
        if (t.kind == Bitangent::Kind::outer) {
            ++outer;
            CHECK(t.length == doctest::Approx(std::sqrt(d * d - 0.01)).epsilon(1e-10));
        } else {
            ++inner;
            CHECK(t.length == doctest::Approx(std::sqrt(d * d - 0.09)).epsilon(1e-10));
        }
    }
    CHECK(outer == 2);
    CHECK(inner == 2);
}

TEST_CASE("tangent points from an exterior point") {
    const Scatterer s(SupportCurve::circle({0.0, 0.0}, 0.2));
    const Vec2 y{0.5, 0.1};
    const TangentPair tp = tangents_from_point(s, {0, 0}, y);
    const double len = std::sqrt(dot(y, y) - 0.04);
    CHECK(norm(tp.p_minus - y) == doctest::Approx(len).epsilon(1e-10));
    CHECK(norm(tp.p_plus - y) == doctest::Approx(len).epsilon(1e-10));
    CHECK(norm(tp.p_plus - tp.p_minus) > 0.1);
}

TEST_CASE("shortest path around a disk is tangent, arc, tangent") {
    const Table t = Table::build(tables::single_disk(0.2));
    const Vec2 x{0.2, 0.5}, y{0.8, 0.5};
    const DlPath p = dl_geodesic(t, {x, std::nullopt, 0.0}, {y, std::nullopt, 0.0});
    const double D = 0.3, r = 0.2;
    const double expect = 2.0 * std::sqrt(D * D - r * r) + r * (kPi - 2.0 * std::acos(r / D));
    CHECK(p.length == doctest::Approx(expect).epsilon(1e-9));
    CHECK_FALSE(segment_free(t, x, y));
}

TEST_CASE("link set contains the facing point and misses the far side") {
    const Table t = Table::build(tables::two_disks(0.2, 0.2));
    const LinkSet ls = link_set(t, {0, 0, 0}, {0, 0, 1});
    REQUIRE_FALSE(ls.empty());
    const Scatterer& b = t.scatterer(1);
    CHECK(ls.locate(b.angle_to_arclength(1.25 * kPi)) >= 0);
    CHECK(ls.locate(b.angle_to_arclength(0.25 * kPi)) < 0);
}

TEST_CASE("a regular orbit is its own enriched minimizer") {
    const OrbitWord w = parse_orbit_word("(0,0;0),(-1,-1;1),(0,0;0)");
    const BilliardCycle c = minimize_EL(ref(), w);
    const GeneralizedOrbit o = find_generalized_orbit(ref(), w);
    CHECK(c.orbit);
    CHECK(c.EL == o.length);
    for (size_t k = 0; k < c.e.size(); ++k) CHECK(c.e[k] == c.s[k]);
}

TEST_CASE("blocked chord chains wrap the obstacle and stay minimal") {
    const OrbitWord w = parse_orbit_word(kMixed);
    LinkSetStore store(ref());
    const BilliardCycle c = minimize_EL(ref(), store, w);
    CHECK_FALSE(c.orbit);
    CHECK(c.certificate < 1e-8);
    double arcs = 0.0, chords = 0.0;
    for (double a : c.arcs) arcs += a;
    for (double x : c.chords) chords += x;
    CHECK(arcs > 0.0);
    CHECK(c.EL == doctest::Approx(arcs + chords).epsilon(1e-14));
    bool tangential = false;
    for (auto tr : c.transitions) tangential = tangential || tr == BilliardCycle::Transition::tangential;
    CHECK(tangential);

    // each chord is itself a shortest path between its end points
    const auto labels = lifted_labels(w);
    for (int k = 0; k < w.q(); ++k) {
        const auto ku = static_cast<size_t>(k);
        const Vec2 from = lift_scatterer(ref(), labels[ku]).at(c.s[ku]).point;
        const double e = c.e[(ku + 1) % c.e.size()];
        const Vec2 to = lift_scatterer(ref(), labels[ku + 1]).at(e).point;
        const DlPath p = dl_geodesic(ref(), {from, labels[ku], c.s[ku]}, {to, labels[ku + 1], e});
        CHECK(p.length == doctest::Approx(c.chords[ku]).epsilon(1e-9));
    }

    // no sampled feasible point does better
    const auto prs = [&] {
        std::vector<std::pair<const LinkSet*, const LinkSet*>> v;
        for (int k = 0; k < w.q(); ++k) {
            LiftedLabel prev = labels[static_cast<size_t>(k > 0 ? k - 1 : w.q() - 1)];
            if (k == 0) prev = {prev.i - labels.back().i, prev.j - labels.back().j, prev.l};
            v.push_back({&store.get(prev, labels[static_cast<size_t>(k)]),
                         &store.get(labels[static_cast<size_t>(k + 1)], labels[static_cast<size_t>(k)])});
        }
        return v;
    }();
    gen::Rng rng(17);
    for (int n = 0; n < 300; ++n) {
        std::vector<double> e, s;
        for (const auto& [in, out] : prs) {
            e.push_back(gen::in_link_set(rng, *in));
            s.push_back(gen::in_link_set(rng, *out));
        }
        CHECK(enriched_length(ref(), w, e, s).value >= c.EL - 1e-12);
    }
}

TEST_CASE("enriched spectrum: orbit entries agree with the periodic-orbit spectrum") {
    EnrichedOptions eo;
    eo.q_max = 3;
    eo.T_max = 1.0;
    eo.workers = 1;
    const EnrichedTable et = enriched_spectrum(ref(), eo);
    SpectrumOptions so;
    so.q_max = 3;
    so.T_max = 1.0;
    const SpectrumTable st = enumerate_spectrum(ref(), so);
    int orbits = 0;
    for (const auto& e : et.entries) {
        if (e.kind == EnrichedEntry::Kind::boundary) {
            CHECK(e.EL == ref().scatterer(e.boundary_scatterer).perimeter());
            continue;
        }
        if (e.kind != EnrichedEntry::Kind::orbit) continue;
        const SpectrumEntry* s = st.find(e.key);
        REQUIRE(s != nullptr);
        CHECK(std::abs(s->orbit.length - e.EL) <= 1e-9);
        CHECK(e.doubled_class == (e.q % 2 == 1));
        ++orbits;
    }
    CHECK(orbits > 0);
    eo.workers = 2;
    const EnrichedTable again = enriched_spectrum(ref(), eo);
    REQUIRE(again.entries.size() == et.entries.size());
    for (size_t k = 0; k < et.entries.size(); ++k) {
        CHECK(again.entries[k].key == et.entries[k].key);
        CHECK(again.entries[k].EL == et.entries[k].EL);
    }
}

TEST_CASE("infeasible points are rejected") {
    const Table t = Table::build(tables::two_disks(0.2, 0.2));
    LinkSetStore store(t);
    const OrbitWord w = parse_orbit_word("(0,0;0),(0,0;1),(0,0;0)");
    const Scatterer& a = t.scatterer(0);
    // the far side of disk 0 is hidden from disk 1
    const double far = a.angle_to_arclength(1.25 * kPi);
    const double near0 = a.angle_to_arclength(0.25 * kPi), near1 = t.scatterer(1).angle_to_arclength(1.25 * kPi);
    CHECK_NOTHROW(require_feasible(store, w, {near0, near1}, {near0, near1}));
    CHECK_THROWS_AS(require_feasible(store, w, {far, near1}, {far, near1}), InfeasiblePoint);
}
