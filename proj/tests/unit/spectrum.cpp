#include "doctest.h"
#include "sinai/errors.hpp"
#include "sinai/spectrum.hpp"
#include "sinai/tables.hpp"
#include "support/oracles.hpp"

using namespace sinai;

namespace {
const Table& ref() {
    static const Table t = Table::build(tables::reference());
    return t;
}
const char* kPeriod2 = "(0,0;0),(-1,-1;1),(0,0;0)";
}  // namespace

TEST_CASE("word text round trip") {
    const OrbitWord w = parse_orbit_word("(0,0;0),(-1,0;0),(-1,-1;1),(0,-1;0)");
    CHECK(w.q() == 3);
    CHECK(parse_orbit_word(to_string(w)) == w);
    CHECK_THROWS_AS(parse_orbit_word("(0,0;0)"), InvalidWord);
    CHECK_THROWS_AS(parse_orbit_word("(0,0;0),(0,0;1)"), InvalidWord);
}

TEST_CASE("canonical form is invariant under rotation and reversal") {
    const OrbitWord w = parse_orbit_word("(0,0;0),(-1,0;0),(-1,-1;1),(0,-1;0)");
    const OrbitWord c = canonical(w);
    for (int r = 0; r < w.q(); ++r) {
        CHECK(canonical(rotate(w, r)) == c);
        CHECK(canonical(reverse(rotate(w, r))) == c);
    }
    CHECK(canonical(c) == c);
}

TEST_CASE("words that repeat a scatterer in place are invalid") {
    OrbitWord w;
    w.rho = {0, 0};
    w.I = {Cell{}, Cell{}};
    CHECK_THROWS_AS(validate_word(ref(), w), InvalidWord);
}

TEST_CASE("cyclic tridiagonal solve matches a dense solve") {
    CyclicTridiag A;
    A.diag = {4.0, 5.0, 3.5, 6.0, 4.2};
    A.off = {0.3, -1.1, 0.7, 0.2, -0.9};
    Eigen::VectorXd b(5);
    b << 1.0, -2.0, 0.5, 3.0, 0.25;
    const Eigen::VectorXd x = solve_cyclic_tridiagonal(A, b);
    const Eigen::VectorXd y = A.dense().ldlt().solve(b);
    CHECK((x - y).norm() < 1e-13);
}

TEST_CASE("length functional gradient matches central differences") {
    const OrbitWord w = parse_orbit_word("(0,0;0),(-1,0;0),(-1,-1;1),(0,-1;0)");
    const std::vector<double> s{0.4, 1.9, 0.8};
    const LengthEval e = length_functional(ref(), w, s);
    for (int k = 0; k < 3; ++k) {
        auto f = [&](double x) {
            auto t = s;
            t[static_cast<size_t>(k)] = x;
            return length_functional(ref(), w, t).L;
        };
        CHECK(e.grad(k) == doctest::Approx(oracle::central(f, s[static_cast<size_t>(k)], 1e-6)).epsilon(1e-7));
    }
}

TEST_CASE("period-2 orbit of the reference table replays under the map") {
    const GeneralizedOrbit o = find_generalized_orbit(ref(), parse_orbit_word(kPeriod2));
    CHECK(o.cls == OrbitClass::regular);
    CHECK(o.grad_norm < 1e-10);
    CHECK(o.hess_min_eig > 0.0);
    const ReplayCheck rc = replay_orbit(ref(), o);
    CHECK(rc.sequence_matches);
    CHECK(rc.closure_error < 1e-8);
}

TEST_CASE("straight translation words are degenerate") {
    // a straight segment of length 5 meets every obstacle of this word
    const OrbitWord w = parse_orbit_word("(0,0;0),(-1,0;0),(-2,0;1),(-2,1;0),(-3,2;0),(-4,2;1),(-4,3;0)");
    CHECK_THROWS_AS(find_generalized_orbit(ref(), w), HessianSingular);
}

TEST_CASE("q_max below two is a domain error") {
    bool truncated = false;
    CHECK_THROWS_AS(enumerate_words(ref(), 1, 1.0, 1000, ref().cell_bound(), &truncated), DomainError);
}

TEST_CASE("spectrum is deterministic across worker counts and sorted") {
    SpectrumOptions o;
    o.q_max = 3;
    o.T_max = 1.0;
    o.workers = 1;
    const SpectrumTable a = enumerate_spectrum(ref(), o);
    o.workers = 3;
    const SpectrumTable b = enumerate_spectrum(ref(), o);
    REQUIRE(a.entries.size() == b.entries.size());
    for (size_t k = 0; k < a.entries.size(); ++k) {
        CHECK(a.entries[k].key == b.entries[k].key);
        CHECK(a.entries[k].orbit.length == b.entries[k].orbit.length);
    }
    for (size_t k = 1; k < a.entries.size(); ++k) {
        const auto& x = a.entries[k - 1];
        const auto& y = a.entries[k];
        CHECK((x.word.q() < y.word.q() || (x.word.q() == y.word.q() && x.orbit.length <= y.orbit.length)));
    }
}

TEST_CASE("reflection symmetry of the reference table forces length collisions") {
    SpectrumOptions o;
    o.q_max = 3;
    o.T_max = 1.0;
    const SpectrumTable s = enumerate_spectrum(ref(), o);
    CHECK_FALSE(check_simple_spectrum(s, 1e-9).empty());
}

TEST_CASE("budget overrun carries the solved part") {
    SpectrumOptions o;
    o.q_max = 4;
    o.T_max = 1.2;
    o.budget = 5;
    try {
        enumerate_spectrum(ref(), o);
        FAIL("expected a budget error");
    } catch (const SpectrumBudgetExceeded& e) {
        CHECK(e.family() == ErrorFamily::budget);
        CHECK(e.partial.partial);
    }
}
