// One line per acceptance criterion; exits nonzero only if a criterion throws.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sinai/coding.hpp"
#include "sinai/compare.hpp"
#include "sinai/dynamics.hpp"
#include "sinai/enriched.hpp"
#include "sinai/kourganoff.hpp"
#include "sinai/perturbation.hpp"
#include "sinai/spectrum.hpp"
#include "sinai/tables.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace sinai;

namespace {

// pinned tolerances
constexpr double kTauRel = 1e-6;
constexpr double kGradTol = 1e-10;
constexpr double kStartAgree = 1e-8;
constexpr double kTwoDiskTol = 1e-10;
constexpr double kTriangleTol = 1e-8;
constexpr double kJacobianMae = 1e-4;
constexpr double kEnrichedTol = 1e-9;
constexpr double kConvexTol = 1e-9;
constexpr double kRatioLo = 1.5, kRatioHi = 2.5;
constexpr double kGapTol = 1e-9;
constexpr double kMonotoneSlack = 0.1;
constexpr double kTranslateTol = 1e-9;
constexpr double kTiltDetect = 1e-6;
constexpr double kPredictionRel = 1e-3;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

const Table& reference() {
    static const Table t = Table::build(tables::reference());
    return t;
}

// Shared by criteria 2, 3 and 8.
const SpectrumTable& reference_spectrum() {
    static const SpectrumTable s = [] {
        SpectrumOptions o;
        o.q_max = 6;
        o.T_max = 1.4;
        return enumerate_spectrum(reference(), o);
    }();
    return s;
}

Outcome c1_tau_pair() {
    const auto t0 = std::chrono::steady_clock::now();
    gen::Rng rng(101);
    std::vector<Table> pool{reference()};
    for (int k = 0; k < 9; ++k) pool.push_back(gen::table(rng));
    double worst = 0.0;
    int n = 0;
    while (n < 1000) {
        const Table& t = pool[static_cast<size_t>(gen::uniform_int(rng, 0, static_cast<int>(pool.size()) - 1))];
        const int a = gen::uniform_int(rng, 0, t.size() - 1), b = gen::uniform_int(rng, 0, t.size() - 1);
        const Cell I = gen::cell(rng, 1);
        if (a == b && I == Cell{}) continue;
        const double s = gen::uniform(rng, 0.0, t.scatterer(a).perimeter());
        const double s2 = gen::uniform(rng, 0.0, t.scatterer(b).perimeter());
        const TauPair tp = tau_pair(t, I, a, b, s, s2);
        if (tp.tau < 0.05) continue;
        const double h = 1e-5;
        auto tau1 = [&](double x) { return tau_pair(t, I, a, b, x, s2).tau; };
        auto tau2 = [&](double x) { return tau_pair(t, I, a, b, s, x).tau; };
        auto d1_1 = [&](double x) { return tau_pair(t, I, a, b, x, s2).d1; };
        auto d1_2 = [&](double x) { return tau_pair(t, I, a, b, s, x).d1; };
        auto d2_2 = [&](double x) { return tau_pair(t, I, a, b, s, x).d2; };
        const double pairs[5][2] = {{tp.d1, oracle::central(tau1, s, h)},
                                    {tp.d2, oracle::central(tau2, s2, h)},
                                    {tp.d11, oracle::central(d1_1, s, h)},
                                    {tp.d12, oracle::central(d1_2, s2, h)},
                                    {tp.d22, oracle::central(d2_2, s2, h)}};
        for (const auto& p : pairs) worst = std::max(worst, std::abs(p[0] - p[1]) / std::max(1.0, std::abs(p[0])));
        ++n;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {worst <= kTauRel && secs < 10.0, fmt("%d configs, max rel err %.2e, %.2f s", n, worst, secs)};
}

Outcome c2_hessian() {
    const auto& sp = reference_spectrum();
    double gmax = 0.0, emin = 1e300;
    int count = 0;
    for (const auto* e : sp.regular()) {
        gmax = std::max(gmax, e->orbit.grad_norm);
        emin = std::min(emin, e->orbit.hess_min_eig);
        ++count;
    }
    return {count > 0 && gmax < kGradTol && emin > 0.0 && !sp.partial,
            fmt("%d regular orbits q<=6 L<=1.4, max |grad| %.2e, min eig %.3e", count, gmax, emin)};
}

Outcome c3_uniqueness() {
    const auto& sp = reference_spectrum();
    int words = 0, bad = 0, ghosts = 0;
    double spread = 0.0;
    for (const auto& e : sp.entries) {
        if (e.word.q() > 5) continue;
        if (e.orbit.min_cos <= 0.0) {
            ++ghosts;
            continue;
        }
        ++words;
        spread = std::max(spread, e.orbit.start_spread);
        if (e.orbit.starts < 8 || e.orbit.starts_converged != e.orbit.starts || e.orbit.start_spread > kStartAgree)
            ++bad;
    }
    return {words > 0 && bad == 0 && sp.failures.empty(),
            fmt("%d words q<=5, %d disagreeing, max spread %.2e (%d pass-through words skipped)", words, bad,
                spread, ghosts)};
}

Outcome c4_analytic() {
    const double r1 = 0.15, r2 = 0.2;
    const Table two = Table::build(tables::two_disks(r1, r2));
    const OrbitWord w2 = parse_orbit_word("(0,0;0),(0,0;1),(0,0;0)");
    const double L2 = find_generalized_orbit(two, w2).length;
    const double e2 = std::abs(L2 - oracle::two_disk_orbit(std::sqrt(0.5), r1, r2));

    const double side = 0.5, R = side / std::sqrt(3.0), r = 0.1;
    const Vec2 c{0.5, 0.45};
    std::vector<SupportCurve> tri;
    for (int k = 0; k < 3; ++k) tri.push_back(SupportCurve::circle(c + R * unit(2.0 * kPi * k / 3.0), r));
    const Table t3 = Table::build(tri);
    // bounce k sits on scatterer k; lifts chosen so the triangle is the unit-cell one
    OrbitWord w3;
    w3.rho = {0, 1, 2};
    w3.I = {Cell{}, Cell{}, Cell{}};
    const double L3 = find_generalized_orbit(t3, w3).length;
    const double e3 = std::abs(L3 - oracle::equilateral_orbit(R, r));
    return {e2 <= kTwoDiskTol && e3 <= kTriangleTol, fmt("two-disk err %.2e, equilateral err %.2e", e2, e3)};
}

Outcome c5_measure() {
    const JacobianReport r = jacobian_check(reference(), 1'000'000, 5);
    return {r.mean_abs_error < kJacobianMae && r.accepted >= 1'000'000,
            fmt("MAE %.2e over %zu accepted of %zu attempted (max %.2e)", r.mean_abs_error, r.accepted, r.attempted,
                r.max_abs_error)};
}

Outcome c6_coding() {
    const Table& t = reference();
    double c = 0.0, b = 0.0;
    for (int n = 2; n <= 10; ++n) {
        const HolderReport r = holder_inverse_check(t, 200, n, 1);
        c = std::max(c, r.constant);
        b = r.b_min;
    }
    std::size_t pairs = 0, violations = 0;
    for (int n = 2; n <= 10; ++n) {
        const HolderReport r = holder_inverse_check(t, 200, n, 2);
        for (const auto& s : r.samples) {
            ++pairs;
            if (s.distance > c * std::exp(-b * n)) ++violations;
        }
    }
    return {pairs > 0 && violations == 0,
            fmt("B_min %.4f, fitted c %.4f, %zu fresh pairs, %zu violations", b, c, pairs, violations)};
}

Outcome c7_crofton() {
    const auto t0 = std::chrono::steady_clock::now();
    const CroftonEstimate e = crofton_check(0.5, 1'000'000, 9);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double z = (e.value - 0.5) / e.sigma;
    return {std::abs(z) <= 3.0 && secs < 5.0, fmt("estimate %.6f sigma %.2e z %.2f, %.2f s", e.value, e.sigma, z, secs)};
}

Outcome c8_enriched() {
    const Table& t = reference();
    LinkSetStore store(t);
    double worst_s = 0.0, worst_L = 0.0;
    int n = 0;
    for (const auto* e : reference_spectrum().regular()) {
        if (e->word.q() > 5) continue;
        const BilliardCycle c = minimize_EL(t, store, e->word);
        for (int k = 0; k < e->word.q(); ++k) {
            const Scatterer& sc = t.scatterer(e->word.rho[static_cast<size_t>(k)]);
            const auto ku = static_cast<size_t>(k);
            worst_s = std::max(worst_s, arc_distance(sc, c.e[ku], e->orbit.s[ku]).value);
            worst_s = std::max(worst_s, arc_distance(sc, c.s[ku], e->orbit.s[ku]).value);
        }
        worst_L = std::max(worst_L, std::abs(c.EL - e->orbit.length));
        ++n;
    }
    // boundary classes against the closed-form perimeter 2π a0
    double worst_b = 0.0;
    EnrichedOptions eo;
    eo.q_max = 2;
    eo.T_max = 2.5;
    const EnrichedTable et = enriched_spectrum(t, eo);
    int boundaries = 0;
    for (const auto& e : et.entries) {
        if (e.kind != EnrichedEntry::Kind::boundary) continue;
        ++boundaries;
        worst_b = std::max(worst_b, std::abs(e.EL - 2.0 * kPi * t.scatterer(e.boundary_scatterer).curve().a0()));
    }
    return {n > 0 && boundaries == t.size() && worst_s <= kEnrichedTol && worst_L <= kEnrichedTol && worst_b <= 1e-12,
            fmt("%d orbits: max |e-s| %.2e, max |EL-L| %.2e; %d boundary classes, perimeter err %.2e", n, worst_s,
                worst_L, boundaries, worst_b)};
}

Outcome c9_convexity() {
    const Table& t = reference();
    bool truncated = false;
    const auto words = enumerate_words(t, 4, 1.2, 100000, t.cell_bound(), &truncated);
    LinkSetStore store(t);
    gen::Rng rng(909);
    int tests = 0, violations = 0, attempts = 0;
    double worst = 0.0;
    std::string worst_word;
    while (tests < 10000 && attempts < 200000) {
        ++attempts;
        const OrbitWord& w = words[static_cast<size_t>(gen::uniform_int(rng, 0, static_cast<int>(words.size()) - 1))];
        const auto labels = lifted_labels(w);
        const int q = w.q();
        std::vector<const LinkSet*> in, out;
        bool empty = false;
        for (int k = 0; k < q; ++k) {
            const LiftedLabel cur = labels[static_cast<size_t>(k)];
            LiftedLabel prev = labels[static_cast<size_t>(k > 0 ? k - 1 : q - 1)];
            if (k == 0) prev = {prev.i - labels.back().i, prev.j - labels.back().j, prev.l};
            in.push_back(&store.get(prev, cur));
            out.push_back(&store.get(labels[static_cast<size_t>(k + 1)], cur));
            empty = empty || in.back()->empty() || out.back()->empty();
        }
        if (empty) continue;
        std::vector<double> e1(q), s1(q), e2(q), s2(q), em(q), sm(q);
        for (size_t k = 0; k < static_cast<size_t>(q); ++k) {
            e1[k] = gen::in_link_set(rng, *in[k]);
            e2[k] = gen::in_link_set(rng, *in[k]);
            s1[k] = gen::in_link_set(rng, *out[k]);
            s2[k] = gen::in_link_set(rng, *out[k]);
            em[k] = 0.5 * (e1[k] + e2[k]);
            sm[k] = 0.5 * (s1[k] + s2[k]);
        }
        try {
            require_feasible(store, w, em, sm);
        } catch (const InfeasiblePoint&) {
            continue;
        }
        const double mid = enriched_length(t, w, em, sm).value;
        const double avg = 0.5 * (enriched_length(t, w, e1, s1).value + enriched_length(t, w, e2, s2).value);
        const double v = mid - avg;
        if (v > worst) {
            worst = v;
            worst_word = to_string(w);
        }
        if (v >= kConvexTol) ++violations;
        ++tests;
    }
    return {tests == 10000 && violations == 0,
            fmt("%d midpoint tests, %d violations, worst excess %.3e on %s", tests, violations, worst,
                worst_word.c_str())};
}

Outcome c10_response() {
    const Table& t = reference();
    const auto& sp = reference_spectrum();
    struct Case {
        std::string key;
        BumpField::Mode mode;
    };
    std::vector<Case> cases;
    for (const auto* e : sp.regular()) {
        if (e->word.q() == 2 && cases.empty()) cases.push_back({e->key, BumpField::Mode::move});
        if (e->word.q() == 3 && cases.size() == 1) cases.push_back({e->key, BumpField::Mode::tilt});
    }
    bool ok = cases.size() == 2;
    std::string detail;
    for (const auto& c : cases) {
        const SpectrumEntry* e = sp.find(c.key);
        const int l = e->word.rho[0];
        const BumpField bf = BumpField::make(t, l, e->orbit.s[0] + 0.02, 0.15, c.mode);
        const ResponseReport r = first_order_response(t, e->orbit, bf);
        for (double x : r.shift_ratios) ok = ok && x >= kRatioLo && x <= kRatioHi;
        for (double x : r.length_ratios) ok = ok && x >= kRatioLo && x <= kRatioHi;
        detail += fmt("q=%d %s shift ratios %.3f %.3f, length ratios %.3f %.3f; ", e->word.q(), to_string(c.mode),
                      r.shift_ratios.at(0), r.shift_ratios.at(1), r.length_ratios.at(0), r.length_ratios.at(1));
    }
    return {ok, detail};
}

std::size_t grazing_count(const SpectrumTable& s) { return s.of_class(OrbitClass::grazing).size(); }

Outcome c11_genericity() {
    const Table t = Table::build(tables::tangency());
    GenericityOptions go;
    go.q_max = 4;
    go.T_max = 1.0;
    SpectrumOptions so;
    so.q_max = go.q_max;
    so.T_max = go.T_max;
    const SpectrumTable before = enumerate_spectrum(t, so);
    const std::size_t g0 = grazing_count(before);
    const std::size_t c0 = check_simple_spectrum(before, go.gap).size();
    const GenericityResult dg = degraze(t, go);
    const GenericityResult sp = separate_lengths(dg.table, go);
    // independent re-solve of the final table
    const SpectrumTable after = enumerate_spectrum(sp.table, so);
    const std::size_t g1 = grazing_count(after);
    const std::size_t c1 = check_simple_spectrum(after, kGapTol).size();
    return {g0 > 0 && c0 > 0 && g1 == 0 && c1 == 0,
            fmt("before: %zu grazing, %zu close pairs; %zu degraze + %zu separate steps; after: %zu grazing, %zu "
                "close pairs",
                g0, c0, dg.log.size(), sp.log.size(), g1, c1)};
}

Outcome c12_kourganoff() {
    const Table& t = reference();
    const HeightProfile prof(t, 0.05);
    const std::vector<std::pair<Vec2, Vec2>> inits{{{0.75, 0.3}, {0.3, 1.0}},
                                                  {{0.7, 0.45}, {1.0, -0.35}},
                                                  {{0.15, 0.75}, {0.8, 0.45}},
                                                  {{0.45, 0.7}, {-0.6, 1.0}},
                                                  {{0.05, 0.7}, {0.2, -1.0}}};
    const double Ts[5] = {1.0, 1.1, 1.2, 1.3, 1.5};
    int monotone = 0;
    std::string detail = "sup ratios:";
    for (size_t k = 0; k < inits.size(); ++k) {
        const ConvergenceReport r = convergence_test(prof, inits[k].first, inits[k].second, Ts[k]);
        if (r.monotone(kMonotoneSlack)) ++monotone;
        detail += fmt(" %.2f", r.rows.front().sup_distance / r.rows.back().sup_distance);
    }
    EnrichedOptions eo;
    eo.q_max = 4;
    eo.T_max = 1.2;
    const EnrichedTable et = enriched_spectrum(t, eo);
    const EnrichedEntry *orbit = nullptr, *mixed = nullptr;
    for (const auto& e : et.entries) {
        if (!orbit && e.kind == EnrichedEntry::Kind::orbit) orbit = &e;
        if (!mixed && e.kind == EnrichedEntry::Kind::mixed) mixed = &e;
    }
    bool ratios_ok = orbit && mixed;
    detail += "; length gap ratios:";
    for (const EnrichedEntry* e : {orbit, mixed}) {
        if (!e) continue;
        const LengthConvergence lc = length_convergence(prof, e->cycle);
        detail += fmt(" [%s", to_string(e->kind));
        for (double x : lc.ratios) {
            detail += fmt(" %.2f", x);
            ratios_ok = ratios_ok && x >= kRatioLo && x <= kRatioHi;
        }
        detail += "]";
    }
    return {monotone == 5 && ratios_ok, fmt("%d/5 monotone; ", monotone) + detail};
}

Outcome c13_rigidity() {
    const Table& t = reference();
    EnrichedOptions eo;
    eo.q_max = 4;
    eo.T_max = 1.2;
    const EnrichedTable ea = enriched_spectrum(t, eo);
    std::vector<SupportCurve> moved = t.curves();
    for (auto& c : moved) c = c.translated({0.3, 0.7});
    const Table tr = Table::build(moved);
    const ComparisonReport same = compare_spectra(t, ea, tr, enriched_spectrum(tr, eo));

    const EnrichedEntry* o = nullptr;
    for (const auto& e : ea.entries)
        if (e.kind == EnrichedEntry::Kind::orbit && (!o || e.EL < o->EL)) o = &e;
    const double eps = 1e-3;
    const BumpField bf = BumpField::make(t, o->cycle.word.rho[0], o->cycle.s[0] + 0.05, 0.15, BumpField::Mode::tilt);
    const Table tp = apply_perturbation(t, bf, eps);
    const ComparisonReport tilt = compare_spectra(t, ea, tp, enriched_spectrum(tp, eo));
    const ComparisonRow& top = tilt.rows.front();
    const EnrichedEntry* te = ea.find(top.key);
    double predicted = std::nan("");
    if (te && te->kind == EnrichedEntry::Kind::orbit)
        predicted = predicted_length_change(t, tp, find_generalized_orbit(t, te->cycle.word), bf, eps);
    const double measured = top.EL_b - top.EL_a;
    const double rel = std::abs(measured - predicted) / std::abs(measured);
    const bool ok = same.agrees(kTranslateTol) && top.dev > kTiltDetect && rel <= kPredictionRel;
    return {ok, fmt("translate: %zu words, max dev %.2e, %zu+%zu unmatched; tilt: max dev %.3e on %s, predicted "
                    "%.9e measured %.9e (rel %.1e)",
                    same.rows.size(), same.max_deviation, same.unmatched_a.size(), same.unmatched_b.size(), top.dev,
                    top.key.c_str(), predicted, measured, rel)};
}

}  // namespace

int main(int argc, char** argv) {
    std::setvbuf(stdout, nullptr, _IONBF, 0);
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"tau_pair derivatives vs finite differences", c1_tau_pair},
        {"Hessian certificate up to q=6", c2_hessian},
        {"uniqueness per word up to q=5", c3_uniqueness},
        {"analytic two-disk and equilateral orbits", c4_analytic},
        {"billiard map preserves the invariant measure", c5_measure},
        {"coding contraction at depths 2..10", c6_coding},
        {"Crofton line measure", c7_crofton},
        {"enriched length equals orbit length", c8_enriched},
        {"convexity of the enriched length", c9_convexity},
        {"first-order perturbation response", c10_response},
        {"degraze then separate lengths", c11_genericity},
        {"flattened-surface convergence", c12_kourganoff},
        {"rigidity comparison harness", c13_rigidity},
    };
    std::set<int> only;
    for (int k = 1; k < argc; ++k) only.insert(std::atoi(argv[k]));
    int passed = 0, run = 0, errors = 0;
    for (size_t k = 0; k < criteria.size(); ++k) {
        const int id = static_cast<int>(k) + 1;
        if (!only.empty() && !only.count(id)) continue;
        ++run;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& ex) {
            o = {false, std::string("error: ") + ex.what()};
            ++errors;
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        passed += o.pass ? 1 : 0;
        std::printf("criterion %2d %s  %s  (%s) [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", criteria[k].first,
                    o.detail.c_str(), secs);
    }
    std::printf("%d/%d criteria passed\n", passed, run);
    return errors == 0 ? 0 : 1;
}
