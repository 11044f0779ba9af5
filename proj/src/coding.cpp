#include "sinai/coding.hpp"

#include <cmath>
#include <random>
#include <regex>
#include <sstream>

#include "sinai/errors.hpp"
#include "sinai/parallel.hpp"

namespace sinai {

Word encode_orbit(const Table& table, const CollisionCoord& c, int n) {
    if (n < 0) throw DomainError("encoding depth must be non-negative");
    const MapOrbit fwd = billiard_map(table, c, n);
    const MapOrbit bwd = billiard_map(table, c, -n);
    const int rf = fwd.complete() ? n : fwd.failure_index;
    const int rb = bwd.complete() ? n : bwd.failure_index;
    Word w;
    w.offset = -rb;
    for (int k = rb - 1; k >= 0; --k) w.symbols.push_back(bwd.points[static_cast<size_t>(k)].label);
    w.symbols.push_back(c.label);
    for (int k = 0; k < rf; ++k) w.symbols.push_back(fwd.points[static_cast<size_t>(k)].label);
    w.partial = rf < n || rb < n;
    w.reach_forward = rf;
    w.reach_backward = rb;
    w.admissible = check_admissible(w, table.cell_bound());
    return w;
}

QuotientWord quotient(const Word& w) {
    const LiftedLabel& a0 = w.has(0) ? w.at(0) : w.symbols.front();
    return {translate(w, -a0.i, -a0.j)};
}

Word translate(const Word& w, int di, int dj) {
    Word out = w;
    for (auto& s : out.symbols) s = compose(s, di, dj);
    return out;
}

Word shift_left(const Word& w) {
    Word out = w;
    out.offset -= 1;
    out.reach_forward = w.reach_forward - 1;
    out.reach_backward = w.reach_backward + 1;
    return out;
}

bool check_admissible(const Word& w, int k_cell) {
    for (size_t k = 1; k < w.symbols.size(); ++k) {
        const auto& a = w.symbols[k - 1];
        const auto& b = w.symbols[k];
        if (std::abs(b.i - a.i) > k_cell || std::abs(b.j - a.j) > k_cell) return false;
        if (a == b) return false;
    }
    return true;
}

double rho_distance(const Word& w1, const Word& w2) {
    if (!w1.has(0) || !w2.has(0)) throw DomainError("words must contain index 0");
    if (!(w1.at(0) == w2.at(0))) return 1.0;
    const int half = std::min({-w1.first_index(), w1.last_index(), -w2.first_index(), w2.last_index()});
    int m = 0;
    while (m < half) {
        const int k = m + 1;
        if (!(w1.at(k) == w2.at(k)) || !(w1.at(-k) == w2.at(-k))) break;
        m = k;
    }
    return std::ldexp(1.0, -m);
}

double expansion_constant(double tau_max, double k_min) {
    if (!(k_min > 0.0)) throw InvalidTable("minimum curvature must be positive");
    return 1.0 / (tau_max + 1.0 / (2.0 * k_min));
}

double expansion_constant(const Table& table) {
    table.require_finite_horizon();
    return expansion_constant(table.tau_max(), table.k_min());
}

namespace {

bool same_cylinder(const Word& a, const Word& b, int n) {
    if (a.partial || b.partial) return false;
    for (int i = -n; i <= n; ++i)
        if (!(a.at(i) == b.at(i))) return false;
    return true;
}

}  // namespace

HolderReport holder_inverse_check(const Table& table, std::size_t samples, int n,
                                  std::uint64_t seed, int workers) {
    HolderReport rep;
    rep.depth = n;
    rep.b_min = expansion_constant(table);
    std::vector<std::optional<HolderSample>> slots(samples);
    parallel_for(samples, workers, [&](std::size_t idx) {
        std::seed_seq seq{seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(idx)};
        std::mt19937_64 rng(seq);
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        for (int attempt = 0; attempt < 50; ++attempt) {
            const int l = std::min(table.size() - 1, static_cast<int>(u01(rng) * table.size()));
            const double per = table.scatterer(l).perimeter();
            CollisionCoord x{{0, 0, l}, u01(rng) * per, (u01(rng) - 0.5) * 0.98 * kPi};
            Word wx;
            try {
                wx = encode_orbit(table, x, n);
            } catch (const Error&) {
                continue;
            }
            if (wx.partial) continue;
            const double ang = u01(rng) * kTwoPi;
            const double ds = std::cos(ang), dphi = std::sin(ang);
            // largest step that keeps φ inside the phase space
            double hi = 0.5;
            if (dphi > 0) hi = std::min(hi, (0.5 * kPi - 1e-9 - x.phi) / dphi);
            if (dphi < 0) hi = std::min(hi, (-0.5 * kPi + 1e-9 - x.phi) / dphi);
            double lo = 0.0;
            auto same_at = [&](double d) {
                CollisionCoord y{x.label, x.s + d * ds, x.phi + d * dphi};
                try {
                    return same_cylinder(wx, encode_orbit(table, y, n), n);
                } catch (const Error&) {
                    return false;
                }
            };
            if (same_at(hi)) {
                lo = hi;
            } else {
                for (int it = 0; it < 48; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    if (same_at(mid)) lo = mid; else hi = mid;
                }
            }
            if (lo <= 0.0) continue;
            HolderSample hs;
            hs.depth = n;
            hs.distance = lo;
            hs.scaled = lo * std::exp(rep.b_min * n);
            slots[idx] = hs;
            return;
        }
    });
    for (const auto& s : slots) {
        if (!s) continue;
        rep.samples.push_back(*s);
        rep.constant = std::max(rep.constant, s->scaled);
        ++rep.pairs;
    }
    if (rep.pairs == 0) throw InsufficientSamples("no same-cylinder pair found at depth " + std::to_string(n));
    return rep;
}

std::string serialize(const Word& w, bool canonical) {
    std::ostringstream os;
    os << "@" << w.offset << (canonical ? " canonical" : "") << ":";
    for (size_t k = 0; k < w.symbols.size(); ++k) os << (k ? "," : " ") << to_string(w.symbols[k]);
    return os.str();
}

Word parse_word(const std::string& text, bool* canonical) {
    static const std::regex head(R"(^\s*@(-?\d+)(\s+canonical)?\s*:(.*)$)");
    static const std::regex tok(R"(\(\s*(-?\d+)\s*,\s*(-?\d+)\s*;\s*(\d+)\s*\))");
    std::smatch m;
    if (!std::regex_match(text, m, head)) throw ParseError("malformed word '" + text + "'", 0);
    Word w;
    w.offset = std::stoi(m[1]);
    if (canonical) *canonical = m[2].matched;
    const std::string body = m[3];
    for (auto it = std::sregex_iterator(body.begin(), body.end(), tok); it != std::sregex_iterator(); ++it)
        w.symbols.push_back({std::stoi((*it)[1]), std::stoi((*it)[2]), std::stoi((*it)[3])});
    return w;
}

}  // namespace sinai
