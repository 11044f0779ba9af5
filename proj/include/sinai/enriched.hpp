#pragma once

#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "sinai/spectrum.hpp"

namespace sinai {

// Shorter boundary arc between parameters e and s on a curve of perimeter ℓ.
// The subdifferential is coupled: ∂_s D ∈ [sub_lo, sub_hi] and ∂_e D = −∂_s D.
struct ArcDistance {
    double value = 0.0;
    double sub_lo = 0.0, sub_hi = 0.0;
    bool kink() const { return sub_lo < sub_hi; }
};
ArcDistance arc_distance(double perimeter, double e, double s, double kink_tol = 0.0);
ArcDistance arc_distance(const Scatterer& sc, double e, double s, double kink_tol = 0.0);

struct Bitangent {
    enum class Kind { outer, inner };
    Kind kind = Kind::outer;
    double s_a = 0.0, s_b = 0.0;  // tangency parameters (arclength)
    Vec2 p_a, p_b;
    double length = 0.0;
    double residual = 0.0;  // max |normal · direction| at the two tangency points
};
std::vector<Bitangent> common_tangents(const Table& table, LiftedLabel a, LiftedLabel b);
std::vector<Bitangent> common_tangents(const Scatterer& a, Vec2 oa, const Scatterer& b, Vec2 ob);

// Tangent points seen from an exterior point: parameters on the curve.
struct TangentPair {
    double s_minus = 0.0, s_plus = 0.0;  // clockwise and anticlockwise sides
    Vec2 p_minus, p_plus;
};
TangentPair tangents_from_point(const Scatterer& sc, Vec2 offset, Vec2 y);

struct Interval {
    double lo = 0.0, hi = 0.0;  // unwrapped arclength, hi − lo ≤ perimeter
    double width() const { return hi - lo; }
};

struct LinkSet {
    LiftedLabel source, target;
    std::vector<Interval> arcs;
    double perimeter = 0.0;
    bool empty() const { return arcs.empty(); }
    bool multi() const { return arcs.size() > 1; }
    // index of the arc containing s (within tol), or -1
    int locate(double s, double tol = 1e-12) const;
};

// Is the target point at parameter y visible from some point of the source?
bool sees_source(const Table& table, LiftedLabel source, LiftedLabel target, double y);
LinkSet link_set(const Table& table, LiftedLabel source, LiftedLabel target, int samples = 512);

// Link sets depend only on the relative cell offset; this store is filled
// before any parallel phase and read afterwards.
class LinkSetStore {
public:
    explicit LinkSetStore(const Table& table) : table_(&table) {}
    const LinkSet& get(LiftedLabel source, LiftedLabel target);
    void prefetch(const std::vector<std::pair<LiftedLabel, LiftedLabel>>& pairs, int workers);
    // Read-only access; throws if the pair was not prefetched.
    const LinkSet& at(LiftedLabel source, LiftedLabel target) const;

private:
    struct Key {
        int ls, lt, di, dj;
        auto operator<=>(const Key&) const = default;
    };
    static Key key(LiftedLabel s, LiftedLabel t) { return {s.l, t.l, t.i - s.i, t.j - s.j}; }
    const Table* table_;
    std::map<Key, LinkSet> cache_;
};

struct PathPiece {
    enum class Kind { segment, arc };
    Kind kind = Kind::segment;
    Vec2 from, to;
    LiftedLabel obstacle;  // for arcs
    double s_from = 0.0, s_to = 0.0;
    double length = 0.0;
};

struct DlPath {
    std::vector<PathPiece> pieces;
    double length = 0.0;
};

// Shortest path in the closed lifted table between two points (tangent
// visibility graph and Dijkstra). Points on a boundary carry their label.
struct TablePoint {
    Vec2 p;
    std::optional<LiftedLabel> on;
    double s = 0.0;
};
DlPath dl_geodesic(const Table& table, const TablePoint& x, const TablePoint& y);
bool segment_free(const Table& table, Vec2 a, Vec2 b, double tol = 1e-9);

// S = (e_0, s_0, …, e_{q−1}, s_{q−1}); the chord k joins s_k to e_{k+1}.
struct ELEval {
    double value = 0.0;
    std::vector<double> chord;  // τ per chord
    std::vector<double> arc;    // D per bounce
    std::vector<double> grad_e, grad_s;   // smooth chord parts
    std::vector<ArcDistance> d;           // arc parts
};
ELEval enriched_length(const Table& table, const OrbitWord& w, const std::vector<double>& e,
                       const std::vector<double>& s);

// Checks S against the link sets; throws InfeasiblePoint.
void require_feasible(LinkSetStore& store, const OrbitWord& w, const std::vector<double>& e,
                      const std::vector<double>& s, double tol = 1e-9);

struct BilliardCycle {
    // constrained: e_k = s_k held at a link-set endpoint, not a reflection
    enum class Transition { specular, tangential, constrained };
    OrbitWord word;
    std::vector<double> e, s;
    double EL = 0.0;
    std::vector<double> chords, arcs;
    std::vector<Transition> transitions;
    double certificate = 0.0;  // distance of 0 from the assembled subdifferential
    double clearance = 0.0;    // smallest chord clearance against all obstacles
    bool orbit = false;        // every transition specular
};

struct ELOptions {
    double tol_sub = 1e-8;
    double kink_tol = 1e-9;
    int max_combos = 16;
};

BilliardCycle minimize_EL(const Table& table, LinkSetStore& store, const OrbitWord& w,
                          const ELOptions& opts = {});
BilliardCycle minimize_EL(const Table& table, const OrbitWord& w, const ELOptions& opts = {});

struct EnrichedEntry {
    enum class Kind { orbit, mixed, boundary };
    std::string key;
    int q = 0;
    double EL = 0.0;
    Kind kind = Kind::orbit;
    BilliardCycle cycle;
    int boundary_scatterer = -1;
    bool doubled_class = false;  // odd number of collisions: the class is traversed on both sheets
    bool multi_interval = false;
};
const char* to_string(EnrichedEntry::Kind k);

struct EnrichedTable {
    int q_max = 0;
    double T_max = 0.0;
    std::vector<EnrichedEntry> entries;
    std::vector<std::string> infeasible;  // empty link set on some transition
    std::vector<std::string> obstructed;  // minimizer chord crosses an obstacle
    std::vector<std::string> failures;
    bool partial = false;
    const EnrichedEntry* find(const std::string& key) const;
};

struct EnrichedOptions {
    int q_max = 4;
    double T_max = 1.5;
    std::size_t budget = 200000;
    int workers = 0;
    ELOptions el;
};

EnrichedTable enriched_spectrum(const Table& table, const EnrichedOptions& opts);

}  // namespace sinai
