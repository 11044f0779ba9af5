#include "sinai/enriched.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>

#include "sinai/parallel.hpp"

namespace sinai {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double rel_angle(double a) { return std::remainder(a, kTwoPi); }

template <class F>
double bisect_root(F&& f, double lo, double hi, int iters = 80) {
    double flo = f(lo);
    for (int k = 0; k < iters; ++k) {
        const double m = 0.5 * (lo + hi);
        const double fm = f(m);
        if ((fm < 0) == (flo < 0)) {
            lo = m;
            flo = fm;
        } else {
            hi = m;
        }
        if (hi - lo < 1e-16) break;
    }
    return 0.5 * (lo + hi);
}

Vec2 cell_vec(const LiftedLabel& l) { return {static_cast<double>(l.i), static_cast<double>(l.j)}; }

// Lifted obstacles whose bounding disk meets the disk of radius R around p.
std::vector<LiftedLabel> obstacles_near(const Table& table, Vec2 p, double R) {
    std::vector<LiftedLabel> out;
    for (int l = 0; l < table.size(); ++l) {
        const Scatterer& sc = table.scatterer(l);
        const Vec2 c = sc.center();
        const double reach = R + sc.outer_radius();
        for (int i = static_cast<int>(std::floor(p.x - c.x - reach)); i <= static_cast<int>(std::ceil(p.x - c.x + reach)); ++i)
            for (int j = static_cast<int>(std::floor(p.y - c.y - reach)); j <= static_cast<int>(std::ceil(p.y - c.y + reach)); ++j) {
                const Vec2 cc = c + Vec2{static_cast<double>(i), static_cast<double>(j)};
                if (norm(cc - p) <= reach) out.push_back({i, j, l});
            }
    }
    return out;
}

double point_segment_distance(Vec2 c, Vec2 a, Vec2 b) {
    const Vec2 d = b - a;
    const double dd = dot(d, d);
    const double t = dd > 0 ? std::clamp(dot(c - a, d) / dd, 0.0, 1.0) : 0.0;
    return norm(c - (a + d * t));
}

}  // namespace

// ------------------------------------------------------------ arc distance

ArcDistance arc_distance(double per, double e, double s, double kink_tol) {
    double d = std::fmod(s - e, per);
    if (d < 0) d += per;
    ArcDistance a;
    a.value = std::min(d, per - d);
    if (d <= kink_tol || per - d <= kink_tol || std::abs(d - 0.5 * per) <= kink_tol) {
        a.sub_lo = -1.0;
        a.sub_hi = 1.0;
    } else if (d < 0.5 * per) {
        a.sub_lo = a.sub_hi = 1.0;
    } else {
        a.sub_lo = a.sub_hi = -1.0;
    }
    return a;
}

ArcDistance arc_distance(const Scatterer& sc, double e, double s, double kink_tol) {
    return arc_distance(sc.perimeter(), e, s, kink_tol);
}

// ------------------------------------------------------------- tangents

TangentPair tangents_from_point(const Scatterer& sc, Vec2 offset, Vec2 y) {
    const SupportCurve& c = sc.curve();
    const Vec2 q = y - offset;
    const Vec2 dc = y - (sc.center() + offset);
    if (norm(dc) <= sc.inner_radius()) throw GeometryError("point inside obstacle");
    const double ty = std::atan2(dc.y, dc.x);
    auto f = [&](double t) { return c.h(t) - dot(q, unit(t)); };
    if (f(ty) >= 0.0) throw GeometryError("point not exterior to obstacle");
    const double tp = bisect_root(f, ty, ty + kPi);
    const double tm = bisect_root(f, ty - kPi, ty);
    TangentPair out;
    out.s_plus = sc.angle_to_arclength(tp);
    out.s_minus = sc.angle_to_arclength(tm);
    out.p_plus = c.point(tp) + offset;
    out.p_minus = c.point(tm) + offset;
    return out;
}

std::vector<Bitangent> common_tangents(const Scatterer& a, Vec2 oa, const Scatterer& b, Vec2 ob) {
    if (!(convex_gap(a, oa, b, ob) > 0.0)) throw GeometryError("curves intersect");
    const SupportCurve& ca = a.curve();
    const SupportCurve& cb = b.curve();
    auto Ha = [&](double t) { return ca.h(t) + dot(oa, unit(t)); };
    auto Hb = [&](double t) { return cb.h(t) + dot(ob, unit(t)); };
    std::vector<Bitangent> out;
    auto scan = [&](auto&& g, Bitangent::Kind kind) {
        const int n = 720;
        double prev = g(0.0);
        for (int k = 1; k <= n; ++k) {
            const double t1 = kTwoPi * (k - 1) / n, t2 = kTwoPi * k / n;
            const double cur = g(t2);
            if ((prev < 0) != (cur < 0)) {
                const double th = bisect_root(g, t1, t2);
                Bitangent bt;
                bt.kind = kind;
                const double thb = kind == Bitangent::Kind::outer ? th : th + kPi;
                bt.p_a = ca.point(th) + oa;
                bt.p_b = cb.point(thb) + ob;
                bt.s_a = a.angle_to_arclength(th);
                bt.s_b = b.angle_to_arclength(thb);
                bt.length = norm(bt.p_b - bt.p_a);
                const Vec2 dir = (bt.p_b - bt.p_a) / bt.length;
                bt.residual = std::max(std::abs(dot(unit(th), dir)), std::abs(dot(unit(thb), dir)));
                out.push_back(bt);
            }
            prev = cur;
        }
    };
    scan([&](double t) { return Ha(t) - Hb(t); }, Bitangent::Kind::outer);
    scan([&](double t) { return Ha(t) + Hb(t + kPi); }, Bitangent::Kind::inner);
    return out;
}

std::vector<Bitangent> common_tangents(const Table& table, LiftedLabel a, LiftedLabel b) {
    return common_tangents(table.scatterer(a.l), cell_vec(a), table.scatterer(b.l), cell_vec(b));
}

// ------------------------------------------------------------- link sets

int LinkSet::locate(double s, double tol) const {
    for (size_t k = 0; k < arcs.size(); ++k) {
        const auto& a = arcs[k];
        // bring s into the window starting at a.lo
        double x = s;
        if (perimeter > 0) x = a.lo + std::fmod(std::fmod(s - a.lo, perimeter) + perimeter, perimeter);
        if (x <= a.hi + tol) return static_cast<int>(k);
        if (perimeter > 0 && x - perimeter >= a.lo - tol) return static_cast<int>(k);
    }
    return -1;
}

bool sees_source(const Table& table, LiftedLabel source, LiftedLabel target, double yparam) {
    const LiftedScatterer T = lift_scatterer(table, target);
    const LiftedScatterer A = lift_scatterer(table, source);
    const BoundaryPoint bp = T.at(yparam);
    const Vec2 y = bp.point;
    const double nu = std::atan2(bp.normal.y, bp.normal.x);

    // angular interval of an obstacle seen from y, relative to nu and unwrapped around its centre
    auto cone = [&](const Scatterer& sc, Vec2 off) -> Interval {
        const TangentPair tp = tangents_from_point(sc, off, y);
        const Vec2 c = sc.center() + off - y;
        const double ac = rel_angle(std::atan2(c.y, c.x) - nu);
        const double a1 = ac + rel_angle(std::atan2(tp.p_minus.y - y.y, tp.p_minus.x - y.x) - nu - ac);
        const double a2 = ac + rel_angle(std::atan2(tp.p_plus.y - y.y, tp.p_plus.x - y.x) - nu - ac);
        return {std::min(a1, a2), std::max(a1, a2)};
    };

    std::vector<Interval> vis;
    const Interval ca = cone(*A.base, A.offset);
    for (double sh : {-kTwoPi, 0.0, kTwoPi}) {
        const double lo = std::max(ca.lo + sh, -0.5 * kPi), hi = std::min(ca.hi + sh, 0.5 * kPi);
        if (hi > lo) vis.push_back({lo, hi});
    }
    if (vis.empty()) return false;

    const double R = norm(A.center() - y) + A.base->outer_radius() + 1e-9;
    for (const LiftedLabel& lab : obstacles_near(table, y, R)) {
        if (lab == source || lab == target) continue;
        const Scatterer& sc = table.scatterer(lab.l);
        const Vec2 off = cell_vec(lab);
        const Interval cc = cone(sc, off);
        for (double sh : {-kTwoPi, 0.0, kTwoPi}) {
            const double clo = cc.lo + sh, chi = cc.hi + sh;
            std::vector<Interval> next;
            for (const Interval& v : vis) {
                const double olo = std::max(v.lo, clo), ohi = std::min(v.hi, chi);
                if (!(ohi > olo)) {
                    next.push_back(v);
                    continue;
                }
                const double mid = nu + 0.5 * (olo + ohi);
                const Vec2 d = unit(mid);
                const auto hA = ray_intersect(*A.base, A.offset, y, d);
                const auto hC = ray_intersect(sc, off, y, d);
                const bool in_front = hC && (!hA || hC->t < hA->t);
                if (!in_front) {
                    next.push_back(v);
                    continue;
                }
                if (clo > v.lo) next.push_back({v.lo, clo});
                if (chi < v.hi) next.push_back({chi, v.hi});
            }
            vis.swap(next);
            if (vis.empty()) return false;
        }
    }
    for (const Interval& v : vis)
        if (v.width() > 1e-12) return true;
    return false;
}

LinkSet link_set(const Table& table, LiftedLabel source, LiftedLabel target, int samples) {
    if (source == target) throw DomainError("link set needs distinct lifted obstacles");
    LinkSet ls;
    ls.source = source;
    ls.target = target;
    const double per = table.scatterer(target.l).perimeter();
    ls.perimeter = per;
    const int n = std::max(16, samples);
    std::vector<char> v(static_cast<size_t>(n));
    auto pred = [&](double s) { return sees_source(table, source, target, s); };
    for (int k = 0; k < n; ++k) v[static_cast<size_t>(k)] = pred(per * k / n) ? 1 : 0;
    const int first_false = static_cast<int>(std::find(v.begin(), v.end(), 0) - v.begin());
    if (first_false == n) {
        ls.arcs.push_back({0.0, per});
        return ls;
    }
    auto refine = [&](double a, double b, bool a_true) {
        // a and b differ in visibility
        for (int it = 0; it < 60 && b - a > 1e-15; ++it) {
            const double m = 0.5 * (a + b);
            if (pred(m) == a_true) a = m; else b = m;
        }
        return 0.5 * (a + b);
    };
    const double h = per / n;
    double start = 0.0;
    bool in = false;
    for (int step = 1; step <= n; ++step) {
        const int k = first_false + step;
        const bool cur = v[static_cast<size_t>(k % n)] != 0;
        const double x1 = h * (k - 1), x0 = h * k;
        if (cur && !in) {
            start = refine(x1, x0, false);
            in = true;
        } else if (!cur && in) {
            ls.arcs.push_back({start, refine(x1, x0, true)});
            in = false;
        }
    }
    for (auto& a : ls.arcs) {
        const double shift = per * std::floor(a.lo / per);
        a.lo -= shift;
        a.hi -= shift;
    }
    std::sort(ls.arcs.begin(), ls.arcs.end(), [](const Interval& x, const Interval& y) { return x.lo < y.lo; });
    return ls;
}

const LinkSet& LinkSetStore::get(LiftedLabel source, LiftedLabel target) {
    const Key k = key(source, target);
    auto it = cache_.find(k);
    if (it == cache_.end()) {
        LinkSet ls = link_set(*table_, {0, 0, source.l}, {k.di, k.dj, target.l});
        it = cache_.emplace(k, std::move(ls)).first;
    }
    return it->second;
}

const LinkSet& LinkSetStore::at(LiftedLabel source, LiftedLabel target) const {
    auto it = cache_.find(key(source, target));
    if (it == cache_.end()) throw DomainError("link set not prefetched");
    return it->second;
}

void LinkSetStore::prefetch(const std::vector<std::pair<LiftedLabel, LiftedLabel>>& pairs, int workers) {
    std::vector<Key> todo;
    for (const auto& [s, t] : pairs) {
        const Key k = key(s, t);
        if (!cache_.count(k) && std::find(todo.begin(), todo.end(), k) == todo.end()) todo.push_back(k);
    }
    std::sort(todo.begin(), todo.end());
    std::vector<LinkSet> out(todo.size());
    parallel_for(todo.size(), workers, [&](std::size_t i) {
        const Key& k = todo[i];
        out[i] = link_set(*table_, {0, 0, k.ls}, {k.di, k.dj, k.lt});
    });
    for (size_t i = 0; i < todo.size(); ++i) cache_.emplace(todo[i], std::move(out[i]));
}

// ------------------------------------------------------------ d_L geodesic

bool segment_free(const Table& table, Vec2 a, Vec2 b, double tol) {
    const Vec2 mid = (a + b) * 0.5;
    const double half = 0.5 * norm(b - a);
    for (const LiftedLabel& lab : obstacles_near(table, mid, half + 1e-9)) {
        const Scatterer& sc = table.scatterer(lab.l);
        const Vec2 off = cell_vec(lab);
        const double dist = point_segment_distance(sc.center() + off, a, b);
        if (dist > sc.outer_radius() + tol) continue;
        if (segment_clearance(sc, off, a, b) < -tol) return false;
    }
    return true;
}

DlPath dl_geodesic(const Table& table, const TablePoint& x, const TablePoint& y) {
    DlPath path;
    if (norm(x.p - y.p) == 0.0) return path;
    struct Node {
        Vec2 p;
        int obs = -1;  // index into obstacles
        double s = 0.0;
    };
    const Vec2 lo{std::min(x.p.x, y.p.x) - 1.0, std::min(x.p.y, y.p.y) - 1.0};
    const Vec2 hi{std::max(x.p.x, y.p.x) + 1.0, std::max(x.p.y, y.p.y) + 1.0};
    std::vector<LiftedLabel> obs;
    for (const LiftedLabel& lab : obstacles_near(table, (lo + hi) * 0.5, 0.5 * norm(hi - lo))) {
        const Vec2 c = table.scatterer(lab.l).center() + cell_vec(lab);
        if (c.x >= lo.x && c.x <= hi.x && c.y >= lo.y && c.y <= hi.y) obs.push_back(lab);
    }
    auto obs_index = [&](const std::optional<LiftedLabel>& l) {
        if (!l) return -1;
        for (size_t k = 0; k < obs.size(); ++k)
            if (obs[k] == *l) return static_cast<int>(k);
        return -1;
    };
    std::vector<Node> nodes{{x.p, obs_index(x.on), x.s}, {y.p, obs_index(y.on), y.s}};
    struct Edge {
        int to;
        double w;
        bool arc;
    };
    std::vector<std::vector<Edge>> adj(2);
    auto add_node = [&](Vec2 p, int o, double s) {
        nodes.push_back({p, o, s});
        adj.emplace_back();
        return static_cast<int>(nodes.size()) - 1;
    };
    auto add_seg = [&](int a, int b) {
        if (!segment_free(table, nodes[static_cast<size_t>(a)].p, nodes[static_cast<size_t>(b)].p)) return;
        const double w = norm(nodes[static_cast<size_t>(a)].p - nodes[static_cast<size_t>(b)].p);
        adj[static_cast<size_t>(a)].push_back({b, w, false});
        adj[static_cast<size_t>(b)].push_back({a, w, false});
    };
    add_seg(0, 1);
    for (int e = 0; e < 2; ++e) {
        const Node& en = nodes[static_cast<size_t>(e)];
        const Vec2 ep = en.p;
        const int eobs = en.obs;
        for (size_t o = 0; o < obs.size(); ++o) {
            if (static_cast<int>(o) == eobs) continue;
            const Scatterer& sc = table.scatterer(obs[o].l);
            const TangentPair tp = tangents_from_point(sc, cell_vec(obs[o]), ep);
            add_seg(e, add_node(tp.p_minus, static_cast<int>(o), tp.s_minus));
            add_seg(e, add_node(tp.p_plus, static_cast<int>(o), tp.s_plus));
        }
    }
    for (size_t a = 0; a < obs.size(); ++a)
        for (size_t b = a + 1; b < obs.size(); ++b)
            for (const Bitangent& bt : common_tangents(table, obs[a], obs[b]))
                add_seg(add_node(bt.p_a, static_cast<int>(a), bt.s_a), add_node(bt.p_b, static_cast<int>(b), bt.s_b));
    // boundary arcs between consecutive nodes on each obstacle
    for (size_t o = 0; o < obs.size(); ++o) {
        const double per = table.scatterer(obs[o].l).perimeter();
        std::vector<int> on;
        for (size_t k = 0; k < nodes.size(); ++k)
            if (nodes[k].obs == static_cast<int>(o)) on.push_back(static_cast<int>(k));
        if (on.size() < 2) continue;
        std::sort(on.begin(), on.end(), [&](int a, int b) {
            return nodes[static_cast<size_t>(a)].s < nodes[static_cast<size_t>(b)].s;
        });
        for (size_t k = 0; k < on.size(); ++k) {
            const int a = on[k], b = on[(k + 1) % on.size()];
            double w = nodes[static_cast<size_t>(b)].s - nodes[static_cast<size_t>(a)].s;
            if (w < 0) w += per;
            adj[static_cast<size_t>(a)].push_back({b, w, true});
            adj[static_cast<size_t>(b)].push_back({a, w, true});
        }
    }
    // Dijkstra
    std::vector<double> dist(nodes.size(), kInf);
    std::vector<int> prev(nodes.size(), -1);
    std::vector<char> prev_arc(nodes.size(), 0);
    using QE = std::pair<double, int>;
    std::priority_queue<QE, std::vector<QE>, std::greater<>> pq;
    dist[0] = 0.0;
    pq.push({0.0, 0});
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d > dist[static_cast<size_t>(u)]) continue;
        if (u == 1) break;
        for (const Edge& e : adj[static_cast<size_t>(u)]) {
            const double nd = d + e.w;
            if (nd < dist[static_cast<size_t>(e.to)]) {
                dist[static_cast<size_t>(e.to)] = nd;
                prev[static_cast<size_t>(e.to)] = u;
                prev_arc[static_cast<size_t>(e.to)] = e.arc;
                pq.push({nd, e.to});
            }
        }
    }
    if (!std::isfinite(dist[1])) throw SolverFailure("no path found between the two points");
    std::vector<int> chain;
    for (int v = 1; v != -1; v = prev[static_cast<size_t>(v)]) chain.push_back(v);
    std::reverse(chain.begin(), chain.end());
    for (size_t k = 1; k < chain.size(); ++k) {
        const Node& a = nodes[static_cast<size_t>(chain[k - 1])];
        const Node& b = nodes[static_cast<size_t>(chain[k])];
        PathPiece pc;
        pc.from = a.p;
        pc.to = b.p;
        if (prev_arc[static_cast<size_t>(chain[k])]) {
            pc.kind = PathPiece::Kind::arc;
            pc.obstacle = obs[static_cast<size_t>(a.obs)];
            pc.s_from = a.s;
            pc.s_to = b.s;
            const double per = table.scatterer(pc.obstacle.l).perimeter();
            double w = std::fmod(b.s - a.s, per);
            if (w < 0) w += per;
            pc.length = std::min(w, per - w);
        } else {
            pc.length = norm(b.p - a.p);
        }
        path.pieces.push_back(pc);
    }
    path.length = dist[1];
    return path;
}

// -------------------------------------------------------- enriched length

ELEval enriched_length(const Table& table, const OrbitWord& w, const std::vector<double>& e,
                       const std::vector<double>& s) {
    const int q = w.q();
    ELEval r;
    r.grad_e.assign(static_cast<size_t>(q), 0.0);
    r.grad_s.assign(static_cast<size_t>(q), 0.0);
    for (int k = 0; k < q; ++k) {
        const auto ku = static_cast<size_t>(k), nu = static_cast<size_t>((k + 1) % q);
        const TauPair t = tau_pair(table, w.I[ku], w.rho[ku], w.rho[nu], s[ku], e[nu]);
        r.chord.push_back(t.tau);
        r.value += t.tau;
        r.grad_s[ku] += t.d1;
        r.grad_e[nu] += t.d2;
    }
    for (int k = 0; k < q; ++k) {
        const auto ku = static_cast<size_t>(k);
        const ArcDistance d = arc_distance(table.scatterer(w.rho[ku]), e[ku], s[ku]);
        r.arc.push_back(d.value);
        r.d.push_back(d);
        r.value += d.value;
    }
    return r;
}

namespace {

struct WordLinks {
    std::vector<const LinkSet*> in, out;  // in[k] holds e_k, out[k] holds s_k
};

WordLinks word_links(LinkSetStore& store, const OrbitWord& w, bool read_only) {
    const int q = w.q();
    const auto labels = lifted_labels(w);
    const LiftedLabel& last = labels.back();
    WordLinks wl;
    for (int k = 0; k < q; ++k) {
        const LiftedLabel cur = labels[static_cast<size_t>(k)];
        LiftedLabel prev = k > 0 ? labels[static_cast<size_t>(k - 1)] : labels[static_cast<size_t>(q - 1)];
        if (k == 0) prev = {prev.i - last.i, prev.j - last.j, prev.l};
        const LiftedLabel next = labels[static_cast<size_t>(k + 1)];
        if (read_only) {
            wl.in.push_back(&store.at(prev, cur));
            wl.out.push_back(&store.at(next, cur));
        } else {
            wl.in.push_back(&store.get(prev, cur));
            wl.out.push_back(&store.get(next, cur));
        }
    }
    return wl;
}

std::vector<std::pair<LiftedLabel, LiftedLabel>> word_pairs(const OrbitWord& w) {
    const int q = w.q();
    const auto labels = lifted_labels(w);
    const LiftedLabel& last = labels.back();
    std::vector<std::pair<LiftedLabel, LiftedLabel>> out;
    for (int k = 0; k < q; ++k) {
        const LiftedLabel cur = labels[static_cast<size_t>(k)];
        LiftedLabel prev = k > 0 ? labels[static_cast<size_t>(k - 1)] : labels[static_cast<size_t>(q - 1)];
        if (k == 0) prev = {prev.i - last.i, prev.j - last.j, prev.l};
        out.push_back({prev, cur});
        out.push_back({labels[static_cast<size_t>(k + 1)], cur});
    }
    return out;
}

// Box for one combination of link-set components; x = (e_0, s_0, e_1, s_1, …).
struct Box {
    std::vector<double> lo, hi;
};

double dist_to_cone(double v, int side) {
    // side: -1 at lower bound, +1 at upper bound, 0 interior; 0 ∈ v + N
    if (side < 0) return std::max(0.0, -v);
    if (side > 0) return std::max(0.0, v);
    return std::abs(v);
}

class ELProblem {
public:
    ELProblem(const Table& t, const OrbitWord& w, const Box& b) : table_(t), w_(w), box_(b), q_(w.q()) {}

    int n() const { return 2 * q_; }
    const Box& box() const { return box_; }

    // Huber-smoothed value (mu > 0) or exact value (mu == 0); gradient and Hessian optional
    double eval(const std::vector<double>& x, double mu, Eigen::VectorXd* g, Eigen::MatrixXd* H) const {
        double f = 0.0;
        if (g) *g = Eigen::VectorXd::Zero(n());
        if (H) *H = Eigen::MatrixXd::Zero(n(), n());
        for (int k = 0; k < q_; ++k) {
            const int nk = (k + 1) % q_;
            const auto ku = static_cast<size_t>(k), nu = static_cast<size_t>(nk);
            const TauPair t = tau_pair(table_, w_.I[ku], w_.rho[ku], w_.rho[nu], x[2 * ku + 1], x[2 * nu]);
            f += t.tau;
            const int is = 2 * k + 1, ie = 2 * nk;
            if (g) {
                (*g)(is) += t.d1;
                (*g)(ie) += t.d2;
            }
            if (H) {
                (*H)(is, is) += t.d11;
                (*H)(ie, ie) += t.d22;
                (*H)(is, ie) += t.d12;
                (*H)(ie, is) += t.d12;
            }
        }
        for (int k = 0; k < q_; ++k) {
            const auto ku = static_cast<size_t>(k);
            const double per = table_.scatterer(w_.rho[ku]).perimeter();
            const double delta = std::remainder(x[2 * ku + 1] - x[2 * ku], per);
            double val, d1, d2;
            if (mu > 0 && std::abs(delta) <= mu) {
                val = delta * delta / (2 * mu);
                d1 = delta / mu;
                d2 = 1.0 / mu;
            } else {
                val = std::abs(delta) - (mu > 0 ? 0.5 * mu : 0.0);
                d1 = delta >= 0 ? 1.0 : -1.0;
                d2 = 0.0;
            }
            f += val;
            const int ie = 2 * k, is = 2 * k + 1;
            if (g) {
                (*g)(is) += d1;
                (*g)(ie) -= d1;
            }
            if (H) {
                (*H)(is, is) += d2;
                (*H)(ie, ie) += d2;
                (*H)(is, ie) -= d2;
                (*H)(ie, is) -= d2;
            }
        }
        return f;
    }

    std::vector<double> project(std::vector<double> x) const {
        for (int i = 0; i < n(); ++i) {
            const auto iu = static_cast<size_t>(i);
            x[iu] = std::clamp(x[iu], box_.lo[iu], box_.hi[iu]);
        }
        return x;
    }

    // projected Newton on the Huber-smoothed problem
    std::vector<double> smooth_solve(std::vector<double> x, double mu) const {
        for (int it = 0; it < 100; ++it) {
            Eigen::VectorXd g;
            Eigen::MatrixXd H;
            const double f = eval(x, mu, &g, &H);
            const double eps = 1e-12;
            std::vector<int> fr;
            double pg = 0.0;
            for (int i = 0; i < n(); ++i) {
                const auto iu = static_cast<size_t>(i);
                const bool at_lo = x[iu] <= box_.lo[iu] + eps && g(i) > 0;
                const bool at_hi = x[iu] >= box_.hi[iu] - eps && g(i) < 0;
                if (!at_lo && !at_hi) {
                    fr.push_back(i);
                    pg = std::max(pg, std::abs(g(i)));
                }
            }
            if (fr.empty() || pg < 1e-14) break;
            const int m = static_cast<int>(fr.size());
            Eigen::MatrixXd Hr(m, m);
            Eigen::VectorXd gr(m);
            for (int a = 0; a < m; ++a) {
                gr(a) = g(fr[static_cast<size_t>(a)]);
                for (int b = 0; b < m; ++b) Hr(a, b) = H(fr[static_cast<size_t>(a)], fr[static_cast<size_t>(b)]);
            }
            Eigen::VectorXd p;
            double shift = 0.0;
            for (int tries = 0; tries < 30; ++tries) {
                Eigen::LLT<Eigen::MatrixXd> llt(Hr + shift * Eigen::MatrixXd::Identity(m, m));
                if (llt.info() == Eigen::Success) {
                    p = -llt.solve(gr);
                    break;
                }
                shift = shift == 0.0 ? 1e-8 : shift * 10;
            }
            if (p.size() == 0) p = -gr;
            double alpha = 1.0;
            bool moved = false;
            for (int ls = 0; ls < 50; ++ls) {
                std::vector<double> y = x;
                for (int a = 0; a < m; ++a) y[static_cast<size_t>(fr[static_cast<size_t>(a)])] += alpha * p(a);
                y = project(y);
                double dec = 0.0;
                for (int i = 0; i < n(); ++i) dec += g(i) * (y[static_cast<size_t>(i)] - x[static_cast<size_t>(i)]);
                double fy;
                try {
                    fy = eval(y, mu, nullptr, nullptr);
                } catch (const DegenerateSegment&) {
                    alpha *= 0.5;
                    continue;
                }
                if (fy <= f + 1e-4 * dec) {
                    moved = fy < f || dec < 0;
                    x = y;
                    break;
                }
                alpha *= 0.5;
            }
            if (!moved) break;
        }
        return x;
    }

    // distance of 0 from the assembled subdifferential at x
    double certificate(const std::vector<double>& x, double kink_tol) const {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(n());
        for (int k = 0; k < q_; ++k) {
            const int nk = (k + 1) % q_;
            const auto ku = static_cast<size_t>(k), nu = static_cast<size_t>(nk);
            const TauPair t = tau_pair(table_, w_.I[ku], w_.rho[ku], w_.rho[nu], x[2 * ku + 1], x[2 * nu]);
            g(2 * k + 1) += t.d1;
            g(2 * nk) += t.d2;
        }
        const double eps = 1e-12;
        auto side = [&](int i) {
            const auto iu = static_cast<size_t>(i);
            if (x[iu] <= box_.lo[iu] + eps) return -1;
            if (x[iu] >= box_.hi[iu] - eps) return 1;
            return 0;
        };
        double worst = 0.0;
        for (int k = 0; k < q_; ++k) {
            const auto ku = static_cast<size_t>(k);
            const ArcDistance d = arc_distance(table_.scatterer(w_.rho[ku]), x[2 * ku], x[2 * ku + 1], kink_tol);
            const double ge = g(2 * k), gs = g(2 * k + 1);
            const int se = side(2 * k), ss = side(2 * k + 1);
            // ∂_e = ge − t, ∂_s = gs + t with t ∈ [sub_lo, sub_hi]
            double best = kInf;
            for (double t : {d.sub_lo, d.sub_hi, ge, -gs, 0.5 * (ge - gs)}) {
                const double tc = std::clamp(t, d.sub_lo, d.sub_hi);
                best = std::min(best, std::max(dist_to_cone(ge - tc, se), dist_to_cone(gs + tc, ss)));
            }
            worst = std::max(worst, best);
        }
        return worst;
    }

    // Newton on the active-set equations: stationarity on kinks, tangency elsewhere.
    std::vector<double> polish(std::vector<double> x, double kink_tol) const {
        const double eps = 1e-10;
        std::vector<char> kink(static_cast<size_t>(q_));
        std::vector<double> shift(static_cast<size_t>(q_), 0.0);
        for (int k = 0; k < q_; ++k) {
            const auto ku = static_cast<size_t>(k);
            const double per = table_.scatterer(w_.rho[ku]).perimeter();
            kink[ku] = std::abs(std::remainder(x[2 * ku + 1] - x[2 * ku], per)) <= 1e-6;
            if (kink[ku]) {
                shift[ku] = per * std::round((x[2 * ku + 1] - x[2 * ku]) / per);
                x[2 * ku + 1] = x[2 * ku] + shift[ku];
            }
        }
        // unknowns: one per kink, two otherwise; bound-active ones stay fixed
        struct Var {
            int k;
            int which;  // 0: merged, 1: e, 2: s
        };
        std::vector<Var> vars;
        auto is_fixed = [&](int i) {
            const auto iu = static_cast<size_t>(i);
            return x[iu] <= box_.lo[iu] + eps || x[iu] >= box_.hi[iu] - eps;
        };
        for (int k = 0; k < q_; ++k) {
            if (kink[static_cast<size_t>(k)]) {
                if (!is_fixed(2 * k) && !is_fixed(2 * k + 1)) vars.push_back({k, 0});
            } else {
                if (!is_fixed(2 * k)) vars.push_back({k, 1});
                if (!is_fixed(2 * k + 1)) vars.push_back({k, 2});
            }
        }
        if (vars.empty()) return x;
        const int m = static_cast<int>(vars.size());
        auto residual = [&](const std::vector<double>& y) {
            Eigen::VectorXd r(m);
            std::vector<TauPair> tp;
            for (int k = 0; k < q_; ++k) {
                const int nk = (k + 1) % q_;
                const auto ku = static_cast<size_t>(k), nu = static_cast<size_t>(nk);
                tp.push_back(tau_pair(table_, w_.I[ku], w_.rho[ku], w_.rho[nu], y[2 * ku + 1], y[2 * nu]));
            }
            for (int a = 0; a < m; ++a) {
                const Var& v = vars[static_cast<size_t>(a)];
                const auto& in = tp[static_cast<size_t>((v.k + q_ - 1) % q_)];
                const auto& out = tp[static_cast<size_t>(v.k)];
                if (v.which == 0) r(a) = in.d2 + out.d1;
                else if (v.which == 1) r(a) = in.cos2;
                else r(a) = out.cos1;
            }
            return r;
        };
        auto apply = [&](std::vector<double> y, const Eigen::VectorXd& dx) {
            for (int a = 0; a < m; ++a) {
                const Var& v = vars[static_cast<size_t>(a)];
                const auto e = static_cast<size_t>(2 * v.k), s = e + 1;
                if (v.which == 0) {
                    y[e] += dx(a);
                    y[s] = y[e] + shift[static_cast<size_t>(v.k)];
                } else if (v.which == 1) {
                    y[e] += dx(a);
                } else {
                    y[s] += dx(a);
                }
            }
            return y;
        };
        for (int it = 0; it < 50; ++it) {
            const Eigen::VectorXd r = residual(x);
            if (r.norm() < 1e-15) break;
            Eigen::MatrixXd J(m, m);
            const double h = 1e-7;
            for (int a = 0; a < m; ++a) {
                Eigen::VectorXd d = Eigen::VectorXd::Zero(m);
                d(a) = h;
                J.col(a) = (residual(apply(x, d)) - residual(apply(x, -d))) / (2 * h);
            }
            const Eigen::VectorXd dx = -J.fullPivLu().solve(r);
            if (!dx.allFinite()) break;
            std::vector<double> y = apply(x, dx);
            bool inside = true;
            for (int i = 0; i < n(); ++i) {
                const auto iu = static_cast<size_t>(i);
                inside = inside && y[iu] >= box_.lo[iu] - 1e-12 && y[iu] <= box_.hi[iu] + 1e-12;
            }
            if (!inside) break;
            const Eigen::VectorXd ry = residual(y);
            if (!(ry.norm() < r.norm())) break;
            x = project(y);
        }
        (void)kink_tol;
        return x;
    }

private:
    const Table& table_;
    const OrbitWord& w_;
    Box box_;
    int q_;
};

double min_chord_clearance(const Table& table, const OrbitWord& w, const std::vector<double>& e,
                           const std::vector<double>& s) {
    const int q = w.q();
    const auto labels = lifted_labels(w);
    double worst = kInf;
    for (int k = 0; k < q; ++k) {
        const auto ku = static_cast<size_t>(k), nu = static_cast<size_t>((k + 1) % q);
        const LiftedLabel la = labels[ku], lb = labels[static_cast<size_t>(k + 1)];
        const Vec2 a = lift_scatterer(table, la).at(s[ku]).point;
        const Vec2 b = lift_scatterer(table, lb).at(e[nu]).point;
        const Vec2 mid = (a + b) * 0.5;
        for (const LiftedLabel& lab : obstacles_near(table, mid, 0.5 * norm(b - a) + 1e-9)) {
            if (lab == la || lab == lb) continue;
            const Scatterer& sc = table.scatterer(lab.l);
            if (point_segment_distance(sc.center() + cell_vec(lab), a, b) > sc.outer_radius() + 1e-6) continue;
            worst = std::min(worst, segment_clearance(sc, cell_vec(lab), a, b));
        }
    }
    return worst;
}

BilliardCycle make_cycle(const Table& table, const OrbitWord& w, const std::vector<double>& e,
                         const std::vector<double>& s, double certificate) {
    BilliardCycle c;
    c.word = w;
    c.e = e;
    c.s = s;
    for (int k = 0; k < w.q(); ++k) {
        const auto ku = static_cast<size_t>(k);
        const Scatterer& sc = table.scatterer(w.rho[ku]);
        c.e[ku] = sc.wrap(e[ku]);
        c.s[ku] = sc.wrap(s[ku]);
    }
    const ELEval ev = enriched_length(table, w, c.e, c.s);
    c.EL = ev.value;
    c.chords = ev.chord;
    c.arcs = ev.arc;
    c.orbit = true;
    for (int k = 0; k < w.q(); ++k) {
        const auto ku = static_cast<size_t>(k);
        auto tr = BilliardCycle::Transition::tangential;
        if (ev.arc[ku] <= 1e-9)
            tr = std::abs(ev.grad_e[ku] + ev.grad_s[ku]) <= 1e-7 ? BilliardCycle::Transition::specular
                                                                  : BilliardCycle::Transition::constrained;
        c.transitions.push_back(tr);
        c.orbit = c.orbit && tr == BilliardCycle::Transition::specular;
    }
    c.certificate = certificate;
    c.clearance = min_chord_clearance(table, w, c.e, c.s);
    return c;
}

}  // namespace

void require_feasible(LinkSetStore& store, const OrbitWord& w, const std::vector<double>& e,
                      const std::vector<double>& s, double tol) {
    const WordLinks wl = word_links(store, w, false);
    for (int k = 0; k < w.q(); ++k) {
        const auto ku = static_cast<size_t>(k);
        if (wl.in[ku]->locate(e[ku], tol) < 0 || wl.out[ku]->locate(s[ku], tol) < 0)
            throw InfeasiblePoint("bounce " + std::to_string(k) + " lies outside its link set");
    }
}

namespace {

BilliardCycle minimize_with_links(const Table& table, const WordLinks& wl, const OrbitWord& w,
                                  const ELOptions& opts) {
    const int q = w.q();
    for (int k = 0; k < q; ++k)
        if (wl.in[static_cast<size_t>(k)]->empty() || wl.out[static_cast<size_t>(k)]->empty())
            throw InfeasibleWord("empty link set at bounce " + std::to_string(k) + " of " + to_string(w));

    // a genuine periodic orbit inside the link sets is the minimizer
    std::optional<GeneralizedOrbit> orbit;
    try {
        orbit = find_generalized_orbit(table, w);
    } catch (const Error&) {
    }
    if (orbit && orbit->min_cos > 0.0) {
        bool inside = true;
        for (int k = 0; k < q; ++k) {
            const double sk = orbit->s[static_cast<size_t>(k)];
            inside = inside && wl.in[static_cast<size_t>(k)]->locate(sk) >= 0 &&
                     wl.out[static_cast<size_t>(k)]->locate(sk) >= 0;
        }
        if (inside) return make_cycle(table, w, orbit->s, orbit->s, orbit->grad_norm);
    }

    // enumerate component combinations of multi-interval link sets
    std::vector<int> sizes;
    for (int k = 0; k < q; ++k) {
        sizes.push_back(static_cast<int>(wl.in[static_cast<size_t>(k)]->arcs.size()));
        sizes.push_back(static_cast<int>(wl.out[static_cast<size_t>(k)]->arcs.size()));
    }
    std::optional<BilliardCycle> best;
    double best_cert = kInf;
    std::vector<int> idx(sizes.size(), 0);
    for (int combo = 0; combo < opts.max_combos; ++combo) {
        Box box;
        std::vector<double> x0;
        for (int k = 0; k < q; ++k) {
            for (int side = 0; side < 2; ++side) {
                const LinkSet* ls = side == 0 ? wl.in[static_cast<size_t>(k)] : wl.out[static_cast<size_t>(k)];
                const Interval& iv = ls->arcs[static_cast<size_t>(idx[static_cast<size_t>(2 * k + side)])];
                box.lo.push_back(iv.lo);
                box.hi.push_back(iv.hi);
            }
        }
        // start: orbit parameters brought into the box, else midpoints
        for (int i = 0; i < 2 * q; ++i) {
            const auto iu = static_cast<size_t>(i);
            double v = 0.5 * (box.lo[iu] + box.hi[iu]);
            if (orbit) {
                const double per = table.scatterer(w.rho[iu / 2]).perimeter();
                const double sk = orbit->s[iu / 2];
                const double mid = v;
                v = std::clamp(mid + std::remainder(sk - mid, per), box.lo[iu], box.hi[iu]);
            }
            x0.push_back(v);
        }
        // keep e_k and s_k on the same branch
        for (int k = 0; k < q; ++k) {
            const auto e = static_cast<size_t>(2 * k), s = e + 1;
            const double per = table.scatterer(w.rho[static_cast<size_t>(k)]).perimeter();
            for (double sh : {-per, per})
                if (box.lo[s] + sh <= x0[e] + 0.5 * per && box.hi[s] + sh >= x0[e] - 0.5 * per &&
                    std::abs(box.lo[s] + sh - x0[e]) < std::abs(box.lo[s] - x0[e])) {
                    box.lo[s] += sh;
                    box.hi[s] += sh;
                    x0[s] += sh;
                }
        }
        ELProblem prob(table, w, box);
        std::vector<double> x = prob.project(x0);
        try {
            // the continuation can pass a certified point and then slide off it
            std::vector<double> kept;
            double kept_f = kInf;
            for (double mu = 1e-1; mu >= 1e-13; mu *= 0.1) {
                x = prob.smooth_solve(x, mu);
                if (mu <= 1e-6 && prob.certificate(x, opts.kink_tol) <= opts.tol_sub) {
                    const double f = prob.eval(x, 0.0, nullptr, nullptr);
                    if (f < kept_f) {
                        kept = x;
                        kept_f = f;
                    }
                }
            }
            double cert = prob.certificate(x, opts.kink_tol);
            if (cert > 0.0) {
                const std::vector<double> xp = prob.polish(x, opts.kink_tol);
                const double cp = prob.certificate(xp, opts.kink_tol);
                if (cp < cert) {
                    x = xp;
                    cert = cp;
                }
            }
            if (cert > opts.tol_sub && !kept.empty()) {
                x = kept;
                cert = prob.certificate(x, opts.kink_tol);
            }
            std::vector<double> e(static_cast<size_t>(q)), s(static_cast<size_t>(q));
            for (int k = 0; k < q; ++k) {
                e[static_cast<size_t>(k)] = x[static_cast<size_t>(2 * k)];
                s[static_cast<size_t>(k)] = x[static_cast<size_t>(2 * k + 1)];
            }
            BilliardCycle c = make_cycle(table, w, e, s, cert);
            const bool ok = cert <= opts.tol_sub;
            const bool best_ok = best && best_cert <= opts.tol_sub;
            if (!best || (ok && !best_ok) || (ok == best_ok && c.EL < best->EL)) {
                best = c;
                best_cert = cert;
            }
        } catch (const DegenerateSegment&) {
        }
        // next combination
        size_t p = 0;
        while (p < idx.size()) {
            if (++idx[p] < sizes[p]) break;
            idx[p++] = 0;
        }
        if (p == idx.size()) break;
    }
    if (!best) throw SolverFailure("enriched minimization failed for " + to_string(w));
    if (best_cert > opts.tol_sub)
        throw SolverFailure("no certified minimizer for " + to_string(w) + " (residual " + format_double(best_cert) + ")");
    return *best;
}

}  // namespace

BilliardCycle minimize_EL(const Table& table, LinkSetStore& store, const OrbitWord& w, const ELOptions& opts) {
    try {
        validate_word(table, w);
    } catch (const InvalidWord& e) {
        throw InfeasibleWord(e.what());
    }
    return minimize_with_links(table, word_links(store, w, false), w, opts);
}

BilliardCycle minimize_EL(const Table& table, const OrbitWord& w, const ELOptions& opts) {
    LinkSetStore store(table);
    return minimize_EL(table, store, w, opts);
}

const char* to_string(EnrichedEntry::Kind k) {
    switch (k) {
        case EnrichedEntry::Kind::orbit: return "orbit";
        case EnrichedEntry::Kind::mixed: return "mixed";
        case EnrichedEntry::Kind::boundary: return "boundary";
    }
    return "?";
}

const EnrichedEntry* EnrichedTable::find(const std::string& key) const {
    for (const auto& e : entries)
        if (e.key == key) return &e;
    return nullptr;
}

EnrichedTable enriched_spectrum(const Table& table, const EnrichedOptions& opts) {
    table.require_finite_horizon();
    bool truncated = false;
    const auto words = enumerate_words(table, opts.q_max, opts.T_max, opts.budget, table.cell_bound(), &truncated);
    LinkSetStore store(table);
    std::vector<std::pair<LiftedLabel, LiftedLabel>> pairs;
    for (const auto& w : words)
        for (const auto& p : word_pairs(w)) pairs.push_back(p);
    store.prefetch(pairs, opts.workers);

    enum class Outcome { none, entry, infeasible, obstructed, failure };
    struct Slot {
        Outcome out = Outcome::none;
        EnrichedEntry entry;
        std::string msg;
    };
    std::vector<Slot> slots(words.size());
    const LinkSetStore& ro = store;
    parallel_for(words.size(), opts.workers, [&](std::size_t k) {
        const OrbitWord& w = words[k];
        Slot& sl = slots[k];
        const std::string key = to_string(w);
        try {
            WordLinks wl;
            for (const auto& [src, tgt] : word_pairs(w)) {
                (void)src;
                (void)tgt;
            }
            const auto labels = lifted_labels(w);
            const auto prs = word_pairs(w);
            for (size_t i = 0; i < prs.size(); i += 2) {
                wl.in.push_back(&ro.at(prs[i].first, prs[i].second));
                wl.out.push_back(&ro.at(prs[i + 1].first, prs[i + 1].second));
            }
            BilliardCycle c = minimize_with_links(table, wl, w, opts.el);
            if (c.clearance < -1e-9) {
                sl.out = Outcome::obstructed;
                sl.msg = key;
                return;
            }
            if (c.EL > opts.T_max) return;
            EnrichedEntry& e = sl.entry;
            e.key = key;
            e.q = w.q();
            e.EL = c.EL;
            e.kind = c.orbit ? EnrichedEntry::Kind::orbit : EnrichedEntry::Kind::mixed;
            e.doubled_class = (w.q() % 2) == 1;
            for (const LinkSet* ls : wl.in) e.multi_interval = e.multi_interval || ls->multi();
            for (const LinkSet* ls : wl.out) e.multi_interval = e.multi_interval || ls->multi();
            e.cycle = std::move(c);
            sl.out = Outcome::entry;
        } catch (const InfeasibleWord&) {
            sl.out = Outcome::infeasible;
            sl.msg = key;
        } catch (const Error& ex) {
            sl.out = Outcome::failure;
            sl.msg = ex.what();
        }
    });
    EnrichedTable out;
    out.q_max = opts.q_max;
    out.T_max = opts.T_max;
    out.partial = truncated;
    for (int l = 0; l < table.size(); ++l) {
        const double per = table.scatterer(l).perimeter();
        if (per > opts.T_max) continue;
        EnrichedEntry e;
        e.key = "boundary(" + std::to_string(l) + ")";
        e.q = 1;
        e.EL = per;
        e.kind = EnrichedEntry::Kind::boundary;
        e.boundary_scatterer = l;
        out.entries.push_back(e);
    }
    for (auto& sl : slots) {
        switch (sl.out) {
            case Outcome::entry: out.entries.push_back(std::move(sl.entry)); break;
            case Outcome::infeasible: out.infeasible.push_back(sl.msg); break;
            case Outcome::obstructed: out.obstructed.push_back(sl.msg); break;
            case Outcome::failure: out.failures.push_back(sl.msg); break;
            case Outcome::none: break;
        }
    }
    std::stable_sort(out.entries.begin(), out.entries.end(), [](const EnrichedEntry& a, const EnrichedEntry& b) {
        if (a.q != b.q) return a.q < b.q;
        if (a.EL != b.EL) return a.EL < b.EL;
        return a.key < b.key;
    });
    return out;
}

}  // namespace sinai
