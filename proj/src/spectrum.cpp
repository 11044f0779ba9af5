#include "sinai/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <regex>
#include <sstream>

#include "sinai/parallel.hpp"

namespace sinai {

// ------------------------------------------------------------------ words

std::vector<LiftedLabel> lifted_labels(const OrbitWord& w) {
    std::vector<LiftedLabel> out;
    Cell c{};
    for (int k = 0; k < w.q(); ++k) {
        out.push_back({c.i, c.j, w.rho[static_cast<size_t>(k)]});
        c = c + w.I[static_cast<size_t>(k)];
    }
    out.push_back({c.i, c.j, w.rho.empty() ? 0 : w.rho.front()});
    return out;
}

std::string to_string(const OrbitWord& w) {
    std::string out;
    const auto labels = lifted_labels(w);
    for (size_t k = 0; k < labels.size(); ++k) {
        if (k) out += ",";
        out += to_string(labels[k]);
    }
    return out;
}

OrbitWord parse_orbit_word(const std::string& text) {
    static const std::regex tok(R"(\(\s*(-?\d+)\s*,\s*(-?\d+)\s*;\s*(\d+)\s*\))");
    std::vector<LiftedLabel> labels;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), tok); it != std::sregex_iterator(); ++it)
        labels.push_back({std::stoi((*it)[1]), std::stoi((*it)[2]), std::stoi((*it)[3])});
    if (labels.size() < 3) throw InvalidWord("cycle word needs at least two bounces and a closing label: " + text);
    if (labels.back().l != labels.front().l)
        throw InvalidWord("closing label must repeat the first scatterer: " + text);
    OrbitWord w;
    for (size_t k = 0; k + 1 < labels.size(); ++k) {
        w.rho.push_back(labels[k].l);
        w.I.push_back({labels[k + 1].i - labels[k].i, labels[k + 1].j - labels[k].j});
    }
    return w;
}

OrbitWord rotate(const OrbitWord& w, int r) {
    const int q = w.q();
    OrbitWord out = w;
    for (int k = 0; k < q; ++k) {
        const size_t src = static_cast<size_t>(((k + r) % q + q) % q);
        out.rho[static_cast<size_t>(k)] = w.rho[src];
        out.I[static_cast<size_t>(k)] = w.I[src];
    }
    return out;
}

OrbitWord reverse(const OrbitWord& w) {
    const int q = w.q();
    OrbitWord out = w;
    for (int k = 0; k < q; ++k) {
        out.rho[static_cast<size_t>(k)] = w.rho[static_cast<size_t>(q - 1 - k)];
        const int src = k < q - 1 ? q - 2 - k : q - 1;
        out.I[static_cast<size_t>(k)] = -w.I[static_cast<size_t>(src)];
    }
    return out;
}

OrbitWord canonical(const OrbitWord& w) {
    OrbitWord best = w;
    const OrbitWord rev = reverse(w);
    for (int r = 0; r < w.q(); ++r) {
        best = std::min(best, rotate(w, r));
        best = std::min(best, rotate(rev, r));
    }
    return best;
}

bool is_primitive(const OrbitWord& w) {
    const int q = w.q();
    for (int d = 1; d < q; ++d)
        if (q % d == 0 && rotate(w, d) == w) return false;
    return true;
}

void validate_word(const Table& table, const OrbitWord& w) {
    if (w.q() < 2) throw InvalidWord("period must be at least 2");
    if (w.I.size() != w.rho.size()) throw InvalidWord("scatterer and displacement sequences differ in length");
    const int kc = table.cell_bound();
    for (int k = 0; k < w.q(); ++k) {
        const int r = w.rho[static_cast<size_t>(k)];
        if (r < 0 || r >= table.size()) throw InvalidWord("scatterer index out of range in " + to_string(w));
        const Cell I = w.I[static_cast<size_t>(k)];
        if (std::abs(I.i) > kc || std::abs(I.j) > kc)
            throw InvalidWord("displacement exceeds the cell bound in " + to_string(w));
        const int r2 = w.rho[static_cast<size_t>((k + 1) % w.q())];
        if (r == r2 && I == Cell{})
            throw InvalidWord("consecutive bounces on the same lifted scatterer in " + to_string(w));
    }
}

// ------------------------------------------------------------ length functional

TauPair tau_pair(const Table& table, Cell I, int rho_a, int rho_b, double s, double s2) {
    const BoundaryPoint a = table.scatterer(rho_a).at(s);
    const BoundaryPoint b = table.scatterer(rho_b).at(s2);
    TauPair t;
    t.p1 = a.point;
    t.p2 = b.point + I.vec();
    const Vec2 d = t.p2 - t.p1;
    t.tau = norm(d);
    if (t.tau < 1e-14 || (rho_a == rho_b && I == Cell{}))
        throw DegenerateSegment("coincident segment endpoints");
    t.u = d / t.tau;
    t.cos1 = dot(t.u, a.normal);
    t.sin1 = dot(t.u, a.tangent);
    t.cos2 = -dot(t.u, b.normal);
    t.sin2 = dot(t.u, b.tangent);
    t.d1 = -t.sin1;
    t.d2 = t.sin2;
    t.d11 = a.K * t.cos1 + t.cos1 * t.cos1 / t.tau;
    t.d22 = b.K * t.cos2 + t.cos2 * t.cos2 / t.tau;
    t.d12 = -(dot(a.tangent, b.tangent) - t.sin1 * t.sin2) / t.tau;
    return t;
}

Eigen::MatrixXd CyclicTridiag::dense() const {
    const int q = size();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(q, q);
    for (int k = 0; k < q; ++k) {
        m(k, k) += diag[static_cast<size_t>(k)];
        const int n = (k + 1) % q;
        if (n == k) continue;
        m(k, n) += off[static_cast<size_t>(k)];
        m(n, k) += off[static_cast<size_t>(k)];
    }
    return m;
}

Eigen::VectorXd CyclicTridiag::apply(const Eigen::VectorXd& x) const {
    return dense() * x;
}

namespace {

Eigen::VectorXd thomas(std::vector<double> a, const std::vector<double>& b, Eigen::VectorXd r) {
    // a: diagonal, b: super/sub diagonal (size n-1)
    const size_t n = a.size();
    for (size_t k = 1; k < n; ++k) {
        if (a[k - 1] == 0.0) throw HessianSingular("zero pivot in tridiagonal solve");
        const double m = b[k - 1] / a[k - 1];
        a[k] -= m * b[k - 1];
        r(static_cast<Eigen::Index>(k)) -= m * r(static_cast<Eigen::Index>(k - 1));
    }
    if (a[n - 1] == 0.0) throw HessianSingular("zero pivot in tridiagonal solve");
    Eigen::VectorXd x(static_cast<Eigen::Index>(n));
    x(static_cast<Eigen::Index>(n - 1)) = r(static_cast<Eigen::Index>(n - 1)) / a[n - 1];
    for (size_t k = n - 1; k-- > 0;)
        x(static_cast<Eigen::Index>(k)) =
            (r(static_cast<Eigen::Index>(k)) - b[k] * x(static_cast<Eigen::Index>(k + 1))) / a[k];
    return x;
}

}  // namespace

Eigen::VectorXd solve_cyclic_tridiagonal(const CyclicTridiag& A, const Eigen::VectorXd& rhs) {
    const int q = A.size();
    if (q == 1) return rhs / A.diag[0];
    if (q == 2) {
        const double a = A.diag[0], d = A.diag[1], b = A.off[0] + A.off[1];
        const double det = a * d - b * b;
        if (det == 0.0) throw HessianSingular("singular 2x2 Hessian");
        Eigen::VectorXd x(2);
        x << (d * rhs(0) - b * rhs(1)) / det, (a * rhs(1) - b * rhs(0)) / det;
        return x;
    }
    const double c = A.off[static_cast<size_t>(q - 1)];
    const double gamma = A.diag[0] == 0.0 ? 1.0 : -A.diag[0];
    std::vector<double> t = A.diag;
    t[0] -= gamma;
    t[static_cast<size_t>(q - 1)] -= c * c / gamma;
    std::vector<double> b(A.off.begin(), A.off.end() - 1);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(q);
    u(0) = gamma;
    u(q - 1) = c;
    const Eigen::VectorXd y = thomas(t, b, rhs);
    const Eigen::VectorXd z = thomas(t, b, u);
    const double vy = y(0) + c / gamma * y(q - 1);
    const double vz = z(0) + c / gamma * z(q - 1);
    if (1.0 + vz == 0.0) throw HessianSingular("singular cyclic correction");
    return y - z * (vy / (1.0 + vz));
}

LengthEval length_functional(const Table& table, const OrbitWord& w, const std::vector<double>& s) {
    const int q = w.q();
    LengthEval e;
    e.grad = Eigen::VectorXd::Zero(q);
    e.hess.diag.assign(static_cast<size_t>(q), 0.0);
    e.hess.off.assign(static_cast<size_t>(q), 0.0);
    e.pairs.reserve(static_cast<size_t>(q));
    for (int k = 0; k < q; ++k) {
        const int n = (k + 1) % q;
        const auto ku = static_cast<size_t>(k), nu = static_cast<size_t>(n);
        const TauPair t = tau_pair(table, w.I[ku], w.rho[ku], w.rho[nu], s[ku], s[nu]);
        e.L += t.tau;
        e.grad(k) += t.d1;
        e.grad(n) += t.d2;
        e.hess.diag[ku] += t.d11;
        e.hess.diag[nu] += t.d22;
        e.hess.off[ku] += t.d12;
        e.pairs.push_back(t);
    }
    return e;
}

const char* to_string(OrbitClass c) {
    switch (c) {
        case OrbitClass::regular: return "regular";
        case OrbitClass::grazing: return "grazing";
        case OrbitClass::ghost: return "ghost";
    }
    return "?";
}

// ---------------------------------------------------------------- solving

double wrapped_distance(const Table& table, const OrbitWord& w, const std::vector<double>& a,
                        const std::vector<double>& b) {
    double m = 0.0;
    for (int k = 0; k < w.q(); ++k) {
        const auto ku = static_cast<size_t>(k);
        const double per = table.scatterer(w.rho[ku]).perimeter();
        double d = std::fmod(a[ku] - b[ku], per);
        if (d > 0.5 * per) d -= per;
        if (d < -0.5 * per) d += per;
        m = std::max(m, std::abs(d));
    }
    return m;
}

std::vector<std::vector<double>> deterministic_starts(const Table& table, const OrbitWord& w, int n) {
    const int q = w.q();
    const auto labels = lifted_labels(w);
    const Cell total{labels.back().i, labels.back().j};
    auto center = [&](int k) {
        const int kk = ((k % q) + q) % q;
        const auto& lb = labels[static_cast<size_t>(kk)];
        Vec2 c = table.scatterer(lb.l).center() + Vec2{static_cast<double>(lb.i), static_cast<double>(lb.j)};
        const int wraps = (k - kk) / q;
        return c + total.vec() * static_cast<double>(wraps);
    };
    std::vector<double> base(static_cast<size_t>(q));
    for (int k = 0; k < q; ++k) {
        const Vec2 c = center(k);
        const Vec2 a = center(k - 1) - c, b = center(k + 1) - c;
        Vec2 d = normalized(a) + normalized(b);
        if (norm(d) < 1e-9) d = b;
        base[static_cast<size_t>(k)] =
            table.scatterer(w.rho[static_cast<size_t>(k)]).angle_to_arclength(std::atan2(d.y, d.x));
    }
    std::vector<std::vector<double>> out;
    for (int j = 0; j < n; ++j) {
        std::vector<double> s = base;
        if (j > 0) {
            for (int k = 0; k < q; ++k) {
                // lattice offset in [-0.3, 0.3] of the perimeter, rotated per coordinate
                const int slot = (j + 3 * k) % 8;
                const double off = -0.3 + 0.6 * (slot + 0.5) / 8.0;
                const double per = table.scatterer(w.rho[static_cast<size_t>(k)]).perimeter();
                s[static_cast<size_t>(k)] += off * per;
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

NewtonResult newton_trust_region(const Table& table, const OrbitWord& w, std::vector<double> s,
                                 const SolverOptions& opts) {
    const int q = w.q();
    double min_per = 1e300;
    for (int r : w.rho) min_per = std::min(min_per, table.scatterer(r).perimeter());
    double radius = 0.1 * min_per;
    const double radius_max = 0.5 * min_per;

    auto try_eval = [&](const std::vector<double>& x) -> std::optional<LengthEval> {
        try {
            return length_functional(table, w, x);
        } catch (const DegenerateSegment&) {
            return std::nullopt;
        }
    };

    NewtonResult res;
    auto cur = try_eval(s);
    if (!cur) return res;
    for (int it = 0; it < opts.max_iter; ++it) {
        res.iterations = it;
        const Eigen::VectorXd& g = cur->grad;
        const double gn = g.norm();
        if (gn < opts.tol_crit) {
            // polish to rounding level
            for (int extra = 0; extra < 4; ++extra) {
                Eigen::VectorXd step;
                try {
                    step = solve_cyclic_tridiagonal(cur->hess, cur->grad);
                } catch (const HessianSingular&) {
                    break;
                }
                std::vector<double> x = s;
                for (int k = 0; k < q; ++k) x[static_cast<size_t>(k)] -= step(k);
                auto nxt = try_eval(x);
                if (!nxt || !(nxt->grad.norm() < cur->grad.norm())) break;
                s = x;
                cur = nxt;
            }
            break;
        }
        const Eigen::MatrixXd H = cur->hess.dense();
        const bool pd = Eigen::LLT<Eigen::MatrixXd>(H).info() == Eigen::Success &&
                        H.selfadjointView<Eigen::Lower>().eigenvalues().minCoeff() > 0.0;
        Eigen::VectorXd pn;
        bool have_newton = false;
        if (pd) {
            try {
                pn = -solve_cyclic_tridiagonal(cur->hess, g);
                have_newton = pn.allFinite();
            } catch (const HessianSingular&) {
            }
        }
        // close to the minimum: plain Newton, since length differences drown in rounding
        if (have_newton && pn.norm() < 1e-7) {
            std::vector<double> x = s;
            for (int k = 0; k < q; ++k) x[static_cast<size_t>(k)] += pn(k);
            auto nxt = try_eval(x);
            if (nxt && nxt->grad.norm() < gn) {
                s = x;
                cur = nxt;
                continue;
            }
        }
        const double gHg = g.dot(H * g);
        Eigen::VectorXd p;
        if (have_newton && pn.norm() <= radius) {
            p = pn;
        } else {
            const Eigen::VectorXd pu = gHg > 0 ? Eigen::VectorXd(-(g.squaredNorm() / gHg) * g)
                                               : Eigen::VectorXd(-radius / gn * g);
            if (!have_newton || pu.norm() >= radius) {
                p = pu * (radius / pu.norm());
            } else {
                const Eigen::VectorXd d = pn - pu;
                const double a = d.squaredNorm(), b = 2 * pu.dot(d), c = pu.squaredNorm() - radius * radius;
                const double t = (-b + std::sqrt(b * b - 4 * a * c)) / (2 * a);
                p = pu + t * d;
            }
        }
        const double pred = -(g.dot(p) + 0.5 * p.dot(H * p));
        std::vector<double> x = s;
        for (int k = 0; k < q; ++k) x[static_cast<size_t>(k)] += p(k);
        auto nxt = try_eval(x);
        const double ratio = (nxt && pred > 0) ? (cur->L - nxt->L) / pred : -1.0;
        if (ratio < 0.25)
            radius *= 0.25;
        else if (ratio > 0.75 && p.norm() > 0.99 * radius)
            radius = std::min(2.0 * radius, radius_max);
        if (ratio > 1e-4) {
            s = x;
            cur = nxt;
        }
        if (radius < 1e-15) break;
    }
    res.s = s;
    res.L = cur->L;
    res.grad_norm = cur->grad.norm();
    res.converged = res.grad_norm < opts.tol_crit;
    return res;
}

Classification classify_orbit(const Table& table, const GeneralizedOrbit& o, double tol_graze) {
    Classification c;
    const OrbitWord& w = o.word;
    const int q = w.q();
    const LengthEval e = length_functional(table, w, o.s);
    const auto labels = lifted_labels(w);
    bool ghost = false, graze = false;
    for (int k = 0; k < q; ++k) {
        const auto& t = e.pairs[static_cast<size_t>(k)];
        for (double cs : {t.cos1, t.cos2}) {
            c.margin = std::min(c.margin, std::abs(cs));
            if (cs < -tol_graze) ghost = true;
            else if (cs < tol_graze) graze = true;
        }
        // obstacles near the chord, other than its two endpoints
        const LiftedLabel& la = labels[static_cast<size_t>(k)];
        const LiftedLabel& lb = labels[static_cast<size_t>(k + 1)];
        const Vec2 base{static_cast<double>(la.i), static_cast<double>(la.j)};
        const Vec2 p0 = t.p1 + base, p1 = t.p2 + base;
        const double xmin = std::min(p0.x, p1.x), xmax = std::max(p0.x, p1.x);
        const double ymin = std::min(p0.y, p1.y), ymax = std::max(p0.y, p1.y);
        for (int l = 0; l < table.size(); ++l) {
            const Scatterer& sc = table.scatterer(l);
            const double reach = sc.outer_radius() + 1e-6;
            const Vec2 cc = sc.center();
            for (int i = static_cast<int>(std::floor(xmin - cc.x - reach));
                 i <= static_cast<int>(std::ceil(xmax - cc.x + reach)); ++i) {
                for (int j = static_cast<int>(std::floor(ymin - cc.y - reach));
                     j <= static_cast<int>(std::ceil(ymax - cc.y + reach)); ++j) {
                    const LiftedLabel lab{i, j, l};
                    if (lab == la || lab == lb) continue;
                    const Vec2 off{static_cast<double>(i), static_cast<double>(j)};
                    const Vec2 cen = cc + off;
                    // distance from center to segment
                    const Vec2 d = p1 - p0;
                    const double tt = std::clamp(dot(cen - p0, d) / dot(d, d), 0.0, 1.0);
                    if (norm(cen - (p0 + d * tt)) > reach) continue;
                    const double clr = segment_clearance(sc, off, p0, p1);
                    c.margin = std::min(c.margin, std::abs(clr));
                    if (clr < -tol_graze) ghost = true;
                    else if (clr <= tol_graze) graze = true;
                }
            }
        }
    }
    c.cls = ghost ? OrbitClass::ghost : graze ? OrbitClass::grazing : OrbitClass::regular;
    c.near_grazing = c.margin < kNearGrazing;
    return c;
}

GeneralizedOrbit find_generalized_orbit(const Table& table, const OrbitWord& w, const SolverOptions& opts) {
    validate_word(table, w);
    const auto starts = deterministic_starts(table, w, std::max(1, std::min(opts.n_starts, 64)));
    std::vector<NewtonResult> good;
    double best_residual = 1e300;
    std::vector<double> best_s;
    for (const auto& s0 : starts) {
        NewtonResult r = newton_trust_region(table, w, s0, opts);
        if (!r.s.empty() && r.grad_norm < best_residual) {
            best_residual = r.grad_norm;
            best_s = r.s;
        }
        if (r.converged) good.push_back(std::move(r));
    }
    if (good.empty()) {
        // stalled on a flat valley: the same continuum the converged case rejects below
        if (!best_s.empty()) {
            const LengthEval e = length_functional(table, w, best_s);
            const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(e.hess.dense()).eigenvalues().minCoeff();
            Cell total;
            for (const Cell& I : w.I) total = total + I;
            const bool straight = e.L - norm(total.vec()) <= 1e-9 * e.L;
            if (!(lmin > kMinHessEig) || straight)
                throw HessianSingular("degenerate critical set for " + to_string(w) + " (lambda_min " +
                                      format_double(lmin) + ", residual " + format_double(best_residual) + ")");
        }
        throw SolverFailure("no start converged for " + to_string(w) +
                            " (best residual " + format_double(best_residual) + ")");
    }
    const auto best = std::min_element(good.begin(), good.end(),
                                       [](const auto& a, const auto& b) { return a.L < b.L; });
    GeneralizedOrbit o;
    o.word = w;
    o.s = best->s;
    for (int k = 0; k < w.q(); ++k)
        o.s[static_cast<size_t>(k)] = table.scatterer(w.rho[static_cast<size_t>(k)]).wrap(o.s[static_cast<size_t>(k)]);
    const LengthEval e = length_functional(table, w, o.s);
    o.length = e.L;
    o.grad_norm = e.grad.norm();
    o.hess_min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(e.hess.dense()).eigenvalues().minCoeff();
    if (!(o.hess_min_eig > kMinHessEig))
        throw HessianSingular("degenerate critical set for " + to_string(w) + " (lambda_min " +
                              format_double(o.hess_min_eig) + ")");
    o.min_cos = 1.0;
    for (const auto& t : e.pairs) {
        o.phi.push_back(std::atan2(t.sin1, t.cos1));
        o.min_cos = std::min({o.min_cos, t.cos1, t.cos2});
    }
    o.starts = static_cast<int>(starts.size());
    o.starts_converged = static_cast<int>(good.size());
    for (const auto& r : good) o.start_spread = std::max(o.start_spread, wrapped_distance(table, w, r.s, o.s));
    o.best_residual = best_residual;
    const Classification c = classify_orbit(table, o, opts.tol_graze);
    o.cls = c.cls;
    o.near_grazing = c.near_grazing;
    o.clearance = c.margin;
    return o;
}

ReplayCheck replay_orbit(const Table& table, const GeneralizedOrbit& o) {
    ReplayCheck rc;
    const auto labels = lifted_labels(o.word);
    const CollisionCoord start{{0, 0, o.word.rho[0]}, o.s[0], o.phi[0]};
    const MapOrbit m = billiard_map(table, start, o.word.q());
    if (!m.complete()) return rc;
    rc.sequence_matches = true;
    for (int k = 0; k < o.word.q(); ++k)
        rc.sequence_matches = rc.sequence_matches && m.points[static_cast<size_t>(k)].label == labels[static_cast<size_t>(k + 1)];
    const auto& end = m.points.back();
    const double per = table.scatterer(o.word.rho[0]).perimeter();
    double ds = std::fmod(end.s - start.s, per);
    if (ds > 0.5 * per) ds -= per;
    if (ds < -0.5 * per) ds += per;
    rc.closure_error = std::max(std::abs(ds), std::abs(end.phi - start.phi));
    return rc;
}

// ------------------------------------------------------------- enumeration

std::vector<OrbitWord> enumerate_words(const Table& table, int q_max, double T_max, std::size_t budget,
                                       int cell_bound, bool* truncated) {
    if (q_max < 2) throw DomainError("q_max must be at least 2");
    const int n = table.size();
    const int kc = cell_bound;
    struct Step {
        int rho;
        Cell I;
        double gap;
    };
    // admissible steps from each scatterer, sorted by gap lower bound
    std::vector<std::vector<Step>> steps(static_cast<size_t>(n));
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            for (int i = -kc; i <= kc; ++i) {
                for (int j = -kc; j <= kc; ++j) {
                    if (a == b && i == 0 && j == 0) continue;
                    const Vec2 off{static_cast<double>(i), static_cast<double>(j)};
                    const Scatterer& sa = table.scatterer(a);
                    const Scatterer& sb = table.scatterer(b);
                    // cheap bound first
                    const double rough = norm(sb.center() + off - sa.center()) - sa.outer_radius() - sb.outer_radius();
                    if (rough > T_max) continue;
                    const double g = convex_gap(sa, {0, 0}, sb, off);
                    if (g + table.tau_min() > T_max) continue;
                    steps[static_cast<size_t>(a)].push_back({b, {i, j}, g});
                }
            }
        }
        auto& v = steps[static_cast<size_t>(a)];
        std::sort(v.begin(), v.end(), [](const Step& x, const Step& y) { return x.gap < y.gap; });
    }
    const double tmin = table.tau_min();
    std::vector<OrbitWord> out;
    bool cut = false;
    for (int q = 2; q <= q_max && !cut; ++q) {
        OrbitWord w;
        w.rho.assign(static_cast<size_t>(q), 0);
        w.I.assign(static_cast<size_t>(q), Cell{});
        // depth-first: choose rho[0], then (I[k], rho[k+1]) for k < q-1, then I[q-1] closing to rho[0]
        auto dfs = [&](auto&& self, int k, double partial) -> void {
            if (cut) return;
            const int cur = w.rho[static_cast<size_t>(k)];
            const bool closing = k == q - 1;
            for (const Step& st : steps[static_cast<size_t>(cur)]) {
                const double lb = partial + st.gap + (closing ? 0.0 : (q - 1 - k) * tmin);
                if (lb > T_max) break;
                if (closing && st.rho != w.rho[0]) continue;
                if (!closing && st.rho < w.rho[0]) continue;
                w.I[static_cast<size_t>(k)] = st.I;
                if (closing) {
                    if (is_primitive(w) && canonical(w) == w) {
                        if (out.size() >= budget) {
                            cut = true;
                            return;
                        }
                        out.push_back(w);
                    }
                } else {
                    w.rho[static_cast<size_t>(k + 1)] = st.rho;
                    self(self, k + 1, partial + st.gap);
                }
            }
        };
        for (int r0 = 0; r0 < n && !cut; ++r0) {
            w.rho[0] = r0;
            dfs(dfs, 0, 0.0);
        }
    }
    if (truncated) *truncated = cut;
    return out;
}

void sort_entries(std::vector<SpectrumEntry>& entries) {
    std::stable_sort(entries.begin(), entries.end(), [](const SpectrumEntry& a, const SpectrumEntry& b) {
        if (a.word.q() != b.word.q()) return a.word.q() < b.word.q();
        if (a.orbit.length != b.orbit.length) return a.orbit.length < b.orbit.length;
        return a.key < b.key;
    });
}

SpectrumTable solve_words(const Table& table, const std::vector<OrbitWord>& words, const SpectrumOptions& opts,
                          const SpectrumTable* previous, const std::vector<char>* reuse) {
    std::vector<std::optional<SpectrumEntry>> slots(words.size());
    std::vector<std::string> fails(words.size()), degens(words.size());
    parallel_for(words.size(), opts.workers, [&](std::size_t k) {
        const std::string key = to_string(words[k]);
        if (previous && reuse && (*reuse)[k]) {
            if (const SpectrumEntry* e = previous->find(key)) {
                slots[k] = *e;
                return;
            }
        }
        try {
            GeneralizedOrbit o = find_generalized_orbit(table, words[k], opts.solver);
            if (o.length <= opts.T_max) slots[k] = SpectrumEntry{words[k], key, std::move(o)};
        } catch (const SolverFailure& e) {
            fails[k] = e.what();
        } catch (const HessianSingular&) {
            degens[k] = key;
        }
    });
    SpectrumTable out;
    out.q_max = opts.q_max;
    out.T_max = opts.T_max;
    out.words_examined = words.size();
    for (size_t k = 0; k < words.size(); ++k) {
        if (slots[k]) out.entries.push_back(std::move(*slots[k]));
        if (!fails[k].empty()) out.failures.push_back(fails[k]);
        if (!degens[k].empty()) out.degenerate.push_back(degens[k]);
    }
    sort_entries(out.entries);
    return out;
}

SpectrumTable enumerate_spectrum(const Table& table, const SpectrumOptions& opts) {
    table.require_finite_horizon();
    bool truncated = false;
    const int kc = opts.cell_bound > 0 ? opts.cell_bound : table.cell_bound();
    const auto words = enumerate_words(table, opts.q_max, opts.T_max, opts.budget, kc, &truncated);
    SpectrumTable out = solve_words(table, words, opts, nullptr, nullptr);
    if (truncated) {
        out.partial = true;
        throw SpectrumBudgetExceeded("more than " + std::to_string(opts.budget) + " candidate words", std::move(out));
    }
    return out;
}

std::vector<const SpectrumEntry*> SpectrumTable::of_class(OrbitClass c) const {
    std::vector<const SpectrumEntry*> v;
    for (const auto& e : entries)
        if (e.orbit.cls == c) v.push_back(&e);
    return v;
}

std::vector<const SpectrumEntry*> SpectrumTable::regular() const { return of_class(OrbitClass::regular); }

const SpectrumEntry* SpectrumTable::find(const std::string& key) const {
    for (const auto& e : entries)
        if (e.key == key) return &e;
    return nullptr;
}

std::vector<Collision> check_simple_spectrum(const SpectrumTable& spec, double tol) {
    auto reg = spec.regular();
    std::stable_sort(reg.begin(), reg.end(),
                     [](const SpectrumEntry* a, const SpectrumEntry* b) { return a->orbit.length < b->orbit.length; });
    std::vector<Collision> out;
    for (size_t a = 0; a < reg.size(); ++a) {
        for (size_t b = a + 1; b < reg.size(); ++b) {
            const double d = reg[b]->orbit.length - reg[a]->orbit.length;
            if (!(d < tol || d == 0.0)) break;
            out.push_back({reg[a]->key, reg[b]->key, reg[a]->orbit.length, reg[b]->orbit.length});
        }
    }
    return out;
}

}  // namespace sinai
