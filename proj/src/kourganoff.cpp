#include "sinai/kourganoff.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "sinai/parallel.hpp"
#include "sinai/spectrum.hpp"

namespace sinai {

// ------------------------------------------------------------- profile

std::array<double, 3> clamp_profile(double t) {
    if (t <= 0.0) return {t, 1.0, 0.0};
    if (t >= 1.0) return {1.0, 0.0, 0.0};
    const double r = 1.0 / t - 1.0 / (1.0 - t);
    double w = 0.0, w1 = 0.0, w2 = 0.0;
    if (r < -700.0) {
        w = 1.0;
    } else if (r <= 700.0) {
        w = 1.0 / (1.0 + std::exp(r));
        const double r1 = -1.0 / (t * t) - 1.0 / ((1.0 - t) * (1.0 - t));
        const double r2 = 2.0 / (t * t * t) - 2.0 / ((1.0 - t) * (1.0 - t) * (1.0 - t));
        w1 = -w * (1.0 - w) * r1;
        w2 = -w1 * (1.0 - 2.0 * w) * r1 - w * (1.0 - w) * r2;
    }
    return {t + (1.0 - t) * w, 1.0 - w + (1.0 - t) * w1, -2.0 * w1 + (1.0 - t) * w2};
}

namespace {

struct Foot {
    double d = 0.0, theta = 0.0, rho = 0.0;
};

// signed distance from q to the curve (its own frame) by Newton on the foot angle
Foot foot_point(const SupportCurve& cv, Vec2 q) {
    const Vec2 c = cv.center();
    Foot f;
    f.theta = std::atan2(q.y - c.y, q.x - c.x);
    for (int it = 0; it < 50; ++it) {
        const SupportDerivs e = cv.eval(f.theta);
        const Vec2 n = unit(f.theta), T = perp(n);
        const double g = dot(q, T) - e.h1;
        f.d = dot(q, n) - e.h;
        f.rho = e.h + e.h2;
        double den = f.d + f.rho;
        if (den < 1e-3 * f.rho) den = f.rho;
        const double step = g / den;
        f.theta += step;
        if (std::abs(step) < 1e-15) break;
    }
    const SupportDerivs e = cv.eval(f.theta);
    f.d = dot(q, unit(f.theta)) - e.h;
    f.rho = e.h + e.h2;
    return f;
}

template <class F>
void for_nearby_lifts(const Table& table, Vec2 p, double reach, F&& f) {
    for (int l = 0; l < table.size(); ++l) {
        const Scatterer& sc = table.scatterer(l);
        const Vec2 c = sc.center();
        const int i0 = static_cast<int>(std::lround(p.x - c.x)), j0 = static_cast<int>(std::lround(p.y - c.y));
        for (int i = i0 - 1; i <= i0 + 1; ++i)
            for (int j = j0 - 1; j <= j0 + 1; ++j) {
                const Vec2 q = p - Vec2{static_cast<double>(i), static_cast<double>(j)};
                if (norm(q - c) - sc.outer_radius() >= reach) continue;
                f(LiftedLabel{i, j, l}, sc, q);
            }
    }
}

}  // namespace

HeightProfile::HeightProfile(Table table, double clamp) : table_(std::move(table)), clamp_(clamp) {
    if (!(clamp > 0.0)) throw DomainError("profile clamp must be positive");
}

HeightProfile::Eval HeightProfile::eval(Vec2 p) const {
    Eval out;
    const double D = clamp_;
    out.phi = std::pow(D, table_.size());
    for_nearby_lifts(table_, p, D, [&](const LiftedLabel&, const Scatterer& sc, Vec2 q) {
        const Foot ft = foot_point(sc.curve(), q);
        if (ft.d >= D) return;
        const auto [f, f1, f2] = clamp_profile(ft.d / D);
        const Vec2 n = unit(ft.theta), T = perp(n);
        const Vec2 gf = n * (f1 / D);
        const double a = f2 / (D * D), b = f1 / D / (ft.rho + ft.d);
        const double fxx = a * n.x * n.x + b * T.x * T.x;
        const double fxy = a * n.x * n.y + b * T.x * T.y;
        const double fyy = a * n.y * n.y + b * T.y * T.y;
        const double P = out.phi;
        const Vec2 gP = out.grad;
        out.hxx = P * fxx + f * out.hxx + 2.0 * gP.x * gf.x;
        out.hxy = P * fxy + f * out.hxy + gP.x * gf.y + gf.x * gP.y;
        out.hyy = P * fyy + f * out.hyy + 2.0 * gP.y * gf.y;
        out.grad = gf * P + gP * f;
        out.phi = P * f;
    });
    return out;
}

double HeightProfile::distance(Vec2 p, LiftedLabel* label) const {
    double best = 1e300;
    for_nearby_lifts(table_, p, 1e300, [&](const LiftedLabel& lab, const Scatterer& sc, Vec2 q) {
        const double d = foot_point(sc.curve(), q).d;
        if (d < best) {
            best = d;
            if (label) *label = lab;
        }
    });
    return best;
}

double HeightProfile::seam_gradient_min(int samples_per_scatterer) const {
    double m = 1e300;
    for (int l = 0; l < table_.size(); ++l) {
        const Scatterer& sc = table_.scatterer(l);
        for (int k = 0; k < samples_per_scatterer; ++k) {
            const Vec2 x = sc.at(sc.perimeter() * k / samples_per_scatterer).point;
            m = std::min(m, norm(eval(x).grad));
        }
    }
    return m;
}

// ------------------------------------------------------------- metric

MetricPatch metric_coeffs(const HeightProfile& profile, double eps, Vec2 p) {
    const HeightProfile::Eval ev = profile.eval(p);
    if (!(ev.phi > 0.0)) throw DomainError("point is not in the interior of the table");
    const double h = std::sqrt(ev.phi);
    const double hx = ev.grad.x / (2 * h), hy = ev.grad.y / (2 * h);
    const double h3 = 4 * h * h * h;
    const double hxx = ev.hxx / (2 * h) - ev.grad.x * ev.grad.x / h3;
    const double hxy = ev.hxy / (2 * h) - ev.grad.x * ev.grad.y / h3;
    const double hyy = ev.hyy / (2 * h) - ev.grad.y * ev.grad.y / h3;
    const double e2 = eps * eps;
    MetricPatch m;
    m.E = 1 + e2 * hx * hx;
    m.F = e2 * hx * hy;
    m.G = 1 + e2 * hy * hy;
    m.Eu = 2 * e2 * hx * hxx;
    m.Ev = 2 * e2 * hx * hxy;
    m.Fu = e2 * (hxx * hy + hx * hxy);
    m.Fv = e2 * (hxy * hy + hx * hyy);
    m.Gu = 2 * e2 * hy * hxy;
    m.Gv = 2 * e2 * hy * hyy;
    // dg[l][i][j] = ∂_l g_ij
    const double dg[2][2][2] = {{{m.Eu, m.Fu}, {m.Fu, m.Gu}}, {{m.Ev, m.Fv}, {m.Fv, m.Gv}}};
    const double det = m.E * m.G - m.F * m.F;
    const double gi[2][2] = {{m.G / det, -m.F / det}, {-m.F / det, m.E / det}};
    for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                double s = 0.0;
                for (int l = 0; l < 2; ++l) s += gi[k][l] * (dg[i][l][j] + dg[j][l][i] - dg[l][i][j]);
                m.gamma[k][i][j] = 0.5 * s;
            }
    return m;
}

// ------------------------------------------------------------- integrator

double SurfaceState::speed() const { return std::sqrt(V[0] * V[0] + V[1] * V[1] + V[2] * V[2]); }

Vec2 SurfaceState::planar_direction() const { return normalized(Vec2{V[0], V[1]}); }

SurfaceState lift_state(const HeightProfile& profile, double eps, Vec2 p, Vec2 dir, int sheet) {
    const HeightProfile::Eval ev = profile.eval(p);
    if (!(ev.phi > 0.0)) throw DomainError("initial point is not in the interior of the table");
    const double h = std::sqrt(ev.phi);
    const Vec2 w = normalized(dir);
    const double sg = sheet >= 0 ? 1.0 : -1.0;
    const double vz = sg * eps * dot(ev.grad, w) / (2 * h);
    const double nv = std::sqrt(1.0 + vz * vz);
    SurfaceState s;
    s.X[0] = p.x;
    s.X[1] = p.y;
    s.X[2] = sg * eps * h;
    s.V[0] = w.x / nv;
    s.V[1] = w.y / nv;
    s.V[2] = vz / nv;
    return s;
}

namespace {

using State6 = std::array<double, 6>;

State6 pack(const SurfaceState& s) { return {s.X[0], s.X[1], s.X[2], s.V[0], s.V[1], s.V[2]}; }

SurfaceState unpack(const State6& y) {
    SurfaceState s;
    for (int i = 0; i < 3; ++i) {
        s.X[i] = y[static_cast<size_t>(i)];
        s.V[i] = y[static_cast<size_t>(i + 3)];
    }
    return s;
}

// Dormand–Prince 5(4) on the implicit surface Z² − ε² φ(x, y) = 0.
class Stepper {
public:
    Stepper(const HeightProfile& profile, double eps, const IntegratorOptions& opts)
        : profile_(profile), e2_(eps * eps), opts_(opts) {}

    State6 rhs(const State6& y) const {
        const HeightProfile::Eval ev = profile_.eval({y[0], y[1]});
        const double gx = -e2_ * ev.grad.x, gy = -e2_ * ev.grad.y, gz = 2.0 * y[2];
        const double vx = y[3], vy = y[4], vz = y[5];
        const double vhv = -e2_ * (vx * vx * ev.hxx + 2 * vx * vy * ev.hxy + vy * vy * ev.hyy) + 2 * vz * vz;
        const double k = -vhv / (gx * gx + gy * gy + gz * gz);
        return {vx, vy, vz, k * gx, k * gy, k * gz};
    }

    // one Dormand–Prince step; returns the error norm relative to tol
    double step(const State6& y, double h, State6& out) const {
        static constexpr double a21 = 1.0 / 5, a31 = 3.0 / 40, a32 = 9.0 / 40, a41 = 44.0 / 45, a42 = -56.0 / 15,
                                a43 = 32.0 / 9, a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                                a54 = -212.0 / 729, a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                                a64 = 49.0 / 176, a65 = -5103.0 / 18656, b1 = 35.0 / 384, b3 = 500.0 / 1113,
                                b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84, e1 = 71.0 / 57600,
                                e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200, e6 = 22.0 / 525,
                                e7 = -1.0 / 40;
        auto comb = [&](std::initializer_list<std::pair<double, const State6*>> terms) {
            State6 r = y;
            for (const auto& [c, k] : terms)
                for (size_t i = 0; i < 6; ++i) r[i] += h * c * (*k)[i];
            return r;
        };
        const State6 k1 = rhs(y);
        const State6 k2 = rhs(comb({{a21, &k1}}));
        const State6 k3 = rhs(comb({{a31, &k1}, {a32, &k2}}));
        const State6 k4 = rhs(comb({{a41, &k1}, {a42, &k2}, {a43, &k3}}));
        const State6 k5 = rhs(comb({{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}));
        const State6 k6 = rhs(comb({{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}));
        out = comb({{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
        const State6 k7 = rhs(out);
        double err = 0.0;
        for (size_t i = 0; i < 6; ++i) {
            const double ei = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
            err = std::max(err, std::abs(ei));
        }
        return err / opts_.tol;
    }

    // advances t and y by one accepted step not beyond t_end; h is updated
    void advance(State6& y, double& t, double& h, double t_end, long& rejected) const {
        for (;;) {
            const double hs = std::min({h, opts_.h_max, t_end - t});
            if (hs < opts_.h_min && t_end - t > opts_.h_min)
                throw IntegrationFailure("step size collapsed at t = " + format_double(t) + " near (" +
                                         format_double(y[0]) + ", " + format_double(y[1]) + ")");
            State6 out;
            const double err = step(y, hs, out);
            const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
            if (err <= 1.0 && std::isfinite(err)) {
                y = out;
                t = (hs == t_end - t) ? t_end : t + hs;
                h = hs * fac;
                return;
            }
            ++rejected;
            h = hs * (std::isfinite(err) ? fac : 0.1);
        }
    }

    const IntegratorOptions& options() const { return opts_; }

private:
    const HeightProfile& profile_;
    double e2_;
    IntegratorOptions opts_;
};

double speed_of(const State6& y) { return std::sqrt(y[3] * y[3] + y[4] * y[4] + y[5] * y[5]); }

}  // namespace

GeodesicPath integrate_geodesic(const HeightProfile& profile, double eps, const SurfaceState& init, double T,
                                const IntegratorOptions& opts) {
    if (!(eps > 0.0 && eps <= 1.0)) throw DomainError("flattening parameter must lie in (0, 1]");
    if (std::abs(init.speed() - 1.0) > 1e-9) throw DomainError("initial velocity must have unit length");
    const Stepper st(profile, eps, opts);
    GeodesicPath path;
    path.eps = eps;
    State6 y = pack(init);
    double t = 0.0, h = 1e-4;
    path.times.push_back(0.0);
    path.states.push_back(init);
    long steps = 0;
    while (t < T) {
        if (++steps > opts.max_steps) throw IntegrationFailure("step budget exhausted at t = " + format_double(t));
        const double sp0 = speed_of(y);
        st.advance(y, t, h, T, path.rejected);
        path.length += 0.5 * (sp0 + speed_of(y)) * (t - path.times.back());
        path.times.push_back(t);
        path.states.push_back(unpack(y));
        path.speed_drift = std::max(path.speed_drift, std::abs(speed_of(y) - 1.0));
    }
    return path;
}

// ------------------------------------------------------------- convergence

bool ConvergenceReport::monotone(double slack) const {
    for (size_t k = 1; k < rows.size(); ++k)
        if (rows[k].sup_distance > (1.0 + slack) * rows[k - 1].sup_distance) return false;
    return true;
}

ConvergenceReport convergence_test(const HeightProfile& profile, Vec2 p, Vec2 v, double T,
                                   const std::vector<double>& eps_list, const IntegratorOptions& opts,
                                   int workers) {
    ConvergenceReport rep;
    rep.p = p;
    rep.v = normalized(v);
    rep.T = T;
    if (!(profile.phi(p) > 0.0)) throw NotInA0("initial point is not in the interior of the table");
    const FlowPath flow = billiard_flow(profile.table(), p, rep.v, T);
    rep.collisions = static_cast<int>(flow.times.size()) - 1;
    for (size_t k = 1; k < flow.cos_angles.size(); ++k) rep.min_cos = std::min(rep.min_cos, flow.cos_angles[k]);
    if (rep.min_cos <= 1e-6) throw NotInA0("billiard segment contains a grazing collision");
    if (!(profile.phi(flow.position(T)) > 0.0)) throw NotInA0("segment ends on the boundary");
    rep.rows.resize(eps_list.size());
    parallel_for(eps_list.size(), workers, [&](size_t i) {
        const double eps = eps_list[i];
        const GeodesicPath g = integrate_geodesic(profile, eps, lift_state(profile, eps, p, rep.v, 1), T, opts);
        ConvergenceRow row;
        row.eps = eps;
        row.steps = static_cast<long>(g.times.size()) - 1;
        row.speed_drift = g.speed_drift;
        for (size_t k = 0; k < g.times.size(); ++k)
            row.sup_distance = std::max(row.sup_distance, norm(g.states[k].point() - flow.position(g.times[k])));
        rep.rows[i] = row;
    });
    return rep;
}

// ------------------------------------------------------------- closed geodesics

namespace {

// Transversal to the flow through the planar point m, crossed in direction u.
// Chord sections sit on one sheet and are parametrised by the offset along n;
// seam sections sit on a boundary point (n the outward normal) and are
// parametrised by the height Z, which covers both sheets.
struct Section {
    enum class Kind { chord, seam };
    Kind kind = Kind::chord;
    Vec2 m, u, n;
    int sheet = 1;
    double window = 0.0;  // admissible planar distance from m at a crossing
    double bound = 0.0;   // admissible |parameter|
    double guess = 0.0;
};

struct Sections {
    std::vector<Section> list;  // the closing section is list[0] shifted by `shift`
    Vec2 shift;
    std::vector<LiftedLabel> expected;

    Section at(size_t k) const {
        if (k < list.size()) return list[k];
        Section s = list[0];
        s.m += shift;
        return s;
    }
};

Sections make_sections(const HeightProfile& profile, double eps, double spacing_eps, const BilliardCycle& c) {
    const Table& table = profile.table();
    const OrbitWord& w = c.word;
    const int q = w.q();
    const auto labels = lifted_labels(w);
    const int reps = q % 2 ? 2 : 1;
    const Vec2 period = labels[static_cast<size_t>(q)].offset() - labels[0].offset();
    Sections S;
    S.shift = period * static_cast<double>(reps);
    int chord_index = 0;
    for (int k = 0; k < q * reps; ++k) {
        const int ck = k % q, cn = (ck + 1) % q;
        const Vec2 off = period * static_cast<double>(k / q);
        const Vec2 A = table.scatterer(w.rho[static_cast<size_t>(ck)]).at(c.s[static_cast<size_t>(ck)]).point +
                       labels[static_cast<size_t>(ck)].offset() + off;
        const Vec2 B = table.scatterer(w.rho[static_cast<size_t>(cn)]).at(c.e[static_cast<size_t>(cn)]).point +
                       labels[static_cast<size_t>(ck + 1)].offset() + off;
        Section ch;
        ch.kind = Section::Kind::chord;
        ch.m = (A + B) * 0.5;
        ch.u = normalized(B - A);
        ch.n = perp(ch.u);
        ch.sheet = chord_index++ % 2 ? -1 : 1;
        ch.bound = 0.5 * norm(B - A);
        ch.window = 1.5 * ch.bound + 1e-3;
        S.list.push_back(ch);
        LiftedLabel lab = labels[static_cast<size_t>(ck + 1)];
        lab.i += static_cast<int>(std::lround(off.x));
        lab.j += static_cast<int>(std::lround(off.y));
        S.expected.push_back(lab);

        // seam sections along a boundary arc, spaced against the seam's instability
        const Scatterer& sc = table.scatterer(w.rho[static_cast<size_t>(cn)]);
        const double e = c.e[static_cast<size_t>(cn)], sx = c.s[static_cast<size_t>(cn)];
        const double delta = std::remainder(sx - e, sc.perimeter());
        if (std::abs(delta) <= 1e-9) continue;
        const Vec2 lift = labels[static_cast<size_t>(ck + 1)].offset() + off;
        const BoundaryPoint b0 = sc.at(e);
        const double g = std::max(1e-12, norm(profile.eval(b0.point).grad));
        const double rate = std::sqrt(2.0 * sc.k_max() / g) / spacing_eps;
        const int nsec = std::max(1, static_cast<int>(std::ceil(std::abs(delta) * rate / 5.0)));
        // the cycle arrives on the chord's sheet and leaves on the other one
        const double z0 = 1e-6 * eps * ch.sheet;
        for (int jx = 1; jx <= nsec; ++jx) {
            const BoundaryPoint bp = sc.at(e + delta * jx / (nsec + 1));
            Section se;
            se.kind = Section::Kind::seam;
            se.m = bp.point + lift;
            se.u = delta > 0 ? bp.tangent : -bp.tangent;
            se.n = bp.normal;
            se.bound = 1.0;
            se.window = std::min(0.25, 0.5 / sc.k_max());
            se.guess = z0 * (1.0 - 2.0 * (jx - 0.25) / nsec);
            S.list.push_back(se);
        }
    }
    return S;
}

struct Frame {
    double e1[3], e2[3];
};

Frame frame_at(const HeightProfile& profile, double eps, const double X[3], Vec2 u) {
    const HeightProfile::Eval ev = profile.eval({X[0], X[1]});
    double N[3] = {-eps * eps * ev.grad.x, -eps * eps * ev.grad.y, 2.0 * X[2]};
    const double nn = std::sqrt(N[0] * N[0] + N[1] * N[1] + N[2] * N[2]);
    for (double& v : N) v /= nn;
    const double ud = u.x * N[0] + u.y * N[1];
    Frame f;
    double e1[3] = {u.x - ud * N[0], u.y - ud * N[1], -ud * N[2]};
    const double n1 = std::sqrt(e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]);
    for (int i = 0; i < 3; ++i) f.e1[i] = e1[i] / n1;
    f.e2[0] = N[1] * f.e1[2] - N[2] * f.e1[1];
    f.e2[1] = N[2] * f.e1[0] - N[0] * f.e1[2];
    f.e2[2] = N[0] * f.e1[1] - N[1] * f.e1[0];
    return f;
}

SurfaceState section_state(const HeightProfile& profile, double eps, const Section& sec, double a, double psi) {
    SurfaceState st;
    if (sec.kind == Section::Kind::chord) {
        const Vec2 p = sec.m + sec.n * a;
        const double ph = profile.phi(p);
        if (!(ph > 0.0)) throw ClassEscape("section point left the table");
        st.X[0] = p.x;
        st.X[1] = p.y;
        st.X[2] = sec.sheet * eps * std::sqrt(ph);
    } else {
        // point over the normal line with Z = a
        const double target = a * a / (eps * eps);
        double t = 0.0;
        for (int it = 0; it < 60; ++it) {
            const HeightProfile::Eval ev = profile.eval(sec.m + sec.n * t);
            const double dt = (ev.phi - target) / dot(ev.grad, sec.n);
            t -= dt;
            if (std::abs(dt) < 1e-16) break;
        }
        const Vec2 p = sec.m + sec.n * t;
        st.X[0] = p.x;
        st.X[1] = p.y;
        st.X[2] = a;
    }
    const Frame f = frame_at(profile, eps, st.X, sec.u);
    for (int i = 0; i < 3; ++i) st.V[i] = std::cos(psi) * f.e1[i] + std::sin(psi) * f.e2[i];
    return st;
}

struct LegResult {
    double a = 0.0, psi = 0.0, time = 0.0;
    std::vector<LiftedLabel> seams;
    std::vector<double> times;
    std::vector<SurfaceState> states;
    double drift = 0.0;
};

// flow from section `from` at (a, psi) to the next admissible crossing of section `to`
LegResult run_leg(const HeightProfile& profile, double eps, const Section& from, const Section& to, double a,
                  double psi, double t_cap, const IntegratorOptions& opts, bool keep) {
    const Stepper st(profile, eps, opts);
    State6 y = pack(section_state(profile, eps, from, a, psi));
    auto cval = [&](const State6& s) { return dot(Vec2{s[0], s[1]} - to.m, to.u); };
    auto admissible = [&](const State6& s) {
        if (norm(Vec2{s[0], s[1]} - to.m) > to.window) return false;
        return to.kind == Section::Kind::seam || (s[2] > 0 ? 1 : -1) == to.sheet;
    };
    LegResult r;
    double t = 0.0, h = 1e-4;
    long rejected = 0;
    if (keep) {
        r.times.push_back(0.0);
        r.states.push_back(unpack(y));
    }
    for (long steps = 0;; ++steps) {
        if (steps > opts.max_steps) throw IntegrationFailure("step budget exhausted while shooting");
        const State6 y0 = y;
        const double t0 = t;
        st.advance(y, t, h, t_cap, rejected);
        if (keep) {
            r.times.push_back(t);
            r.states.push_back(unpack(y));
            r.drift = std::max(r.drift, std::abs(speed_of(y) - 1.0));
        }
        if ((y0[2] > 0) != (y[2] > 0)) {
            LiftedLabel lab;
            profile.distance({y[0], y[1]}, &lab);
            if (r.seams.empty() || !(r.seams.back() == lab)) r.seams.push_back(lab);
        }
        const double c0 = cval(y0), c1 = cval(y);
        if (c0 < 0.0 && c1 >= 0.0 && admissible(y)) {
            // secant on the step length for the section crossing
            double lo = 0.0, hi = t - t0, flo = c0, fhi = c1;
            State6 ys = y;
            double hs = hi;
            for (int it = 0; it < 60 && fhi != flo; ++it) {
                hs = lo - flo * (hi - lo) / (fhi - flo);
                st.step(y0, hs, ys);
                const double fs = cval(ys);
                if (std::abs(fs) < 1e-15) break;
                if (fs < 0) {
                    lo = hs;
                    flo = fs;
                } else {
                    hi = hs;
                    fhi = fs;
                }
            }
            const SurfaceState ss = unpack(ys);
            r.a = to.kind == Section::Kind::chord ? dot(ss.point() - to.m, to.n) : ss.X[2];
            const Frame f = frame_at(profile, eps, ss.X, to.u);
            const double c = ss.V[0] * f.e1[0] + ss.V[1] * f.e1[1] + ss.V[2] * f.e1[2];
            const double s2 = ss.V[0] * f.e2[0] + ss.V[1] * f.e2[1] + ss.V[2] * f.e2[2];
            r.psi = std::atan2(s2, c);
            r.time = t0 + hs;
            if (keep) {
                r.times.back() = r.time;
                r.states.back() = ss;
            }
            return r;
        }
        if (t >= t_cap) throw ClassEscape("geodesic leg did not reach the next section");
    }
}

}  // namespace

ClosedGeodesic seam_geodesic(const HeightProfile& profile, int scatterer) {
    const Scatterer& sc = profile.table().scatterer(scatterer);
    ClosedGeodesic g;
    g.length = sc.perimeter();
    const int n = 256;
    for (int k = 0; k <= n; ++k) {
        const BoundaryPoint bp = sc.at(sc.perimeter() * k / n);
        SurfaceState s;
        s.X[0] = bp.point.x;
        s.X[1] = bp.point.y;
        s.V[0] = bp.tangent.x;
        s.V[1] = bp.tangent.y;
        g.path.times.push_back(sc.perimeter() * k / n);
        g.path.states.push_back(s);
    }
    g.path.length = g.length;
    g.seam_sequence.push_back({0, 0, scatterer});
    return g;
}

ClosedGeodesic closed_geodesic_in_class(const HeightProfile& profile, double eps, const BilliardCycle& cycle,
                                        const ShootingOptions& opts, const ClosedGeodesic* warm) {
    if (!(eps > 0.0 && eps <= 1.0)) throw DomainError("flattening parameter must lie in (0, 1]");
    const Sections S = make_sections(profile, eps, opts.section_eps > 0.0 ? opts.section_eps : eps, cycle);
    const size_t Q = S.list.size();
    const int n = static_cast<int>(2 * Q);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    for (size_t k = 0; k < Q; ++k) x(static_cast<int>(2 * k)) = S.list[k].guess;
    if (warm && warm->offsets.size() == Q)
        for (size_t k = 0; k < Q; ++k) {
            x(static_cast<int>(2 * k)) = warm->offsets[k];
            x(static_cast<int>(2 * k + 1)) = warm->angles[k];
        }
    std::vector<double> caps(Q);
    for (size_t k = 0; k < Q; ++k) caps[k] = 3.0 * norm(S.at(k + 1).m - S.at(k).m) + 0.5;

    auto leg = [&](size_t k, double a, double psi, bool keep = false) {
        return run_leg(profile, eps, S.at(k), S.at(k + 1), a, psi, caps[k], opts.integrator, keep);
    };
    auto leg_residual = [&](const Eigen::VectorXd& v, size_t k, const LegResult& r) {
        const size_t kn = (k + 1) % Q;
        return Eigen::Vector2d(r.a - v(static_cast<int>(2 * kn)),
                               std::remainder(r.psi - v(static_cast<int>(2 * kn + 1)), kTwoPi));
    };
    auto residual = [&](const Eigen::VectorXd& v) {
        Eigen::VectorXd R(n);
        for (size_t k = 0; k < Q; ++k) {
            const LegResult r = leg(k, v(static_cast<int>(2 * k)), v(static_cast<int>(2 * k + 1)));
            R.segment<2>(static_cast<int>(2 * k)) = leg_residual(v, k, r);
        }
        return R;
    };
    auto feasible = [&](const Eigen::VectorXd& v) {
        for (size_t k = 0; k < Q; ++k)
            if (std::abs(v(static_cast<int>(2 * k))) >= S.list[k].bound) return false;
        return true;
    };

    ClosedGeodesic out;
    out.eps = eps;
    Eigen::VectorXd R = residual(x);
    const double delta = 1e-8;
    for (int it = 0;; ++it) {
        out.iterations = it;
        const double rn = R.lpNorm<Eigen::Infinity>();
        if (rn < opts.tol) break;
        if (it >= opts.max_iter) throw SolverFailure("shooting did not close (defect " + format_double(rn) + ")");
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
        for (size_t k = 0; k < Q; ++k) {
            const int i = static_cast<int>(2 * k), in = static_cast<int>(2 * ((k + 1) % Q));
            const double a = x(i), psi = x(i + 1);
            const Eigen::Vector2d r0 = R.segment<2>(i);
            J.block<2, 1>(i, i) = (leg_residual(x, k, leg(k, a + delta, psi)) - r0) / delta;
            J.block<2, 1>(i, i + 1) = (leg_residual(x, k, leg(k, a, psi + delta)) - r0) / delta;
            J.block<2, 2>(i, in) -= Eigen::Matrix2d::Identity();
        }
        const Eigen::VectorXd step = J.fullPivLu().solve(-R);
        double lam = 1.0;
        bool moved = false;
        for (int bt = 0; bt < 16; ++bt, lam *= 0.5) {
            const Eigen::VectorXd x2 = x + lam * step;
            if (!feasible(x2)) continue;
            Eigen::VectorXd R2;
            try {
                R2 = residual(x2);
            } catch (const ClassEscape&) {
                continue;
            }
            if (R2.lpNorm<Eigen::Infinity>() < rn) {
                x = x2;
                R = R2;
                moved = true;
                break;
            }
        }
        if (!moved) {
            if (rn < 1e3 * opts.tol) break;
            throw SolverFailure("shooting stalled (defect " + format_double(rn) + ")");
        }
    }
    out.residual = R.lpNorm<Eigen::Infinity>();
    out.path.eps = eps;
    out.path.times.push_back(0.0);
    for (size_t k = 0; k < Q; ++k) {
        const int i = static_cast<int>(2 * k);
        out.offsets.push_back(x(i));
        out.angles.push_back(x(i + 1));
        const LegResult r = leg(k, x(i), x(i + 1), true);
        const double t0 = out.path.times.back();
        if (k == 0) out.path.states.push_back(r.states.front());
        for (size_t j = 1; j < r.times.size(); ++j) {
            out.path.times.push_back(t0 + r.times[j]);
            out.path.states.push_back(r.states[j]);
        }
        out.path.speed_drift = std::max(out.path.speed_drift, r.drift);
        out.length += r.time;
        for (const auto& lab : r.seams)
            if (out.seam_sequence.empty() || !(out.seam_sequence.back() == lab)) out.seam_sequence.push_back(lab);
    }
    out.path.length = out.length;
    std::vector<LiftedLabel> expected;
    for (const auto& lab : S.expected)
        if (expected.empty() || !(expected.back() == lab)) expected.push_back(lab);
    if (out.seam_sequence != expected)
        throw ClassEscape("closed geodesic crosses the seam in a different bounce sequence than " +
                          to_string(cycle.word));
    return out;
}

LengthConvergence length_convergence(const HeightProfile& profile, const BilliardCycle& cycle,
                                     const std::vector<double>& eps_list, const ShootingOptions& opts) {
    LengthConvergence lc;
    lc.word = to_string(cycle.word);
    lc.EL = cycle.EL;
    const double class_length = cycle.EL * (cycle.word.q() % 2 ? 2 : 1);
    ShootingOptions o = opts;
    if (o.section_eps <= 0.0) o.section_eps = *std::min_element(eps_list.begin(), eps_list.end());
    const size_t n = eps_list.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t x, size_t y) { return eps_list[x] < eps_list[y]; });
    lc.geodesics.resize(n);
    std::vector<bool> done(n, false);
    std::string last_error;
    auto nearest_done = [&](size_t i) -> const ClosedGeodesic* {
        const ClosedGeodesic* best = nullptr;
        double gap = 1e300;
        for (size_t j = 0; j < n; ++j)
            if (done[j] && std::abs(std::log(eps_list[j] / eps_list[i])) < gap) {
                gap = std::abs(std::log(eps_list[j] / eps_list[i]));
                best = &lc.geodesics[j];
            }
        return best;
    };
    // sweep ascending, then retry failures from the nearest converged neighbour
    for (int pass = 0; pass < 3; ++pass) {
        for (size_t i : order) {
            if (done[i]) continue;
            const ClosedGeodesic* warm = nearest_done(i);
            if (pass > 0 && !warm) continue;
            try {
                lc.geodesics[i] = closed_geodesic_in_class(profile, eps_list[i], cycle, o, warm);
                done[i] = true;
            } catch (const Error& e) {
                last_error = e.what();
            }
        }
    }
    for (size_t i = 0; i < n; ++i)
        if (!done[i])
            throw SolverFailure("no closed geodesic at eps = " + format_double(eps_list[i]) + " (" + last_error + ")");
    for (const auto& g : lc.geodesics) lc.gaps.push_back(g.length - class_length);
    for (size_t k = 1; k < lc.gaps.size(); ++k) lc.ratios.push_back(lc.gaps[k - 1] / lc.gaps[k]);
    return lc;
}

}  // namespace sinai
