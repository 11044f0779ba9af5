#include "sinai/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include "sinai/errors.hpp"

namespace sinai {

namespace {

double wrap_angle(double theta) {
    double t = std::fmod(theta, kTwoPi);
    if (t < 0) t += kTwoPi;
    if (t >= kTwoPi) t -= kTwoPi;
    return t;
}

// Golden-section maximisation of f on [lo, hi].
template <class F>
double golden_max(F&& f, double lo, double hi, double tol, double* fbest) {
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = hi - g * (hi - lo), d = lo + g * (hi - lo);
    double fc = f(c), fd = f(d);
    while (hi - lo > tol) {
        if (fc > fd) {
            hi = d; d = c; fd = fc;
            c = hi - g * (hi - lo); fc = f(c);
        } else {
            lo = c; c = d; fc = fd;
            d = lo + g * (hi - lo); fd = f(d);
        }
    }
    double x = 0.5 * (lo + hi);
    if (fbest) *fbest = f(x);
    return x;
}

// Maximise a 2π-periodic function: grid scan followed by golden refinement.
template <class F>
double periodic_max(F&& f, int samples, double* argmax = nullptr) {
    double best = -1e300, best_t = 0.0;
    const double step = kTwoPi / samples;
    for (int k = 0; k < samples; ++k) {
        double t = k * step;
        double v = f(t);
        if (v > best) { best = v; best_t = t; }
    }
    double refined = 0.0;
    double t = golden_max(f, best_t - step, best_t + step, 1e-13, &refined);
    if (refined < best) { refined = best; t = best_t; }
    if (argmax) *argmax = t;
    return refined;
}

int gcd_int(int a, int b) { return std::gcd(std::abs(a), std::abs(b)); }

}  // namespace

// ------------------------------------------------------------------ bumps

namespace {

// Gauss–Legendre rule on [-1, 1] by Newton on the Legendre recurrence.
struct GaussRule {
    std::vector<double> x, w;
    explicit GaussRule(int n) {
        for (int i = 0; i < n; ++i) {
            double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
            double dp = 1.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = z;
                for (int k = 2; k <= n; ++k) {
                    const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (z * p1 - p0) / (z * z - 1.0);
                const double dz = p1 / dp;
                z -= dz;
                if (std::abs(dz) < 1e-16) break;
            }
            x.push_back(z);
            w.push_back(2.0 / ((1.0 - z * z) * dp * dp));
        }
    }
};

const GaussRule& gauss16() {
    static const GaussRule rule(16);
    return rule;
}

// β and its t-derivatives
SupportDerivs bump_shape(SupportBump::Shape shape, double t) {
    if (!(std::abs(t) < 1.0)) return {};
    const double u = 1.0 - t * t;
    const double f = std::exp(1.0 - 1.0 / u);
    if (f == 0.0) return {};
    const double iu = 1.0 / u;
    const double g1 = -2.0 * t * iu * iu;
    const double g2 = -2.0 * iu * iu - 8.0 * t * t * iu * iu * iu;
    const double g3 = -24.0 * t * iu * iu * iu - 48.0 * t * t * t * iu * iu * iu * iu;
    const double f1 = g1 * f;
    const double f2 = (g2 + g1 * g1) * f;
    const double f3 = (g3 + 3.0 * g1 * g2 + g1 * g1 * g1) * f;
    if (shape == SupportBump::Shape::even) return {f, f1, f2, f3};
    return {t * f, f + t * f1, 2.0 * f1 + t * f2, 3.0 * f2 + t * f3};
}

constexpr int kBumpPanels = 64;

double panel_integral(SupportBump::Shape shape, double a, double b) {
    const GaussRule& g = gauss16();
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double total = 0.0;
    for (size_t k = 0; k < g.x.size(); ++k) total += g.w[k] * half * bump_shape(shape, mid + half * g.x[k]).h;
    return total;
}

// cumulative integrals at the panel edges, per shape
const std::vector<double>& panel_edges(SupportBump::Shape shape) {
    static const auto make = [](SupportBump::Shape sh) {
        std::vector<double> c{0.0};
        const double h = 2.0 / kBumpPanels;
        for (int p = 0; p < kBumpPanels; ++p) c.push_back(c.back() + panel_integral(sh, -1.0 + p * h, -1.0 + (p + 1) * h));
        return c;
    };
    static const std::vector<double> even = make(SupportBump::Shape::even);
    static const std::vector<double> odd = make(SupportBump::Shape::odd);
    return shape == SupportBump::Shape::even ? even : odd;
}

// ∫_{-1}^{t} β
double shape_integral(SupportBump::Shape shape, double t) {
    if (t <= -1.0) return 0.0;
    const auto& edges = panel_edges(shape);
    if (t >= 1.0) return edges.back();
    const double h = 2.0 / kBumpPanels;
    const int p = std::min(kBumpPanels - 1, static_cast<int>((t + 1.0) / h));
    const double a = -1.0 + p * h;
    return edges[static_cast<size_t>(p)] + panel_integral(shape, a, t);
}

}  // namespace

SupportDerivs SupportBump::eval(double theta) const {
    const double t = std::remainder(theta - theta0, kTwoPi) / half_width;
    if (!(std::abs(t) < 1.0)) return {};
    const SupportDerivs b = bump_shape(shape, t);
    const double iw = 1.0 / half_width;
    return {amplitude * b.h, amplitude * b.h1 * iw, amplitude * b.h2 * iw * iw, amplitude * b.h3 * iw * iw * iw};
}

double SupportBump::partial_integral(double x) const {
    return amplitude * half_width * shape_integral(shape, x / half_width - 1.0);
}

double SupportBump::total_integral() const {
    return shape == Shape::odd ? 0.0 : amplitude * half_width * shape_integral(shape, 1.0);
}

// ---------------------------------------------------------------- SupportCurve

SupportCurve::SupportCurve(double a0, std::vector<double> a, std::vector<double> b, std::vector<SupportBump> bumps)
    : a0_(a0), a_(std::move(a)), b_(std::move(b)), bumps_(std::move(bumps)) {
    if (a_.size() != b_.size()) throw InvalidTable("cosine and sine coefficient counts differ");
    for (const auto& bp : bumps_)
        if (!(bp.half_width > 0.0 && bp.half_width < kPi)) throw InvalidTable("bump half-width must lie in (0, pi)");
    h1_zero_ = eval(0.0).h1;
    bump_zero_ = 0.0;
    for (const auto& bp : bumps_) {
        const double x = std::fmod(std::fmod(0.0 - (bp.theta0 - bp.half_width), kTwoPi) + kTwoPi, kTwoPi);
        bump_zero_ += bp.partial_integral(x);
    }
}

SupportCurve SupportCurve::circle(Vec2 center, double r) {
    return SupportCurve(r, {center.x}, {center.y});
}

SupportCurve SupportCurve::from_coeffs(const std::vector<double>& flat) {
    if (flat.empty() || flat.size() % 2 == 0)
        throw InvalidTable("fourier_coeffs must hold a0 followed by (a_n, b_n) pairs");
    std::vector<double> a, b;
    for (size_t k = 1; k + 1 < flat.size(); k += 2) {
        a.push_back(flat[k]);
        b.push_back(flat[k + 1]);
    }
    return SupportCurve(flat[0], a, b);
}

std::vector<double> SupportCurve::coeffs() const {
    std::vector<double> out{a0_};
    for (size_t n = 0; n < a_.size(); ++n) {
        out.push_back(a_[n]);
        out.push_back(b_[n]);
    }
    return out;
}

SupportCurve SupportCurve::with_bump(const SupportBump& b) const {
    std::vector<SupportBump> bumps = bumps_;
    auto same = std::find_if(bumps.begin(), bumps.end(), [&](const SupportBump& o) {
        return o.shape == b.shape && o.theta0 == b.theta0 && o.half_width == b.half_width;
    });
    if (same == bumps.end()) {
        bumps.push_back(b);
    } else {
        same->amplitude += b.amplitude;
        if (same->amplitude == 0.0) bumps.erase(same);
    }
    return SupportCurve(a0_, a_, b_, bumps);
}

Vec2 SupportCurve::center() const {
    if (a_.empty()) return {0.0, 0.0};
    return {a_[0], b_[0]};
}

SupportDerivs SupportCurve::eval(double theta) const {
    SupportDerivs d{a0_, 0.0, 0.0, 0.0};
    const std::complex<double> step(std::cos(theta), std::sin(theta));
    std::complex<double> z = step;
    for (size_t k = 0; k < a_.size(); ++k) {
        const double n = static_cast<double>(k + 1);
        if (k > 0 && k % 32 == 0) z = std::polar(1.0, n * theta);
        const double c = z.real(), s = z.imag();
        const double ac = a_[k] * c + b_[k] * s;
        const double as = -a_[k] * s + b_[k] * c;
        d.h += ac;
        d.h1 += n * as;
        d.h2 -= n * n * ac;
        d.h3 -= n * n * n * as;
        z *= step;
    }
    for (const auto& bp : bumps_) {
        const SupportDerivs e = bp.eval(theta);
        d.h += e.h;
        d.h1 += e.h1;
        d.h2 += e.h2;
        d.h3 += e.h3;
    }
    return d;
}

Vec2 SupportCurve::point(double theta) const {
    const SupportDerivs d = eval(theta);
    const double c = std::cos(theta), s = std::sin(theta);
    return {d.h * c - d.h1 * s, d.h * s + d.h1 * c};
}

double SupportCurve::radius_of_curvature(double theta) const {
    const SupportDerivs d = eval(theta);
    return d.h + d.h2;
}

double SupportCurve::arclength_from_zero(double theta, double* rho) const {
    // ∫ a_n cos nθ + b_n sin nθ = (a_n sin nθ − b_n (cos nθ − 1)) / n
    double s = a0_ * theta, h1 = 0.0, h2 = 0.0, h = a0_;
    const std::complex<double> step(std::cos(theta), std::sin(theta));
    std::complex<double> z = step;
    for (size_t k = 0; k < a_.size(); ++k) {
        const double n = static_cast<double>(k + 1);
        if (k > 0 && k % 32 == 0) z = std::polar(1.0, n * theta);
        const double c = z.real(), sn = z.imag();
        const double ac = a_[k] * c + b_[k] * sn;
        s += (a_[k] * sn - b_[k] * (c - 1.0)) / n;
        h += ac;
        h1 += n * (-a_[k] * sn + b_[k] * c);
        h2 -= n * n * ac;
        z *= step;
    }
    double bump = 0.0;
    for (const auto& bp : bumps_) {
        const SupportDerivs e = bp.eval(theta);
        h += e.h;
        h1 += e.h1;
        h2 += e.h2;
        const double a = bp.theta0 - bp.half_width;
        const double x = theta - a;
        const double turns = std::floor(x / kTwoPi);
        bump += turns * bp.total_integral() + bp.partial_integral(x - turns * kTwoPi);
    }
    if (rho) *rho = h + h2;
    return s + (h1 - h1_zero_) + (bump - bump_zero_);
}

double SupportCurve::perimeter() const {
    double p = kTwoPi * a0_;
    for (const auto& bp : bumps_) p += bp.total_integral();
    return p;
}

SupportCurve SupportCurve::translated(Vec2 d) const {
    std::vector<double> a = a_, b = b_;
    if (a.empty()) { a.push_back(0.0); b.push_back(0.0); }
    a[0] += d.x;
    b[0] += d.y;
    return SupportCurve(a0_, a, b, bumps_);
}

CurvePoint curve_eval(const SupportCurve& curve, double theta) {
    const SupportDerivs d = curve.eval(theta);
    const double rho = d.h + d.h2;
    if (!(rho > 0.0))
        throw ConvexityError("h + h'' = " + format_double(rho) + " at theta = " + format_double(theta));
    const Vec2 n = unit(theta), t = perp(n);
    return {n * d.h + t * d.h1, t, n, 1.0 / rho};
}

ConvexityScan scan_convexity(const SupportCurve& curve, int samples) {
    ConvexityScan out{1e300, 0.0, -1e300};
    const double step = kTwoPi / samples;
    for (int k = 0; k < samples; ++k) {
        const double t = k * step;
        const double r = curve.radius_of_curvature(t);
        if (r < out.min_radius) { out.min_radius = r; out.argmin_theta = t; }
        out.max_radius = std::max(out.max_radius, r);
    }
    auto neg = [&](double t) { return -curve.radius_of_curvature(t); };
    double fb = 0.0;
    const double t = golden_max(neg, out.argmin_theta - step, out.argmin_theta + step, 1e-12, &fb);
    if (-fb < out.min_radius) { out.min_radius = -fb; out.argmin_theta = wrap_angle(t); }
    auto pos = [&](double t) { return curve.radius_of_curvature(t); };
    out.max_radius = std::max(out.max_radius, periodic_max(pos, samples));
    return out;
}

void require_convex(const SupportCurve& curve) {
    const ConvexityScan scan = scan_convexity(curve);
    if (!(scan.min_radius > 0.0))
        throw ConvexityError("h + h'' = " + format_double(scan.min_radius) +
                             " at theta = " + format_double(scan.argmin_theta));
}

// ------------------------------------------------------------------- Scatterer

Scatterer::Scatterer(SupportCurve curve, int table_nodes) : curve_(std::move(curve)) {
    const ConvexityScan scan = scan_convexity(curve_);
    if (!(scan.min_radius > 0.0))
        throw ConvexityError("h + h'' = " + format_double(scan.min_radius) +
                             " at theta = " + format_double(scan.argmin_theta));
    k_min_ = 1.0 / scan.max_radius;
    k_max_ = 1.0 / scan.min_radius;
    perimeter_ = curve_.perimeter();
    center_ = curve_.center();

    theta_nodes_.resize(static_cast<size_t>(table_nodes) + 1);
    s_nodes_.resize(theta_nodes_.size());
    for (int k = 0; k <= table_nodes; ++k) {
        const double t = kTwoPi * k / table_nodes;
        theta_nodes_[static_cast<size_t>(k)] = t;
        s_nodes_[static_cast<size_t>(k)] = curve_.arclength_from_zero(t);
    }
    s_nodes_.back() = perimeter_;

    auto dist = [&](double t) { return norm(curve_.point(t) - center_); };
    r_out_ = periodic_max(dist, 1024) * (1.0 + 1e-12) + 1e-12;
    auto neg_h = [&](double t) { return -(curve_.h(t) - dot(unit(t), center_)); };
    r_in_ = -periodic_max(neg_h, 1024) - 1e-12;
}

double Scatterer::wrap(double s) const {
    double r = std::fmod(s, perimeter_);
    if (r < 0) r += perimeter_;
    if (r >= perimeter_) r -= perimeter_;
    return r;
}

double Scatterer::angle_to_arclength(double theta) const {
    return wrap(curve_.arclength_from_zero(wrap_angle(theta)));
}

double Scatterer::arclength_to_angle(double s_in) const {
    const double s = wrap(s_in);
    auto it = std::upper_bound(s_nodes_.begin(), s_nodes_.end(), s);
    size_t hi = static_cast<size_t>(std::distance(s_nodes_.begin(), it));
    if (hi == 0) hi = 1;
    if (hi >= s_nodes_.size()) hi = s_nodes_.size() - 1;
    double lo_t = theta_nodes_[hi - 1], hi_t = theta_nodes_[hi];
    const double s0 = s_nodes_[hi - 1], s1 = s_nodes_[hi];
    double t = lo_t + (hi_t - lo_t) * (s - s0) / std::max(s1 - s0, 1e-300);
    for (int it_n = 0; it_n < 60; ++it_n) {
        double rho = 0.0;
        const double f = curve_.arclength_from_zero(t, &rho) - s;
        if (f > 0) hi_t = t; else lo_t = t;
        double next = t - f / rho;
        if (!(next > lo_t && next < hi_t)) next = 0.5 * (lo_t + hi_t);
        const bool done = std::abs(next - t) <= 1e-15 * std::max(1.0, std::abs(t));
        t = next;
        if (done) break;
    }
    return t;
}

BoundaryPoint Scatterer::at(double s) const {
    const double theta = arclength_to_angle(s);
    const SupportDerivs d = curve_.eval(theta);
    const Vec2 n = unit(theta), t = perp(n);
    return {n * d.h + t * d.h1, t, n, 1.0 / (d.h + d.h2), theta};
}

double Scatterer::curvature_derivative(double s) const {
    const double theta = arclength_to_angle(s);
    const SupportDerivs d = curve_.eval(theta);
    const double rho = d.h + d.h2;
    return -(d.h1 + d.h3) / (rho * rho * rho);
}

double Scatterer::support(Vec2 u) const { return curve_.h(std::atan2(u.y, u.x)); }

double Scatterer::width(double theta) const { return curve_.h(theta) + curve_.h(theta + kPi); }

// ------------------------------------------------------------------- labels

LiftedLabel compose(LiftedLabel a, int di, int dj) { return {a.i + di, a.j + dj, a.l}; }

std::string to_string(const LiftedLabel& label) {
    return "(" + std::to_string(label.i) + "," + std::to_string(label.j) + ";" +
           std::to_string(label.l) + ")";
}

BoundaryPoint LiftedScatterer::at(double s) const {
    BoundaryPoint p = base->at(s);
    p.point += offset;
    return p;
}

LiftedScatterer lift_scatterer(const Table& table, LiftedLabel label) {
    if (label.l < 0 || label.l >= table.size())
        throw InvalidTable("scatterer index " + std::to_string(label.l) + " out of range");
    return {&table.scatterer(label.l), label, label.offset()};
}

// ------------------------------------------------------------- separations

double convex_gap(const Scatterer& a, Vec2 oa, const Scatterer& b, Vec2 ob) {
    const SupportCurve& ca = a.curve();
    const SupportCurve& cb = b.curve();
    const Vec2 delta = ob - oa;
    auto f = [&](double t) {
        return dot(unit(t), delta) - ca.h(t) - cb.h(t + kPi);
    };
    return periodic_max(f, 256);
}

double segment_clearance(const Scatterer& sc, Vec2 offset, Vec2 p0, Vec2 p1) {
    const SupportCurve& c = sc.curve();
    const Vec2 q0 = p0 - offset, q1 = p1 - offset;
    auto f = [&](double t) {
        const Vec2 u = unit(t);
        return std::min(dot(u, q0), dot(u, q1)) - c.h(t);
    };
    return periodic_max(f, 512);
}

// --------------------------------------------------------------- ray casting

std::optional<RayHit> ray_intersect(const Scatterer& sc, Vec2 offset, Vec2 p, Vec2 d) {
    const Vec2 c = sc.center() + offset;
    const double along = dot(c - p, d);
    const double r = sc.outer_radius();
    if (along < -r) return std::nullopt;
    const Vec2 pd = perp(d);
    const double off = dot(c - p, pd);
    if (std::abs(off) > r) return std::nullopt;

    const SupportCurve& curve = sc.curve();
    const Vec2 q = p - offset;
    const double alpha = std::atan2(d.y, d.x);
    auto g = [&](double t) { return cross(d, curve.point(t) - q); };
    double ta = alpha + 0.5 * kPi, tb = alpha + 1.5 * kPi;
    const double ga = g(ta), gb = g(tb);
    if (ga < 0.0 || gb > 0.0) return std::nullopt;
    // g decreases on the entry arc
    double lo = ta, hi = tb;
    for (int k = 0; k < 200 && hi - lo > 1e-3; ++k) {
        const double m = 0.5 * (lo + hi);
        if (g(m) > 0.0) lo = m; else hi = m;
    }
    double t = 0.5 * (lo + hi);
    for (int k = 0; k < 100; ++k) {
        const double gv = g(t);
        if (gv > 0.0) lo = t; else hi = t;
        const double rho = curve.radius_of_curvature(t);
        const double dg = rho * dot(d, unit(t));
        double next = (dg != 0.0) ? t - gv / dg : 0.5 * (lo + hi);
        if (!(next >= lo && next <= hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - t) <= 1e-15 * std::max(1.0, std::abs(t)) || hi - lo < 1e-15) {
            t = next;
            break;
        }
        t = next;
    }
    const Vec2 hit = curve.point(t) + offset;
    const double tt = dot(hit - p, d);
    if (tt <= 0.0) return std::nullopt;
    RayHit out;
    out.t = tt;
    out.theta = wrap_angle(t);
    out.s = sc.angle_to_arclength(out.theta);
    out.point = hit;
    out.tangency = std::abs(dot(d, unit(t)));
    return out;
}

namespace {

std::optional<RayHit> cast_ray_impl(const std::vector<Scatterer>& scats, double r_out_max, Vec2 p,
                                    Vec2 d, double max_t, const LiftedLabel* exclude) {
    const Vec2 e = p + d * max_t;
    const double xmin = std::min(p.x, e.x) - r_out_max, xmax = std::max(p.x, e.x) + r_out_max;
    const double ymin = std::min(p.y, e.y) - r_out_max, ymax = std::max(p.y, e.y) + r_out_max;
    std::optional<RayHit> best;
    for (int l = 0; l < static_cast<int>(scats.size()); ++l) {
        const Scatterer& sc = scats[static_cast<size_t>(l)];
        const Vec2 c = sc.center();
        const int i0 = static_cast<int>(std::floor(xmin - c.x)), i1 = static_cast<int>(std::ceil(xmax - c.x));
        const int j0 = static_cast<int>(std::floor(ymin - c.y)), j1 = static_cast<int>(std::ceil(ymax - c.y));
        for (int i = i0; i <= i1; ++i) {
            for (int j = j0; j <= j1; ++j) {
                const LiftedLabel lab{i, j, l};
                if (exclude && lab == *exclude) continue;
                auto hit = ray_intersect(sc, lab.offset(), p, d);
                if (!hit || hit->t > max_t) continue;
                if (!best || hit->t < best->t) {
                    hit->label = lab;
                    best = hit;
                }
            }
        }
    }
    return best;
}

double estimate_tau_max(const std::vector<Scatterer>& scats, double r_out_max, int ns) {
    const int nphi = 2 * ns + 1;
    double best = 0.0;
    struct Sample { double tau; int l; double s, phi; };
    std::vector<Sample> top;
    auto flight = [&](int l, double s, double phi) -> double {
        const Scatterer& sc = scats[static_cast<size_t>(l)];
        const BoundaryPoint bp = sc.at(s);
        const Vec2 d = bp.normal * std::cos(phi) + bp.tangent * std::sin(phi);
        const LiftedLabel self{0, 0, l};
        for (double max_t = 2.0; max_t <= 64.0; max_t *= 2.0) {
            auto hit = cast_ray_impl(scats, r_out_max, bp.point, d, max_t, &self);
            if (hit) return hit->t;
        }
        return std::numeric_limits<double>::infinity();
    };
    for (int l = 0; l < static_cast<int>(scats.size()); ++l) {
        const double per = scats[static_cast<size_t>(l)].perimeter();
        for (int a = 0; a < ns; ++a) {
            const double s = per * (a + 0.5) / ns;
            for (int b = 0; b < nphi; ++b) {
                double phi = -0.5 * kPi + kPi * (b + 0.5) / nphi;
                const double tau = flight(l, s, phi);
                top.push_back({tau, l, s, phi});
                best = std::max(best, tau);
            }
        }
    }
    if (!std::isfinite(best)) return best;
    std::partial_sort(top.begin(), top.begin() + std::min<size_t>(16, top.size()), top.end(),
                      [](const Sample& x, const Sample& y) { return x.tau > y.tau; });
    // pattern search around the largest samples
    for (size_t k = 0; k < std::min<size_t>(16, top.size()); ++k) {
        Sample cur = top[k];
        double ds = scats[static_cast<size_t>(cur.l)].perimeter() / ns, dp = kPi / nphi;
        for (int it = 0; it < 60; ++it) {
            bool moved = false;
            for (int dir = 0; dir < 4; ++dir) {
                Sample trial = cur;
                if (dir == 0) trial.s += ds;
                if (dir == 1) trial.s -= ds;
                if (dir == 2) trial.phi = std::min(0.5 * kPi - 1e-9, trial.phi + dp);
                if (dir == 3) trial.phi = std::max(-0.5 * kPi + 1e-9, trial.phi - dp);
                trial.tau = flight(trial.l, trial.s, trial.phi);
                if (trial.tau > cur.tau) { cur = trial; moved = true; }
            }
            if (!moved) { ds *= 0.5; dp *= 0.5; }
        }
        best = std::max(best, cur.tau);
    }
    return best;
}

}  // namespace

std::optional<RayHit> cast_ray(const Table& table, Vec2 p, Vec2 d, double max_t,
                               const LiftedLabel* exclude) {
    return cast_ray_impl(table.scatterers(), table.max_outer_radius(), p, d, max_t, exclude);
}

// ------------------------------------------------------------------ horizon

HorizonCertificate check_shadow_cover(const std::vector<Scatterer>& scats, int N) {
    if (scats.empty()) throw InvalidTable("table has no scatterers");
    if (N <= 0) throw InvalidTable("lattice bound must be positive, no directions examined");
    HorizonCertificate cert;
    cert.lattice_bound = N;
    cert.status = HorizonCertificate::Status::finite;
    double worst_gap = -1e300;
    for (int p = 0; p <= N; ++p) {
        for (int q = -N; q <= N; ++q) {
            if (p == 0 && q <= 0) continue;
            if (gcd_int(p, q) != 1) continue;
            const double nv = std::hypot(p, q);
            const Vec2 u{-q / nv, p / nv};
            const double period = 1.0 / nv;
            std::vector<std::pair<double, double>> iv;
            bool full = false;
            for (const auto& sc : scats) {
                const double lo = -sc.support(-u), hi = sc.support(u);
                if (hi - lo >= period) { full = true; break; }
                double a = std::fmod(lo, period);
                if (a < 0) a += period;
                iv.push_back({a, a + (hi - lo)});
            }
            if (full) continue;
            std::sort(iv.begin(), iv.end());
            double reach = iv.front().second;
            // wrapped tails cover the start of the period
            for (const auto& x : iv) reach = std::max(reach, x.second - period);
            double gap = -1e300, glo = 0, ghi = 0;
            for (size_t k = 1; k < iv.size(); ++k) {
                const double g = iv[k].first - reach;
                if (g > gap) { gap = g; glo = reach; ghi = iv[k].first; }
                reach = std::max(reach, iv[k].second);
            }
            {
                const double g = iv.front().first + period - reach;
                if (g > gap) { gap = g; glo = reach; ghi = iv.front().first + period; }
            }
            if (gap > -1e-9 && gap > worst_gap) {
                worst_gap = gap;
                cert.status = HorizonCertificate::Status::corridor_found;
                cert.witness = Corridor{p, q, glo, ghi};
            }
        }
    }
    // directions outside the box have period at most 1/(N+1)
    double min_cover = 1e300;
    for (int k = 0; k < 2048; ++k) {
        const double t = kPi * k / 2048;
        double w = 0.0;
        for (const auto& sc : scats) w = std::max(w, sc.width(t));
        min_cover = std::min(min_cover, w);
    }
    cert.exhaustive = min_cover >= 1.0 / (N + 1) + 1e-9;
    return cert;
}

HorizonCertificate check_finite_horizon(const Table& table, int lattice_bound) {
    HorizonCertificate cert = check_shadow_cover(table.scatterers(), lattice_bound);
    if (cert.status == HorizonCertificate::Status::finite) cert.tau_max_bound = table.tau_max();
    return cert;
}

// -------------------------------------------------------------------- Table

Table Table::build(std::vector<SupportCurve> curves, const TableOptions& opts) {
    if (curves.empty()) throw InvalidTable("table has no scatterers");
    Table t;
    for (auto& c : curves) t.scatterers_.emplace_back(std::move(c));
    t.k_min_ = 1e300;
    t.k_max_ = 0.0;
    for (const auto& s : t.scatterers_) {
        t.k_min_ = std::min(t.k_min_, s.k_min());
        t.k_max_ = std::max(t.k_max_, s.k_max());
        t.r_out_max_ = std::max(t.r_out_max_, s.outer_radius());
        t.diameter_ = std::max(t.diameter_, 2.0 * s.outer_radius());
    }
    // pairwise clearance between lifted scatterers
    t.tau_min_ = 1e300;
    const int box = static_cast<int>(std::ceil(2.0 * t.r_out_max_)) + 1;
    for (int a = 0; a < t.size(); ++a) {
        for (int b = 0; b < t.size(); ++b) {
            for (int i = -box; i <= box; ++i) {
                for (int j = -box; j <= box; ++j) {
                    if (a == b && i == 0 && j == 0) continue;
                    const Scatterer& sa = t.scatterers_[static_cast<size_t>(a)];
                    const Scatterer& sb = t.scatterers_[static_cast<size_t>(b)];
                    const Vec2 off{static_cast<double>(i), static_cast<double>(j)};
                    const double cd = norm(sb.center() + off - sa.center());
                    if (cd - sa.outer_radius() - sb.outer_radius() > t.tau_min_) continue;
                    const double gap = convex_gap(sa, {0, 0}, sb, off);
                    if (gap < opts.clearance)
                        throw InvalidTable("scatterers " + std::to_string(a) + " and " +
                                           std::to_string(b) + " in cell (" + std::to_string(i) +
                                           "," + std::to_string(j) + ") are closer than " +
                                           format_double(opts.clearance) + " (gap " +
                                           format_double(gap) + ")");
                    t.tau_min_ = std::min(t.tau_min_, gap);
                }
            }
        }
    }
    t.horizon_ = check_shadow_cover(t.scatterers_, opts.lattice_bound);
    if (t.finite_horizon() && opts.tau_max_hint > 0.0) {
        t.horizon_.tau_max_bound = opts.tau_max_hint;
    } else if (t.finite_horizon()) {
        const double est = estimate_tau_max(t.scatterers_, t.r_out_max_, opts.tau_max_samples);
        if (!std::isfinite(est)) {
            t.horizon_.status = HorizonCertificate::Status::corridor_found;
        } else {
            t.horizon_.tau_max_bound = 1.05 * est + 1e-9;
        }
    }
    if (opts.require_finite_horizon) t.require_finite_horizon();
    return t;
}

void Table::require_finite_horizon() const {
    if (!finite_horizon()) {
        std::string msg = "table has an open corridor";
        if (horizon_.witness)
            msg += " in direction (" + std::to_string(horizon_.witness->p) + "," +
                   std::to_string(horizon_.witness->q) + ")";
        throw HorizonViolation(msg);
    }
}

int Table::cell_bound() const { return static_cast<int>(std::ceil(tau_max())) + 1; }

std::vector<SupportCurve> Table::curves() const {
    std::vector<SupportCurve> out;
    for (const auto& s : scatterers_) out.push_back(s.curve());
    return out;
}

}  // namespace sinai
