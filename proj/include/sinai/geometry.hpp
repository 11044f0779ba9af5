#pragma once

#include <compare>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sinai/vec2.hpp"

namespace sinai {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;
inline constexpr double kPi = 3.141592653589793238462643383279;

struct SupportDerivs {
    double h = 0, h1 = 0, h2 = 0, h3 = 0;
};

// Compactly supported smooth term of a support function:
// amplitude · β((θ − θ0)/half_width) with β(t) = exp(1 − 1/(1 − t²)) (even)
// or t·exp(1 − 1/(1 − t²)) (odd), extended 2π-periodically.
struct SupportBump {
    enum class Shape { even, odd };
    Shape shape = Shape::even;
    double theta0 = 0.0;
    double half_width = 0.5;  // in (0, π)
    double amplitude = 0.0;

    SupportDerivs eval(double theta) const;
    // ∫ from θ0 − half_width to θ0 − half_width + x of the bump, x ∈ [0, 2π)
    double partial_integral(double x) const;
    double total_integral() const;
};

// Convex curve given by the Fourier series of its support function
// h(θ) = a0 + Σ a_n cos nθ + b_n sin nθ, plus optional bump terms.
// The degree-one terms carry the centre.
class SupportCurve {
public:
    SupportCurve() = default;
    SupportCurve(double a0, std::vector<double> a, std::vector<double> b,
                 std::vector<SupportBump> bumps = {});

    static SupportCurve circle(Vec2 center, double r);
    // flat layout: a0, a1, b1, a2, b2, ...
    static SupportCurve from_coeffs(const std::vector<double>& flat);
    std::vector<double> coeffs() const;

    int degree() const { return static_cast<int>(a_.size()); }
    double a0() const { return a0_; }
    const std::vector<double>& a() const { return a_; }
    const std::vector<double>& b() const { return b_; }
    Vec2 center() const;

    const std::vector<SupportBump>& bumps() const { return bumps_; }
    SupportCurve with_bump(const SupportBump& b) const;

    SupportDerivs eval(double theta) const;
    double h(double theta) const { return eval(theta).h; }
    Vec2 point(double theta) const;
    double radius_of_curvature(double theta) const;
    // antiderivative of h + h'' from 0 to theta; rho receives h + h'' at theta
    double arclength_from_zero(double theta, double* rho = nullptr) const;
    double perimeter() const;

    SupportCurve translated(Vec2 d) const;

private:
    double a0_ = 0.0;
    std::vector<double> a_, b_;
    std::vector<SupportBump> bumps_;
    double h1_zero_ = 0.0;
    double bump_zero_ = 0.0;
};

struct CurvePoint {
    Vec2 point, tangent, normal;
    double K = 0.0;
};

CurvePoint curve_eval(const SupportCurve& curve, double theta);

// Smallest h + h'' over a dense scan refined by golden section.
struct ConvexityScan {
    double min_radius;
    double argmin_theta;
    double max_radius;
};
ConvexityScan scan_convexity(const SupportCurve& curve, int samples = 4096);
void require_convex(const SupportCurve& curve);

struct BoundaryPoint {
    Vec2 point, tangent, normal;
    double K = 0.0;
    double theta = 0.0;
};

class Scatterer {
public:
    explicit Scatterer(SupportCurve curve, int table_nodes = 2048);

    const SupportCurve& curve() const { return curve_; }
    double perimeter() const { return perimeter_; }
    double wrap(double s) const;
    double angle_to_arclength(double theta) const;
    double arclength_to_angle(double s) const;
    BoundaryPoint at(double s) const;
    double curvature_derivative(double s) const;

    double k_min() const { return k_min_; }
    double k_max() const { return k_max_; }
    Vec2 center() const { return center_; }
    double outer_radius() const { return r_out_; }
    double inner_radius() const { return r_in_; }
    // support value in the direction of a unit vector u
    double support(Vec2 u) const;
    double width(double theta) const;

    const std::vector<double>& table_theta() const { return theta_nodes_; }
    const std::vector<double>& table_s() const { return s_nodes_; }

private:
    SupportCurve curve_;
    double perimeter_ = 0.0;
    std::vector<double> theta_nodes_, s_nodes_;
    double k_min_ = 0.0, k_max_ = 0.0;
    Vec2 center_;
    double r_out_ = 0.0, r_in_ = 0.0;
};

struct LiftedLabel {
    int i = 0;
    int j = 0;
    int l = 0;
    auto operator<=>(const LiftedLabel&) const = default;
    Vec2 offset() const { return {static_cast<double>(i), static_cast<double>(j)}; }
};

LiftedLabel compose(LiftedLabel a, int di, int dj);
std::string to_string(const LiftedLabel& label);

struct Corridor {
    int p = 0, q = 0;
    double lo = 0.0, hi = 0.0;  // offsets along the unit normal (-q, p)/|(p,q)|
    double width() const { return hi - lo; }
};

struct HorizonCertificate {
    enum class Status { finite, corridor_found };
    Status status = Status::corridor_found;
    double tau_max_bound = 0.0;
    std::optional<Corridor> witness;
    int lattice_bound = 0;
    bool exhaustive = false;  // directions beyond the bound are covered by a width argument
};

struct TableOptions {
    int lattice_bound = 6;
    double clearance = 1e-6;
    bool require_finite_horizon = false;
    int tau_max_samples = 256;
    // when positive, used as the free-flight bound instead of sampling
    double tau_max_hint = 0.0;
};

class Scatterer;

class Table {
public:
    static Table build(std::vector<SupportCurve> curves, const TableOptions& opts = {});

    int size() const { return static_cast<int>(scatterers_.size()); }
    const Scatterer& scatterer(int l) const { return scatterers_.at(static_cast<size_t>(l)); }
    const std::vector<Scatterer>& scatterers() const { return scatterers_; }
    std::vector<SupportCurve> curves() const;

    double tau_min() const { return tau_min_; }
    double tau_max() const { return horizon_.tau_max_bound; }
    double k_min() const { return k_min_; }
    double k_max() const { return k_max_; }
    double diameter() const { return diameter_; }
    double max_outer_radius() const { return r_out_max_; }
    const HorizonCertificate& horizon() const { return horizon_; }
    bool finite_horizon() const { return horizon_.status == HorizonCertificate::Status::finite; }
    void require_finite_horizon() const;
    int cell_bound() const;  // K_cell = ceil(tau_max) + 1

private:
    std::vector<Scatterer> scatterers_;
    double tau_min_ = 0.0, k_min_ = 0.0, k_max_ = 0.0, diameter_ = 0.0, r_out_max_ = 0.0;
    HorizonCertificate horizon_;
};

// Translated view of a base scatterer.
struct LiftedScatterer {
    const Scatterer* base = nullptr;
    LiftedLabel label;
    Vec2 offset;
    BoundaryPoint at(double s) const;
    Vec2 center() const { return base->center() + offset; }
};

LiftedScatterer lift_scatterer(const Table& table, LiftedLabel label);

// Signed gap between two translated convex curves (negative when they overlap).
double convex_gap(const Scatterer& a, Vec2 oa, const Scatterer& b, Vec2 ob);

// Signed clearance between a segment and a translated convex curve.
double segment_clearance(const Scatterer& s, Vec2 offset, Vec2 p0, Vec2 p1);

struct RayHit {
    LiftedLabel label;
    double t = 0.0;
    double theta = 0.0;
    double s = 0.0;
    Vec2 point;
    double tangency = 0.0;  // |cos| between ray and normal at the hit
};

// First intersection of the ray p + t d (t > 0, |d| = 1) with one translated curve.
std::optional<RayHit> ray_intersect(const Scatterer& s, Vec2 offset, Vec2 p, Vec2 d);

// First intersection with any lifted scatterer, optionally skipping one label.
std::optional<RayHit> cast_ray(const Table& table, Vec2 p, Vec2 d, double max_t,
                               const LiftedLabel* exclude = nullptr);

HorizonCertificate check_finite_horizon(const Table& table, int lattice_bound);
// Geometric part only (no tau_max estimate); used during construction.
HorizonCertificate check_shadow_cover(const std::vector<Scatterer>& scatterers, int lattice_bound);

// Table file: "version", "torus = unit_square" and one [scatterer] block per obstacle.
struct TableFile {
    int version = 1;
    std::vector<SupportCurve> curves;
};
TableFile read_table_file(std::istream& in);
TableFile read_table_file(const std::string& path);
void write_table_file(std::ostream& out, const std::vector<SupportCurve>& curves);
void write_table_file(const std::string& path, const std::vector<SupportCurve>& curves);
std::string format_double(double v);

}  // namespace sinai
