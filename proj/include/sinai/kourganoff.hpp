#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "sinai/dynamics.hpp"
#include "sinai/enriched.hpp"

namespace sinai {

// Defining function φ ≥ 0 on the table, zero exactly on the boundary:
// a product of clamped smoothed signed distances, one factor clamp·f(d / clamp)
// per scatterer, where f is smooth, f(t) = t near 0 and f ≡ 1 for t ≥ 1.
// The two sheets are z = ±√φ.
class HeightProfile {
public:
    struct Eval {
        double phi = 0.0;
        Vec2 grad;
        double hxx = 0.0, hxy = 0.0, hyy = 0.0;  // Hessian of φ
    };

    explicit HeightProfile(Table table, double clamp = 0.05);

    const Table& table() const { return table_; }
    double clamp() const { return clamp_; }

    Eval eval(Vec2 p) const;
    double phi(Vec2 p) const { return eval(p).phi; }
    // signed distance to the nearest lifted boundary and its label
    double distance(Vec2 p, LiftedLabel* label = nullptr) const;

    // smallest |∇φ| over seam samples (slice curvature is nonzero iff positive)
    double seam_gradient_min(int samples_per_scatterer = 256) const;

private:
    Table table_;
    double clamp_;
};

// One-dimensional clamp: value and first two derivatives.
std::array<double, 3> clamp_profile(double t);

struct MetricPatch {
    double E = 1.0, F = 0.0, G = 1.0;
    double Eu = 0.0, Ev = 0.0, Fu = 0.0, Fv = 0.0, Gu = 0.0, Gv = 0.0;
    // gamma[k][i][j] = Γ^k_ij
    double gamma[2][2][2] = {};
};

// Interior chart (x, y) on either sheet of the ε-flattened surface:
// E_ε = 1 + ε² z_x², F_ε = ε² z_x z_y, G_ε = 1 + ε² z_y².
MetricPatch metric_coeffs(const HeightProfile& profile, double eps, Vec2 p);

// State on the ε-surface embedded as {(x, y, Z) : Z² = ε² φ(x, y)}.
struct SurfaceState {
    double X[3] = {0, 0, 0};
    double V[3] = {0, 0, 0};
    Vec2 point() const { return {X[0], X[1]}; }
    int sheet() const { return X[2] >= 0.0 ? 1 : -1; }
    double speed() const;
    // projection to the table with the velocity normalised (π_K)
    Vec2 planar_direction() const;
};

SurfaceState lift_state(const HeightProfile& profile, double eps, Vec2 p, Vec2 dir, int sheet = 1);

struct IntegratorOptions {
    double tol = 1e-11;
    double h_max = 1e-2;
    double h_min = 1e-14;
    long max_steps = 5'000'000;
};

struct GeodesicPath {
    double eps = 0.0;
    std::vector<double> times;
    std::vector<SurfaceState> states;
    double length = 0.0;
    long rejected = 0;
    double speed_drift = 0.0;  // max | |V| − 1 |
};

GeodesicPath integrate_geodesic(const HeightProfile& profile, double eps, const SurfaceState& init, double T,
                                const IntegratorOptions& opts = {});

struct ConvergenceRow {
    double eps = 0.0;
    double sup_distance = 0.0;
    long steps = 0;
    double speed_drift = 0.0;
};

struct ConvergenceReport {
    Vec2 p, v;
    double T = 0.0;
    double min_cos = 1.0;  // smallest |cos φ| along the billiard segment
    int collisions = 0;
    std::vector<ConvergenceRow> rows;
    bool monotone(double slack = 0.1) const;
};

// Sup over [0, T] of the distance between the projected upper-sheet geodesic
// and the billiard trajectory from the same planar initial data.
ConvergenceReport convergence_test(const HeightProfile& profile, Vec2 p, Vec2 v, double T,
                                   const std::vector<double>& eps_list = {0.2, 0.1, 0.05, 0.025},
                                   const IntegratorOptions& opts = {}, int workers = 0);

struct ClosedGeodesic {
    double eps = 0.0;
    double length = 0.0;
    double residual = 0.0;    // closing defect of the return map
    int iterations = 0;
    // per-leg section coordinates and directions relative to the chords
    std::vector<double> offsets, angles;
    std::vector<LiftedLabel> seam_sequence;
    GeodesicPath path;
};

struct ShootingOptions {
    double tol = 1e-11;
    int max_iter = 30;
    // seam sections along boundary arcs are spaced for this ε (0: the solved ε)
    double section_eps = 0.0;
    IntegratorOptions integrator;
};

// Closed geodesic in the free homotopy class of a billiard cycle, found by
// multiple shooting between transversals at the chord midpoints, one seam
// crossing per leg, sheets alternating. Boundary classes use seam_geodesic.
ClosedGeodesic closed_geodesic_in_class(const HeightProfile& profile, double eps, const BilliardCycle& cycle,
                                        const ShootingOptions& opts = {},
                                        const ClosedGeodesic* warm = nullptr);
ClosedGeodesic seam_geodesic(const HeightProfile& profile, int scatterer);

struct LengthConvergence {
    std::string word;
    double EL = 0.0;
    std::vector<ClosedGeodesic> geodesics;
    std::vector<double> gaps;    // l_ε − class length
    std::vector<double> ratios;  // gap(ε) / gap(ε/2)
};

// Class length is EL, or 2·EL for odd words (traversed on both sheets).
LengthConvergence length_convergence(const HeightProfile& profile, const BilliardCycle& cycle,
                                     const std::vector<double>& eps_list = {0.2, 0.1, 0.05, 0.025},
                                     const ShootingOptions& opts = {});

}  // namespace sinai
