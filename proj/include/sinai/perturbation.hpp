#pragma once

#include <string>
#include <vector>

#include "sinai/spectrum.hpp"

namespace sinai {

// Localised normal displacement of one scatterer. λ > 0 pushes the boundary
// into the table; retract mode moves it into the obstacle.
// The profile lives in the normal-angle coordinate of the unperturbed curve:
// λ = β((θ − theta0) / half_width), with the support inside (s0 − w, s0 + w).
struct BumpField {
    enum class Mode { move, tilt, retract };
    int scatterer = 0;
    double s0 = 0.0;
    double w = 0.0;
    Mode mode = Mode::move;
    double theta0 = 0.0;
    double half_width = 0.0;

    static BumpField make(const Table& table, int scatterer, double s0, double w, Mode mode);

    // λ and its θ-derivatives at normal angle θ
    SupportDerivs profile(double theta) const;
    // λ along the arclength of the unperturbed curve, with dλ/ds
    double lambda(const Table& table, double s, double* dlds = nullptr) const;
    bool covers(double theta) const;
    SupportBump term(double eps) const;
};

const char* to_string(BumpField::Mode m);
BumpField::Mode parse_mode(const std::string& s);

// Exact displaced curve (support-function form). eps = 0 returns the table unchanged.
Table apply_perturbation(const Table& table, const BumpField& lambda, double eps);

// P^λ(σ) = −∂_ε L^λ(σ) at ε = 0 with bounce points followed by normal angle:
// Σ λ_i (cos φ_i^in + cos φ_i^out) − λ'_i (sin φ_i^in − sin φ_i^out),
// which equals 2 Σ λ_i cos φ_i at a periodic orbit.
struct PLambda {
    double value = 0.0;
    Eigen::VectorXd grad;
};
PLambda p_lambda(const Table& table, const OrbitWord& w, const std::vector<double>& s, const BumpField& lambda);
PLambda p_lambda(const Table& table, const GeneralizedOrbit& orbit, const BumpField& lambda);

struct ResponseCheck {
    double eps = 0.0;
    std::vector<double> shift;  // measured (σ^ε − σ)/ε in unperturbed arclength
    double dL = 0.0;            // measured (L^ε − L)/ε
    double shift_error = 0.0;   // max |shift − ψ|
    double length_error = 0.0;  // |dL + P^λ|
};

struct ResponseReport {
    std::string word;
    std::vector<double> psi;   // solves D²L ψ = DP^λ
    double P = 0.0;
    Eigen::VectorXd DP;
    double residual = 0.0;     // ‖D²L ψ − DP^λ‖
    double first_order = 0.0;  // predicted dL/dε = −P^λ
    double tilt_gain = 0.0;    // ψᵀ D²L ψ
    std::vector<ResponseCheck> checks;
    std::vector<double> shift_ratios, length_ratios;  // error(ε)/error(ε/2)
};

ResponseReport first_order_response(const Table& table, const GeneralizedOrbit& orbit, const BumpField& lambda,
                                    const std::vector<double>& eps_list = {1e-3, 5e-4, 2.5e-4});

// Second-order prediction of the critical length change for a finite ε:
// L^λ_ε(σ) − L(σ) − ½ ε² ψᵀ D²L ψ, with L^λ_ε evaluated on the perturbed table.
double predicted_length_change(const Table& table, const Table& perturbed, const GeneralizedOrbit& orbit,
                               const BumpField& lambda, double eps);

// Bounce parameters of an orbit on `from` carried to `to` through the normal angle.
std::vector<double> carry_parameters(const Table& from, const Table& to, const OrbitWord& w,
                                     const std::vector<double>& s);

struct PerturbationStep {
    BumpField field;
    double eps = 0.0;
    std::string reason;
    std::vector<std::string> affected;
    std::string outcome;
};

struct GenericityOptions {
    int q_max = 4;
    double T_max = 1.2;
    double eps_max = 1e-3;
    double gap = 1e-9;
    int max_steps = 40;
    int max_retries = 20;
    int workers = 0;
};

struct GenericityResult {
    Table table;
    SpectrumTable spectrum;
    std::vector<PerturbationStep> log;
    std::vector<std::string> remaining;  // grazing words or colliding pairs left
    bool partial = false;
};

// Retract obstacles at the tangency points of grazing orbits until none is left.
GenericityResult degraze(const Table& table, const GenericityOptions& opts);
// Tilt at bounce points exclusive to one orbit of each colliding pair.
GenericityResult separate_lengths(const Table& table, const GenericityOptions& opts);

Table replay(const Table& table, const std::vector<PerturbationStep>& log);
void write_log(std::ostream& out, const std::vector<PerturbationStep>& log);
std::vector<PerturbationStep> read_log(std::istream& in);

// True when the orbit bounces inside the bump's support (widened by margin)
// or one of its chords passes within margin of a lift of the bumped scatterer.
bool affected_by(const Table& table, const GeneralizedOrbit& orbit, const BumpField& lambda, double margin);

// Where a grazing orbit touches: the scatterer, the arclength of the contact
// and whether it is a chord tangency (true) or a tangential bounce (false).
struct GrazingSite {
    int scatterer = 0;
    double s = 0.0;
    bool chord = true;
    double margin = 0.0;
};
GrazingSite grazing_site(const Table& table, const GeneralizedOrbit& orbit);

}  // namespace sinai
