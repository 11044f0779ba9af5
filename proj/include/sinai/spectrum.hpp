#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sinai/dynamics.hpp"
#include "sinai/errors.hpp"

namespace sinai {

struct Cell {
    int i = 0, j = 0;
    auto operator<=>(const Cell&) const = default;
    Vec2 vec() const { return {static_cast<double>(i), static_cast<double>(j)}; }
    Cell operator+(Cell o) const { return {i + o.i, j + o.j}; }
    Cell operator-() const { return {-i, -j}; }
};

// Cyclic word: bounce k lies on scatterer rho[k]; I[k] is the cell displacement
// from bounce k to bounce k+1 (indices mod q).
struct OrbitWord {
    std::vector<int> rho;
    std::vector<Cell> I;
    int q() const { return static_cast<int>(rho.size()); }
    auto operator<=>(const OrbitWord&) const = default;
    bool operator==(const OrbitWord&) const = default;
};

// Lifted labels of bounces 0..q, the last one closing the cycle.
std::vector<LiftedLabel> lifted_labels(const OrbitWord& w);
std::string to_string(const OrbitWord& w);
OrbitWord parse_orbit_word(const std::string& text);
OrbitWord rotate(const OrbitWord& w, int r);
OrbitWord reverse(const OrbitWord& w);
// Lexicographic minimum over rotations and time reversal.
OrbitWord canonical(const OrbitWord& w);
bool is_primitive(const OrbitWord& w);
void validate_word(const Table& table, const OrbitWord& w);

struct TauPair {
    double tau = 0.0;
    double d1 = 0.0, d2 = 0.0, d11 = 0.0, d12 = 0.0, d22 = 0.0;
    double cos1 = 0.0, sin1 = 0.0;  // angle at the start, measured from its normal
    double cos2 = 0.0, sin2 = 0.0;  // reflected angle at the end
    Vec2 p1, p2, u;
};

TauPair tau_pair(const Table& table, Cell I, int rho_a, int rho_b, double s, double s2);

struct CyclicTridiag {
    std::vector<double> diag;
    std::vector<double> off;  // off[k] couples k and k+1 (mod q)
    int size() const { return static_cast<int>(diag.size()); }
    Eigen::MatrixXd dense() const;
    Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
};

// Sherman–Morrison reduction of the corner to two tridiagonal solves.
Eigen::VectorXd solve_cyclic_tridiagonal(const CyclicTridiag& A, const Eigen::VectorXd& rhs);

struct LengthEval {
    double L = 0.0;
    Eigen::VectorXd grad;
    CyclicTridiag hess;
    std::vector<TauPair> pairs;  // pairs[k] joins bounce k to bounce k+1
};

LengthEval length_functional(const Table& table, const OrbitWord& w, const std::vector<double>& s);

enum class OrbitClass { regular, grazing, ghost };
const char* to_string(OrbitClass c);

struct GeneralizedOrbit {
    OrbitWord word;
    std::vector<double> s;
    std::vector<double> phi;  // outgoing angle at each bounce
    double length = 0.0;
    double grad_norm = 0.0;
    double hess_min_eig = 0.0;
    OrbitClass cls = OrbitClass::regular;
    bool near_grazing = false;
    double clearance = 0.0;  // smallest margin seen by the classifier
    double min_cos = 0.0;    // smallest cos φ over the bounces; <= 0 means a pass-through
    int starts = 0;
    int starts_converged = 0;
    double start_spread = 0.0;  // max wrapped distance between converged starts
    double best_residual = 0.0;
};

inline constexpr double kMinHessEig = 1e-8;

struct SolverOptions {
    int n_starts = 8;
    double tol_crit = 1e-10;
    double tol_graze = kTolGraze;
    int max_iter = 200;
};

std::vector<std::vector<double>> deterministic_starts(const Table& table, const OrbitWord& w, int n);

// Newton with a dogleg trust region from one start.
struct NewtonResult {
    std::vector<double> s;
    double L = 0.0;
    double grad_norm = 0.0;
    bool converged = false;
    int iterations = 0;
};
NewtonResult newton_trust_region(const Table& table, const OrbitWord& w, std::vector<double> s,
                                 const SolverOptions& opts = {});

// Throws HessianSingular when the minimum is not isolated (a straight line
// through every obstacle of the word, for instance).
GeneralizedOrbit find_generalized_orbit(const Table& table, const OrbitWord& w,
                                        const SolverOptions& opts = {});

struct Classification {
    OrbitClass cls = OrbitClass::regular;
    bool near_grazing = false;
    double margin = 1e300;
};
Classification classify_orbit(const Table& table, const GeneralizedOrbit& o, double tol_graze = kTolGraze);

double wrapped_distance(const Table& table, const OrbitWord& w, const std::vector<double>& a,
                        const std::vector<double>& b);

struct SpectrumEntry {
    OrbitWord word;
    std::string key;
    GeneralizedOrbit orbit;
};

struct SpectrumOptions {
    int q_max = 4;
    double T_max = 1.5;
    SolverOptions solver;
    std::size_t budget = 500000;  // maximum number of canonical words solved
    int workers = 0;
    int cell_bound = -1;          // defaults to the table's K_cell
};

struct SpectrumTable {
    int q_max = 0;
    double T_max = 0.0;
    std::vector<SpectrumEntry> entries;  // every solved class, sorted by (q, length, key)
    std::vector<std::string> failures;   // words where no start converged
    std::vector<std::string> degenerate; // words whose minimizers form a continuum
    std::size_t words_examined = 0;
    bool partial = false;
    std::vector<const SpectrumEntry*> regular() const;
    std::vector<const SpectrumEntry*> of_class(OrbitClass c) const;
    const SpectrumEntry* find(const std::string& key) const;
};

class SpectrumBudgetExceeded : public BudgetExceeded {
public:
    SpectrumBudgetExceeded(const std::string& what, SpectrumTable table)
        : BudgetExceeded(what), partial(std::move(table)) {}
    SpectrumTable partial;
};

// Canonical primitive words in increasing q whose gap lower bound fits in T_max.
std::vector<OrbitWord> enumerate_words(const Table& table, int q_max, double T_max,
                                       std::size_t budget, int cell_bound, bool* truncated);

// Throws SpectrumBudgetExceeded (carrying the solved part) past the word budget.
SpectrumTable enumerate_spectrum(const Table& table, const SpectrumOptions& opts);

struct Collision {
    std::string a, b;
    double la = 0.0, lb = 0.0;
};
std::vector<Collision> check_simple_spectrum(const SpectrumTable& spec, double tol);

struct ReplayCheck {
    bool sequence_matches = false;
    double closure_error = 0.0;
};
ReplayCheck replay_orbit(const Table& table, const GeneralizedOrbit& o);

void sort_entries(std::vector<SpectrumEntry>& entries);
SpectrumTable solve_words(const Table& table, const std::vector<OrbitWord>& words,
                          const SpectrumOptions& opts, const SpectrumTable* previous,
                          const std::vector<char>* reuse);

// Re-solves only the words accepted by `affected`, reusing the rest from `previous`.
template <class Pred>
SpectrumTable refresh_spectrum(const Table& table, const SpectrumTable& previous,
                               const SpectrumOptions& opts, Pred&& affected) {
    bool truncated = false;
    const int kc = opts.cell_bound > 0 ? opts.cell_bound : table.cell_bound();
    const auto words = enumerate_words(table, opts.q_max, opts.T_max, opts.budget, kc, &truncated);
    std::vector<char> reuse(words.size(), 0);
    for (size_t k = 0; k < words.size(); ++k) {
        const SpectrumEntry* e = previous.find(to_string(words[k]));
        reuse[k] = (e != nullptr && !affected(*e)) ? 1 : 0;
    }
    SpectrumTable out = solve_words(table, words, opts, &previous, &reuse);
    if (truncated) {
        out.partial = true;
        throw SpectrumBudgetExceeded("word budget exhausted", std::move(out));
    }
    return out;
}

}  // namespace sinai
