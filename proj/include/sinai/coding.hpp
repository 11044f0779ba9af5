#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sinai/dynamics.hpp"

namespace sinai {

// Finite window of the symbolic code, symbols[k] has index offset + k.
struct Word {
    int offset = 0;
    std::vector<LiftedLabel> symbols;
    bool admissible = true;
    bool partial = false;
    int reach_forward = 0;
    int reach_backward = 0;

    int first_index() const { return offset; }
    int last_index() const { return offset + static_cast<int>(symbols.size()) - 1; }
    bool has(int i) const { return i >= first_index() && i <= last_index(); }
    const LiftedLabel& at(int i) const { return symbols.at(static_cast<size_t>(i - offset)); }
    bool operator==(const Word&) const = default;
};

struct QuotientWord {
    Word representative;
    bool operator==(const QuotientWord&) const = default;
};

Word encode_orbit(const Table& table, const CollisionCoord& c, int n);
QuotientWord quotient(const Word& w);
Word translate(const Word& w, int di, int dj);
Word shift_left(const Word& w);  // index i of the result holds a_{i+1}
bool check_admissible(const Word& w, int k_cell);

double rho_distance(const Word& w1, const Word& w2);

double expansion_constant(double tau_max, double k_min);
double expansion_constant(const Table& table);

struct HolderSample {
    int depth = 0;
    double distance = 0.0;  // ‖x − y‖ in (s, φ)
    double scaled = 0.0;    // distance · e^{B_min depth}
};

struct HolderReport {
    int depth = 0;
    double b_min = 0.0;
    double constant = 0.0;  // max of scaled distances
    std::size_t pairs = 0;
    std::vector<HolderSample> samples;
};

// Pairs (x, y) sharing a depth-n cylinder are produced by bisecting along
// random directions from x; each pair is verified by re-encoding y.
HolderReport holder_inverse_check(const Table& table, std::size_t samples, int n,
                                  std::uint64_t seed = 1, int workers = 0);

std::string serialize(const Word& w, bool canonical = false);
Word parse_word(const std::string& text, bool* canonical = nullptr);

}  // namespace sinai
