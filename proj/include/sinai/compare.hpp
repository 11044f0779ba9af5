#pragma once

#include <string>
#include <vector>

#include "sinai/enriched.hpp"

namespace sinai {

struct ComparisonRow {
    std::string key;
    double EL_a = 0.0, EL_b = 0.0;
    double dev = 0.0;  // |EL_a − EL_b|
    bool filled_a = false, filled_b = false;  // solved directly because the report lacked the word
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;  // descending deviation, ties by key
    double max_deviation = 0.0;
    std::vector<std::string> unmatched_a, unmatched_b;  // present only in a (resp. b)
    bool agrees(double tol) const { return max_deviation < tol && unmatched_a.empty() && unmatched_b.empty(); }
};

struct CompareOptions {
    // a word missing from one report is minimized directly on that table and
    // accepted when its chords clear every obstacle to this tolerance
    double fill_clearance = 1e-7;
    ELOptions el;
};

// Words are matched by canonical form; lengths are never paired by proximity.
ComparisonReport compare_spectra(const Table& a, const EnrichedTable& ea, const Table& b, const EnrichedTable& eb,
                                 const CompareOptions& opts = {});
// Report-only variant: nothing is filled, scatterer counts come from the reports.
ComparisonReport compare_reports(int k_a, const EnrichedTable& ea, int k_b, const EnrichedTable& eb);

}  // namespace sinai
