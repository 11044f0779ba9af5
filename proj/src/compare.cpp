#include "sinai/compare.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

namespace sinai {

namespace {

std::optional<double> solve_missing(const Table& table, LinkSetStore& store, const std::string& key,
                                    const CompareOptions& opts) {
    if (key.rfind("boundary(", 0) == 0) {
        const int l = std::stoi(key.substr(9));
        if (l < 0 || l >= table.size()) return std::nullopt;
        return table.scatterer(l).perimeter();
    }
    try {
        const OrbitWord w = parse_orbit_word(key);
        const BilliardCycle c = minimize_EL(table, store, w, opts.el);
        if (c.clearance < -opts.fill_clearance) return std::nullopt;
        return c.EL;
    } catch (const Error&) {
        return std::nullopt;
    }
}

ComparisonReport compare(int k_a, const Table* a, const EnrichedTable& ea, int k_b, const Table* b,
                         const EnrichedTable& eb, const CompareOptions& opts) {
    if (k_a != k_b)
        throw IncomparableTables("scatterer counts " + std::to_string(k_a) + " and " + std::to_string(k_b));
    std::map<std::string, std::pair<std::optional<double>, std::optional<double>>> words;
    for (const auto& e : ea.entries) words[e.key].first = e.EL;
    for (const auto& e : eb.entries) words[e.key].second = e.EL;

    std::optional<LinkSetStore> store_a, store_b;
    if (a) store_a.emplace(*a);
    if (b) store_b.emplace(*b);
    ComparisonReport out;
    for (auto& [key, v] : words) {
        ComparisonRow row;
        row.key = key;
        if (!v.first && a) {
            v.first = solve_missing(*a, *store_a, key, opts);
            row.filled_a = true;
        }
        if (!v.second && b) {
            v.second = solve_missing(*b, *store_b, key, opts);
            row.filled_b = true;
        }
        if (!v.first) {
            out.unmatched_b.push_back(key);
            continue;
        }
        if (!v.second) {
            out.unmatched_a.push_back(key);
            continue;
        }
        row.EL_a = *v.first;
        row.EL_b = *v.second;
        row.dev = std::abs(row.EL_a - row.EL_b);
        out.max_deviation = std::max(out.max_deviation, row.dev);
        out.rows.push_back(row);
    }
    std::stable_sort(out.rows.begin(), out.rows.end(), [](const ComparisonRow& x, const ComparisonRow& y) {
        if (x.dev != y.dev) return x.dev > y.dev;
        return x.key < y.key;
    });
    return out;
}

}  // namespace

ComparisonReport compare_spectra(const Table& a, const EnrichedTable& ea, const Table& b, const EnrichedTable& eb,
                                 const CompareOptions& opts) {
    return compare(a.size(), &a, ea, b.size(), &b, eb, opts);
}

ComparisonReport compare_reports(int k_a, const EnrichedTable& ea, int k_b, const EnrichedTable& eb) {
    return compare(k_a, nullptr, ea, k_b, nullptr, eb, {});
}

}  // namespace sinai
