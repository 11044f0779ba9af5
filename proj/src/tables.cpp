#include "sinai/tables.hpp"

namespace sinai::tables {

std::vector<SupportCurve> reference() {
    return {SupportCurve(0.38, {0.25, 0.02}, {0.25, 0.0}),
            SupportCurve::circle({0.75, 0.75}, 0.2)};
}

std::vector<SupportCurve> two_disks(double r1, double r2) {
    return {SupportCurve::circle({0.25, 0.25}, r1), SupportCurve::circle({0.75, 0.75}, r2)};
}

std::vector<SupportCurve> tangency() {
    auto c = reference();
    c.push_back(SupportCurve::circle({0.75, 0.2}, 0.05));
    return c;
}

std::vector<SupportCurve> single_disk(double r) { return {SupportCurve::circle({0.5, 0.5}, r)}; }

}  // namespace sinai::tables
