#pragma once

#include "sinai/geometry.hpp"

namespace sinai::tables {

// Two scatterers on the diagonal; the larger one is slightly elliptic.
std::vector<SupportCurve> reference();
// Two disks on the diagonal (radii r1 at (0.25,0.25), r2 at (0.75,0.75)).
std::vector<SupportCurve> two_disks(double r1, double r2);
// Reference table plus a small disk tangent to the horizontal period-2 chord.
std::vector<SupportCurve> tangency();
// Single disk of radius r at the centre of the cell.
std::vector<SupportCurve> single_disk(double r);

}  // namespace sinai::tables
