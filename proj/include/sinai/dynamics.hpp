#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "sinai/geometry.hpp"

namespace sinai {

inline constexpr double kTolGraze = 1e-8;
inline constexpr double kNearGrazing = 1e-4;

// φ is the oriented angle from the normal pointing into the table to the
// outgoing velocity; cos φ >= 0.
struct CollisionCoord {
    LiftedLabel label;
    double s = 0.0;
    double phi = 0.0;
};

struct FlightSegment {
    Vec2 start, dir;
    double tau = 0.0;
    int di = 0, dj = 0;  // cell displacement between consecutive bounces
};

struct SingularityFlag {
    enum class Kind { regular, grazing, near_grazing };
    Kind kind = Kind::regular;
    double margin = 1.0;  // |cos φ'| at the arrival
};

const char* to_string(SingularityFlag::Kind kind);

struct Bounce {
    CollisionCoord next;
    FlightSegment segment;
    SingularityFlag flag;
};

Vec2 outgoing_direction(const BoundaryPoint& bp, double phi);
double reflect_angle(const BoundaryPoint& bp, Vec2 incoming);

Bounce next_collision(const Table& table, const CollisionCoord& c, double tol_graze = kTolGraze);

struct MapOrbit {
    std::vector<CollisionCoord> points;  // iterates 1..|n| (backward iterates for n < 0)
    std::vector<FlightSegment> segments;
    std::vector<SingularityFlag> flags;
    int failure_index = -1;  // index of the first grazing iterate, -1 if none
    bool complete() const { return failure_index < 0; }
};

MapOrbit billiard_map(const Table& table, const CollisionCoord& c, int n, double tol_graze = kTolGraze);

inline CollisionCoord time_reverse(CollisionCoord c) {
    c.phi = -c.phi;
    return c;
}

struct JacobiPoint {
    double eta = 0.0, xi = 0.0, omega = 0.0;
};
JacobiPoint to_jacobi(double x, double y, double omega);
void from_jacobi(const JacobiPoint& j, double& x, double& y, double& omega);
inline JacobiPoint free_flight(JacobiPoint j, double t) {
    j.eta += t;
    return j;
}

struct CroftonEstimate {
    double value = 0.0;
    double sigma = 0.0;
    std::uint64_t seed = 0;
    std::size_t samples = 0;
};
// closed form of ∫_0^π ½ sin θ dθ
double crofton_inner_integral();
CroftonEstimate crofton_check(double segment_length, std::size_t n_samples, std::uint64_t seed = 1);

// Billiard flow from an interior point, piecewise linear in time.
struct FlowPath {
    std::vector<double> times;  // collision times, starting with 0
    std::vector<Vec2> points;
    std::vector<Vec2> velocities;  // velocity after each breakpoint
    std::vector<double> cos_angles;  // |cos| at each collision (1 at the start)
    std::vector<LiftedLabel> labels;
    double horizon = 0.0;
    Vec2 position(double t) const;
};
FlowPath billiard_flow(const Table& table, Vec2 p, Vec2 v, double T);

struct JacobianReport {
    double mean_abs_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t accepted = 0;
    std::size_t attempted = 0;
};
// Finite-difference Jacobian of the map against cos φ / cos φ'.
JacobianReport jacobian_check(const Table& table, std::size_t n_samples, std::uint64_t seed,
                              int workers = 0, double min_cos = 0.05);

void write_trajectory(std::ostream& out, const CollisionCoord& start, const MapOrbit& orbit);

}  // namespace sinai
