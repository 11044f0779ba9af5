#include "sinai/dynamics.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

#include "sinai/errors.hpp"
#include "sinai/parallel.hpp"

namespace sinai {

const char* to_string(SingularityFlag::Kind kind) {
    switch (kind) {
        case SingularityFlag::Kind::regular: return "regular";
        case SingularityFlag::Kind::grazing: return "grazing";
        case SingularityFlag::Kind::near_grazing: return "near_grazing";
    }
    return "?";
}

Vec2 outgoing_direction(const BoundaryPoint& bp, double phi) {
    return bp.normal * std::cos(phi) + bp.tangent * std::sin(phi);
}

double reflect_angle(const BoundaryPoint& bp, Vec2 d) {
    const Vec2 v = d - bp.normal * (2.0 * dot(d, bp.normal));
    return std::atan2(dot(v, bp.tangent), dot(v, bp.normal));
}

Bounce next_collision(const Table& table, const CollisionCoord& c, double tol_graze) {
    if (std::abs(c.phi) > 0.5 * kPi + 1e-12)
        throw DomainError("collision angle outside [-pi/2, pi/2]");
    const LiftedScatterer from = lift_scatterer(table, c.label);
    const BoundaryPoint bp = from.at(c.s);
    const Vec2 d = outgoing_direction(bp, c.phi);

    const double bound = table.finite_horizon() ? table.tau_max() : 8.0;
    std::optional<RayHit> hit;
    for (double mt = std::min(0.5, bound);; mt *= 2.0) {
        hit = cast_ray(table, bp.point, d, mt, &c.label);
        if (hit || mt >= 4.0 * bound) break;
    }
    if (!hit)
        throw HorizonViolation("no collision within " + format_double(4.0 * bound) + " of " +
                               to_string(c.label) + " s=" + format_double(c.s));

    const LiftedScatterer to = lift_scatterer(table, hit->label);
    const BoundaryPoint np = to.at(hit->s);
    Bounce out;
    out.next.label = hit->label;
    out.next.s = hit->s;
    out.next.phi = reflect_angle(np, d);
    out.segment = {bp.point, d, hit->t, hit->label.i - c.label.i, hit->label.j - c.label.j};
    const double margin = std::min(std::abs(std::cos(out.next.phi)), std::abs(dot(d, np.normal)));
    out.flag.margin = margin;
    const double depart = std::abs(std::cos(c.phi));
    if (margin < tol_graze || depart < tol_graze)
        out.flag.kind = SingularityFlag::Kind::grazing;
    else if (margin < kNearGrazing)
        out.flag.kind = SingularityFlag::Kind::near_grazing;
    return out;
}

MapOrbit billiard_map(const Table& table, const CollisionCoord& c, int n, double tol_graze) {
    MapOrbit orbit;
    const bool backward = n < 0;
    CollisionCoord cur = backward ? time_reverse(c) : c;
    const int steps = std::abs(n);
    for (int k = 0; k < steps; ++k) {
        const Bounce b = next_collision(table, cur, tol_graze);
        cur = b.next;
        CollisionCoord rec = backward ? time_reverse(cur) : cur;
        orbit.points.push_back(rec);
        orbit.segments.push_back(b.segment);
        orbit.flags.push_back(b.flag);
        if (b.flag.kind == SingularityFlag::Kind::grazing) {
            orbit.failure_index = k;
            break;
        }
    }
    return orbit;
}

JacobiPoint to_jacobi(double x, double y, double omega) {
    const double c = std::cos(omega), s = std::sin(omega);
    return {x * c + y * s, x * s - y * c, omega};
}

void from_jacobi(const JacobiPoint& j, double& x, double& y, double& omega) {
    const double c = std::cos(j.omega), s = std::sin(j.omega);
    x = j.eta * c + j.xi * s;
    y = j.eta * s - j.xi * c;
    omega = j.omega;
}

double crofton_inner_integral() { return 1.0; }

CroftonEstimate crofton_check(double L, std::size_t n, std::uint64_t seed) {
    if (L < 0.0) throw DomainError("segment length must be non-negative");
    if (n < 10000) throw InsufficientSamples("at least 1e4 samples are required");
    CroftonEstimate est;
    est.seed = seed;
    est.samples = n;
    if (L == 0.0) return est;
    // unoriented lines {x : <x, (cos θ, sin θ)> = p}, p in [-L/2, L/2], θ in [0, π)
    const double R = 0.5 * L;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> up(-R, R), ut(0.0, kPi);
    std::size_t hits = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double p = up(rng), th = ut(rng);
        if (std::abs(p) <= R * std::abs(std::cos(th))) ++hits;
    }
    const double box = 2.0 * R * kPi;
    const double frac = static_cast<double>(hits) / static_cast<double>(n);
    // Liouville density ½ sin θ dθ dt equals half the line measure dp dθ
    est.value = 0.5 * box * frac;
    est.sigma = 0.5 * box * std::sqrt(frac * (1.0 - frac) / static_cast<double>(n));
    return est;
}

Vec2 FlowPath::position(double t) const {
    size_t k = 0;
    while (k + 1 < times.size() && times[k + 1] <= t) ++k;
    return points[k] + velocities[k] * (t - times[k]);
}

FlowPath billiard_flow(const Table& table, Vec2 p, Vec2 v, double T) {
    FlowPath path;
    path.horizon = T;
    path.times.push_back(0.0);
    path.points.push_back(p);
    path.velocities.push_back(v);
    path.cos_angles.push_back(1.0);
    path.labels.push_back({0, 0, -1});
    double t = 0.0;
    const LiftedLabel* exclude = nullptr;
    LiftedLabel last{};
    for (int guard = 0; guard < 100000; ++guard) {
        const double bound = table.finite_horizon() ? 4.0 * table.tau_max() : 8.0;
        auto hit = cast_ray(table, p, v, bound, exclude);
        if (!hit) throw HorizonViolation("free flight exceeds the horizon bound");
        if (t + hit->t >= T) break;
        t += hit->t;
        const BoundaryPoint bp = lift_scatterer(table, hit->label).at(hit->s);
        const double cn = dot(v, bp.normal);
        v = v - bp.normal * (2.0 * cn);
        p = bp.point;
        path.times.push_back(t);
        path.points.push_back(p);
        path.velocities.push_back(v);
        path.cos_angles.push_back(std::abs(cn));
        path.labels.push_back(hit->label);
        last = hit->label;
        exclude = &last;
    }
    return path;
}

JacobianReport jacobian_check(const Table& table, std::size_t n_samples, std::uint64_t seed,
                              int workers, double min_cos) {
    const std::size_t chunk = 4096;
    const std::size_t nchunks = (n_samples + chunk - 1) / chunk;
    std::vector<JacobianReport> parts(nchunks);
    const double h = 1e-6;
    parallel_for(nchunks, workers, [&](std::size_t ci) {
        std::seed_seq seq{seed, static_cast<std::uint64_t>(ci)};
        std::mt19937_64 rng(seq);
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        JacobianReport& rep = parts[ci];
        const std::size_t n = std::min(chunk, n_samples - ci * chunk);
        std::size_t got = 0;
        while (got < n) {
            ++rep.attempted;
            const int l = std::min(table.size() - 1, static_cast<int>(u01(rng) * table.size()));
            const double s = u01(rng) * table.scatterer(l).perimeter();
            const double phi = (u01(rng) - 0.5) * kPi;
            if (std::abs(std::cos(phi)) < min_cos || std::abs(phi) > 0.5 * kPi - 2 * h) continue;
            const CollisionCoord c{{0, 0, l}, s, phi};
            Bounce b0, bs[4];
            try {
                b0 = next_collision(table, c);
                const CollisionCoord probes[4] = {{c.label, s + h, phi}, {c.label, s - h, phi},
                                                  {c.label, s, phi + h}, {c.label, s, phi - h}};
                for (int k = 0; k < 4; ++k) bs[k] = next_collision(table, probes[k]);
            } catch (const Error&) {
                continue;
            }
            if (std::abs(std::cos(b0.next.phi)) < min_cos) continue;
            bool same = true;
            for (const auto& b : bs) same = same && b.next.label == b0.next.label;
            if (!same) continue;
            const double per = table.scatterer(b0.next.label.l).perimeter();
            auto ds = [&](double a, double bb) {
                double d = a - bb;
                d -= per * std::round(d / per);
                return d;
            };
            const double j11 = ds(bs[0].next.s, bs[1].next.s) / (2 * h);
            const double j21 = (bs[0].next.phi - bs[1].next.phi) / (2 * h);
            const double j12 = ds(bs[2].next.s, bs[3].next.s) / (2 * h);
            const double j22 = (bs[2].next.phi - bs[3].next.phi) / (2 * h);
            const double det = j11 * j22 - j12 * j21;
            const double err = std::abs(std::abs(det) * std::cos(b0.next.phi) / std::cos(phi) - 1.0);
            rep.mean_abs_error += err;
            rep.max_abs_error = std::max(rep.max_abs_error, err);
            ++rep.accepted;
            ++got;
        }
    });
    JacobianReport total;
    for (const auto& p : parts) {
        total.mean_abs_error += p.mean_abs_error;
        total.max_abs_error = std::max(total.max_abs_error, p.max_abs_error);
        total.accepted += p.accepted;
        total.attempted += p.attempted;
    }
    if (total.accepted) total.mean_abs_error /= static_cast<double>(total.accepted);
    return total;
}

void write_trajectory(std::ostream& out, const CollisionCoord& start, const MapOrbit& orbit) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%6d %6d %4d %25.17e %25.17e %25.17e %s\n", start.label.i,
                  start.label.j, start.label.l, start.s, start.phi, 0.0, "start");
    out << buf;
    for (size_t k = 0; k < orbit.points.size(); ++k) {
        const auto& c = orbit.points[k];
        std::snprintf(buf, sizeof buf, "%6d %6d %4d %25.17e %25.17e %25.17e %s\n", c.label.i,
                      c.label.j, c.label.l, c.s, c.phi, orbit.segments[k].tau,
                      to_string(orbit.flags[k].kind));
        out << buf;
    }
}

}  // namespace sinai
