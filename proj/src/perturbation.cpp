#include "sinai/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <set>

#include <json.hpp>

namespace sinai {

namespace {

double wrapped_gap(double per, double a, double b) {
    const double d = std::abs(std::remainder(a - b, per));
    return d;
}

double sign_of(BumpField::Mode m) { return m == BumpField::Mode::retract ? -1.0 : 1.0; }

SupportBump::Shape shape_of(BumpField::Mode m) {
    return m == BumpField::Mode::tilt ? SupportBump::Shape::odd : SupportBump::Shape::even;
}

}  // namespace

// ------------------------------------------------------------- bump field

BumpField BumpField::make(const Table& table, int scatterer, double s0, double w, Mode mode) {
    if (scatterer < 0 || scatterer >= table.size()) throw DomainError("scatterer index out of range");
    const Scatterer& sc = table.scatterer(scatterer);
    if (!(w > 0.0 && w < 0.5 * sc.perimeter())) throw DomainError("bump half-width must lie in (0, perimeter/2)");
    BumpField f;
    f.scatterer = scatterer;
    f.s0 = sc.wrap(s0);
    f.w = w;
    f.mode = mode;
    f.theta0 = sc.arclength_to_angle(f.s0);
    const double lo = sc.arclength_to_angle(f.s0 - w);
    const double hi = sc.arclength_to_angle(f.s0 + w);
    auto fwd = [](double a, double b) {
        double d = std::fmod(b - a, kTwoPi);
        if (d < 0) d += kTwoPi;
        return d;
    };
    f.half_width = std::min(fwd(lo, f.theta0), fwd(f.theta0, hi)) * (1.0 - 1e-9);
    return f;
}

SupportBump BumpField::term(double eps) const {
    SupportBump b;
    b.shape = shape_of(mode);
    b.theta0 = theta0;
    b.half_width = half_width;
    b.amplitude = sign_of(mode) * eps;
    return b;
}

SupportDerivs BumpField::profile(double theta) const { return term(1.0).eval(theta); }

double BumpField::lambda(const Table& table, double s, double* dlds) const {
    const BoundaryPoint bp = table.scatterer(scatterer).at(s);
    const SupportDerivs p = profile(bp.theta);
    if (dlds) *dlds = p.h1 * bp.K;
    return p.h;
}

bool BumpField::covers(double theta) const {
    return std::abs(std::remainder(theta - theta0, kTwoPi)) < half_width;
}

const char* to_string(BumpField::Mode m) {
    switch (m) {
        case BumpField::Mode::move: return "move";
        case BumpField::Mode::tilt: return "tilt";
        case BumpField::Mode::retract: return "retract";
    }
    return "?";
}

BumpField::Mode parse_mode(const std::string& s) {
    if (s == "move") return BumpField::Mode::move;
    if (s == "tilt") return BumpField::Mode::tilt;
    if (s == "retract") return BumpField::Mode::retract;
    throw DomainError("unknown bump mode '" + s + "'");
}

Table apply_perturbation(const Table& table, const BumpField& lambda, double eps) {
    if (eps == 0.0) return table;
    if (lambda.scatterer < 0 || lambda.scatterer >= table.size()) throw DomainError("scatterer index out of range");
    std::vector<SupportCurve> curves = table.curves();
    auto& c = curves[static_cast<size_t>(lambda.scatterer)];
    c = c.with_bump(lambda.term(eps));
    const ConvexityScan scan = scan_convexity(c);
    if (!(scan.min_radius > 0.0))
        throw PerturbationTooLarge("curve loses strict convexity (h + h'' = " + format_double(scan.min_radius) + ")");
    TableOptions opts;
    opts.require_finite_horizon = true;
    // a normal displacement of size |ε| changes free flights by at most 2|ε|
    opts.tau_max_hint = table.tau_max() + 2.0 * std::abs(eps);
    try {
        return Table::build(std::move(curves), opts);
    } catch (const InvalidTable& e) {
        throw PerturbationTooLarge(e.what());
    } catch (const ConvexityError& e) {
        throw PerturbationTooLarge(e.what());
    }
}

// ------------------------------------------------------------- P^λ

PLambda p_lambda(const Table& table, const OrbitWord& w, const std::vector<double>& s, const BumpField& lambda) {
    const int q = w.q();
    PLambda out;
    out.grad = Eigen::VectorXd::Zero(q);
    const LengthEval le = length_functional(table, w, s);
    const Eigen::MatrixXd H = le.hess.dense();
    for (int i = 0; i < q; ++i) {
        const auto iu = static_cast<size_t>(i);
        if (w.rho[iu] != lambda.scatterer) continue;
        const BoundaryPoint bp = table.scatterer(w.rho[iu]).at(s[iu]);
        if (!lambda.covers(bp.theta)) continue;
        const SupportDerivs pr = lambda.profile(bp.theta);
        const double lam = pr.h, mu = pr.h1;
        const double dlam = pr.h1 * bp.K, dmu = pr.h2 * bp.K;
        const int ip = (i + q - 1) % q;
        const TauPair& in = le.pairs[static_cast<size_t>(ip)];
        const TauPair& out_p = le.pairs[iu];
        const int inext = (i + 1) % q;
        const double cin = in.cos2, sin_in = in.sin2;
        const double cout = out_p.cos1, sout = out_p.sin1;
        const double g = sin_in - sout;  // = ∂L/∂s_i
        out.value += lam * (cin + cout) - mu * g;

        // ∂ cos_in: sin_in = d2 of the incoming chord (s_{i−1}, s_i)
        const double kin = -sin_in / cin;
        const double kout = -sout / cout;
        // d/ds_{i−1}, d/ds_i of cos_in
        out.grad(ip) += lam * kin * in.d12;
        out.grad(i) += lam * kin * in.d22;
        // sin_out = −d1 of the outgoing chord (s_i, s_{i+1})
        out.grad(i) += lam * kout * (-out_p.d11);
        out.grad(inext) += lam * kout * (-out_p.d12);
        // through λ and λ' themselves
        out.grad(i) += dlam * (cin + cout) - dmu * g;
        // − μ ∂g/∂s_j with ∂g = row i of the Hessian
        for (int j = 0; j < q; ++j) out.grad(j) -= mu * H(i, j);
    }
    return out;
}

PLambda p_lambda(const Table& table, const GeneralizedOrbit& orbit, const BumpField& lambda) {
    return p_lambda(table, orbit.word, orbit.s, lambda);
}

std::vector<double> carry_parameters(const Table& from, const Table& to, const OrbitWord& w,
                                     const std::vector<double>& s) {
    std::vector<double> out;
    for (int k = 0; k < w.q(); ++k) {
        const int l = w.rho[static_cast<size_t>(k)];
        const double th = from.scatterer(l).at(s[static_cast<size_t>(k)]).theta;
        out.push_back(to.scatterer(l).angle_to_arclength(th));
    }
    return out;
}

namespace {

std::vector<double> solve_on(const Table& table, const OrbitWord& w, const std::vector<double>& start, double* L) {
    NewtonResult r = newton_trust_region(table, w, start);
    if (r.converged) {
        *L = r.L;
        return r.s;
    }
    const GeneralizedOrbit o = find_generalized_orbit(table, w);
    *L = o.length;
    return o.s;
}

}  // namespace

ResponseReport first_order_response(const Table& table, const GeneralizedOrbit& orbit, const BumpField& lambda,
                                    const std::vector<double>& eps_list) {
    const OrbitWord& w = orbit.word;
    const int q = w.q();
    ResponseReport rep;
    rep.word = to_string(w);
    const LengthEval le = length_functional(table, w, orbit.s);
    const Eigen::MatrixXd H = le.hess.dense();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
    if (!(es.eigenvalues()(0) > kMinHessEig)) throw HessianSingular("Hessian is not positive definite at " + rep.word);
    const PLambda P = p_lambda(table, orbit, lambda);
    rep.P = P.value;
    rep.DP = P.grad;
    rep.first_order = -P.value;
    const Eigen::VectorXd psi = solve_cyclic_tridiagonal(le.hess, P.grad);
    rep.residual = (H * psi - P.grad).norm();
    rep.tilt_gain = psi.dot(H * psi);
    for (int k = 0; k < q; ++k) rep.psi.push_back(psi(k));

    for (double eps : eps_list) {
        const Table pert = apply_perturbation(table, lambda, eps);
        double Le = 0.0;
        const std::vector<double> se = solve_on(pert, w, carry_parameters(table, pert, w, orbit.s), &Le);
        const std::vector<double> back = carry_parameters(pert, table, w, se);
        ResponseCheck c;
        c.eps = eps;
        for (int k = 0; k < q; ++k) {
            const auto ku = static_cast<size_t>(k);
            const double per = table.scatterer(w.rho[ku]).perimeter();
            const double sh = std::remainder(back[ku] - orbit.s[ku], per) / eps;
            c.shift.push_back(sh);
            c.shift_error = std::max(c.shift_error, std::abs(sh - psi(k)));
        }
        c.dL = (Le - orbit.length) / eps;
        c.length_error = std::abs(c.dL + P.value);
        rep.checks.push_back(c);
    }
    for (size_t k = 1; k < rep.checks.size(); ++k) {
        rep.shift_ratios.push_back(rep.checks[k - 1].shift_error / rep.checks[k].shift_error);
        rep.length_ratios.push_back(rep.checks[k - 1].length_error / rep.checks[k].length_error);
    }
    return rep;
}

double predicted_length_change(const Table& table, const Table& perturbed, const GeneralizedOrbit& orbit,
                               const BumpField& lambda, double eps) {
    const OrbitWord& w = orbit.word;
    const LengthEval le = length_functional(table, w, orbit.s);
    const PLambda P = p_lambda(table, orbit, lambda);
    const Eigen::VectorXd psi = solve_cyclic_tridiagonal(le.hess, P.grad);
    const double gain = psi.dot(le.hess.apply(psi));
    const double Lp = length_functional(perturbed, w, carry_parameters(table, perturbed, w, orbit.s)).L;
    return (Lp - orbit.length) - 0.5 * eps * eps * gain;
}

// ------------------------------------------------------------- sites

bool affected_by(const Table& table, const GeneralizedOrbit& orbit, const BumpField& lambda, double margin) {
    const OrbitWord& w = orbit.word;
    const int q = w.q();
    const int l = lambda.scatterer;
    const Scatterer& sc = table.scatterer(l);
    BumpField wide = lambda;
    wide.half_width = std::min(kPi, lambda.half_width + margin / std::max(1e-12, sc.inner_radius()));
    for (int k = 0; k < q; ++k) {
        const auto ku = static_cast<size_t>(k);
        if (w.rho[ku] == l && wide.covers(table.scatterer(l).at(orbit.s[ku]).theta)) return true;
    }
    const auto labels = lifted_labels(w);
    const LengthEval le = length_functional(table, w, orbit.s);
    for (int k = 0; k < q; ++k) {
        const TauPair& t = le.pairs[static_cast<size_t>(k)];
        const LiftedLabel& la = labels[static_cast<size_t>(k)];
        const LiftedLabel& lb = labels[static_cast<size_t>(k + 1)];
        const Vec2 p0 = t.p1 + la.offset(), p1 = t.p2 + la.offset();
        const double reach = sc.outer_radius() + margin;
        const Vec2 c = sc.center();
        for (int i = static_cast<int>(std::floor(std::min(p0.x, p1.x) - c.x - reach));
             i <= static_cast<int>(std::ceil(std::max(p0.x, p1.x) - c.x + reach)); ++i)
            for (int j = static_cast<int>(std::floor(std::min(p0.y, p1.y) - c.y - reach));
                 j <= static_cast<int>(std::ceil(std::max(p0.y, p1.y) - c.y + reach)); ++j) {
                const LiftedLabel lab{i, j, l};
                if (lab == la || lab == lb) continue;
                const Vec2 cen = c + lab.offset();
                const Vec2 d = p1 - p0;
                const double tt = std::clamp(dot(cen - p0, d) / dot(d, d), 0.0, 1.0);
                if (norm(cen - (p0 + d * tt)) <= reach) return true;
            }
    }
    return false;
}

GrazingSite grazing_site(const Table& table, const GeneralizedOrbit& orbit) {
    const OrbitWord& w = orbit.word;
    const int q = w.q();
    const LengthEval le = length_functional(table, w, orbit.s);
    const auto labels = lifted_labels(w);
    GrazingSite best;
    best.margin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < q; ++k) {
        const auto ku = static_cast<size_t>(k);
        const TauPair& t = le.pairs[ku];
        if (std::abs(t.cos1) < best.margin) best = {w.rho[ku], orbit.s[ku], false, std::abs(t.cos1)};
        const int kn = (k + 1) % q;
        if (std::abs(t.cos2) < best.margin)
            best = {w.rho[static_cast<size_t>(kn)], orbit.s[static_cast<size_t>(kn)], false, std::abs(t.cos2)};
        const LiftedLabel& la = labels[ku];
        const LiftedLabel& lb = labels[ku + 1];
        const Vec2 p0 = t.p1 + la.offset(), p1 = t.p2 + la.offset();
        for (int l = 0; l < table.size(); ++l) {
            const Scatterer& sc = table.scatterer(l);
            const double reach = sc.outer_radius() + 1e-6;
            const Vec2 c = sc.center();
            for (int i = static_cast<int>(std::floor(std::min(p0.x, p1.x) - c.x - reach));
                 i <= static_cast<int>(std::ceil(std::max(p0.x, p1.x) - c.x + reach)); ++i)
                for (int j = static_cast<int>(std::floor(std::min(p0.y, p1.y) - c.y - reach));
                     j <= static_cast<int>(std::ceil(std::max(p0.y, p1.y) - c.y + reach)); ++j) {
                    const LiftedLabel lab{i, j, l};
                    if (lab == la || lab == lb) continue;
                    const Vec2 off = lab.offset();
                    const double clr = segment_clearance(sc, off, p0, p1);
                    if (std::abs(clr) >= best.margin) continue;
                    // contact: the normal of the chord line facing the obstacle
                    const Vec2 n = perp(t.u);
                    const double ta = std::atan2(n.y, n.x), tb = ta + kPi;
                    auto res = [&](double th) {
                        return std::abs(sc.curve().h(th) + dot(off, unit(th)) - dot(p0, unit(th)));
                    };
                    const double th = res(ta) < res(tb) ? ta : tb;
                    best = {l, sc.angle_to_arclength(th), true, std::abs(clr)};
                }
        }
    }
    return best;
}

// ------------------------------------------------------------- genericity

namespace {

SpectrumOptions spectrum_options(const GenericityOptions& o) {
    SpectrumOptions so;
    so.q_max = o.q_max;
    so.T_max = o.T_max;
    so.workers = o.workers;
    return so;
}

struct Refreshed {
    SpectrumTable spec;
    std::vector<std::string> affected;
};

Refreshed refresh_after(const Table& before, const Table& after, const SpectrumTable& prev, const BumpField& f,
                        const GenericityOptions& o) {
    Refreshed r;
    auto pred = [&](const SpectrumEntry& e) { return affected_by(before, e.orbit, f, 0.02); };
    r.spec = refresh_spectrum(after, prev, spectrum_options(o), pred);
    for (auto& e : r.spec.entries) {
        const SpectrumEntry* old = prev.find(e.key);
        if (old && !pred(*old)) {
            e.orbit.s = carry_parameters(before, after, e.word, old->orbit.s);
        } else {
            r.affected.push_back(e.key);
        }
    }
    return r;
}

std::set<std::string> keys_of(const SpectrumTable& spec, OrbitClass c) {
    std::set<std::string> out;
    for (const auto* e : spec.of_class(c)) out.insert(e->key);
    return out;
}

}  // namespace

GenericityResult degraze(const Table& table, const GenericityOptions& opts) {
    GenericityResult res{table, enumerate_spectrum(table, spectrum_options(opts)), {}, {}, false};
    std::set<std::string> given_up;
    for (int step = 0;; ++step) {
        const SpectrumEntry* target = nullptr;
        for (const auto* e : res.spectrum.of_class(OrbitClass::grazing))
            if (!given_up.count(e->key)) {
                target = e;
                break;
            }
        if (!target) break;
        if (step >= opts.max_steps) {
            res.partial = true;
            break;
        }
        const GrazingSite site = grazing_site(res.table, target->orbit);
        const Scatterer& sc = res.table.scatterer(site.scatterer);
        // keep the orbit's own bounces on that scatterer outside the support
        double w = 0.05 * sc.perimeter();
        for (int k = 0; k < target->word.q(); ++k) {
            if (target->word.rho[static_cast<size_t>(k)] != site.scatterer) continue;
            const double d = wrapped_gap(sc.perimeter(), target->orbit.s[static_cast<size_t>(k)], site.s);
            if (site.chord || d > 1e-12) w = std::min(w, 0.5 * d);
        }
        const std::set<std::string> grazing_before = keys_of(res.spectrum, OrbitClass::grazing);
        const std::string key = target->key;
        double eps = 1e-3 * w;
        bool accepted = false;
        for (int attempt = 0; attempt < opts.max_retries && w > 1e-9; ++attempt, eps *= 0.5) {
            const BumpField f = BumpField::make(res.table, site.scatterer, site.s, w, BumpField::Mode::retract);
            Table pert;
            try {
                pert = apply_perturbation(res.table, f, eps);
            } catch (const PerturbationTooLarge&) {
                continue;
            }
            Refreshed r = refresh_after(res.table, pert, res.spectrum, f, opts);
            bool new_graze = false;
            for (const auto& k : keys_of(r.spec, OrbitClass::grazing))
                if (!grazing_before.count(k)) new_graze = true;
            if (new_graze) continue;
            const SpectrumEntry* after = r.spec.find(key);
            if (after && after->orbit.cls == OrbitClass::grazing) continue;
            PerturbationStep st;
            st.field = f;
            st.eps = eps;
            st.reason = std::string(site.chord ? "chord tangency" : "tangential bounce") + " of " + key;
            st.affected = r.affected;
            st.outcome = after ? to_string(after->orbit.cls) : "removed";
            res.log.push_back(st);
            res.table = std::move(pert);
            res.spectrum = std::move(r.spec);
            accepted = true;
            break;
        }
        if (!accepted) given_up.insert(key);
    }
    for (const auto* e : res.spectrum.of_class(OrbitClass::grazing)) res.remaining.push_back(e->key);
    if (!res.remaining.empty()) res.partial = true;
    return res;
}

GenericityResult separate_lengths(const Table& table, const GenericityOptions& opts) {
    GenericityResult res{table, enumerate_spectrum(table, spectrum_options(opts)), {}, {}, false};
    std::set<std::pair<std::string, std::string>> given_up;
    for (int step = 0;; ++step) {
        const auto cols = check_simple_spectrum(res.spectrum, opts.gap);
        const Collision* col = nullptr;
        for (const auto& c : cols)
            if (!given_up.count({c.a, c.b})) {
                col = &c;
                break;
            }
        if (!col) break;
        if (step >= opts.max_steps) {
            res.partial = true;
            break;
        }
        const SpectrumEntry* A = res.spectrum.find(col->a);
        const SpectrumEntry* B = res.spectrum.find(col->b);
        // bounce of one orbit farthest from every bounce of the other on the same scatterer
        struct Site {
            int l = -1;
            double s = 0.0, room = 0.0;
        } site;
        for (const auto& [X, Y] : {std::pair{A, B}, std::pair{B, A}}) {
            for (int i = 0; i < X->word.q(); ++i) {
                const int l = X->word.rho[static_cast<size_t>(i)];
                const double per = res.table.scatterer(l).perimeter();
                const double si = X->orbit.s[static_cast<size_t>(i)];
                double room = 0.5 * per;
                for (const SpectrumEntry* Z : {X, Y})
                    for (int j = 0; j < Z->word.q(); ++j) {
                        if (Z == X && j == i) continue;
                        if (Z->word.rho[static_cast<size_t>(j)] != l) continue;
                        room = std::min(room, wrapped_gap(per, si, Z->orbit.s[static_cast<size_t>(j)]));
                    }
                if (room > site.room) site = {l, si, room};
            }
        }
        const std::pair<std::string, std::string> pair_key{col->a, col->b};
        if (site.l < 0 || site.room < 1e-6) {
            given_up.insert(pair_key);
            continue;
        }
        const double per = res.table.scatterer(site.l).perimeter();
        const double w = std::min(0.05 * per, 0.5 * site.room);
        const std::set<std::string> grazing_before = keys_of(res.spectrum, OrbitClass::grazing);
        bool accepted = false;
        double eps = opts.eps_max;
        for (int attempt = 0; attempt < opts.max_retries; ++attempt, eps *= 0.5) {
            const BumpField f = BumpField::make(res.table, site.l, site.s, w, BumpField::Mode::tilt);
            Table pert;
            try {
                pert = apply_perturbation(res.table, f, eps);
            } catch (const PerturbationTooLarge&) {
                continue;
            }
            Refreshed r = refresh_after(res.table, pert, res.spectrum, f, opts);
            bool new_graze = false;
            for (const auto& k : keys_of(r.spec, OrbitClass::grazing))
                if (!grazing_before.count(k)) new_graze = true;
            if (new_graze) continue;
            const SpectrumEntry* a2 = r.spec.find(col->a);
            const SpectrumEntry* b2 = r.spec.find(col->b);
            const double gap = (a2 && b2) ? std::abs(a2->orbit.length - b2->orbit.length) : std::numeric_limits<double>::infinity();
            PerturbationStep st;
            st.field = f;
            st.eps = eps;
            st.reason = "length collision " + col->a + " / " + col->b;
            st.affected = r.affected;
            st.outcome = "gap " + format_double(gap);
            res.log.push_back(st);
            res.table = std::move(pert);
            res.spectrum = std::move(r.spec);
            accepted = true;
            break;
        }
        if (!accepted) given_up.insert(pair_key);
    }
    for (const auto& c : check_simple_spectrum(res.spectrum, opts.gap)) res.remaining.push_back(c.a + " / " + c.b);
    if (!res.remaining.empty()) res.partial = true;
    return res;
}

Table replay(const Table& table, const std::vector<PerturbationStep>& log) {
    Table t = table;
    for (const auto& st : log) t = apply_perturbation(t, st.field, st.eps);
    return t;
}

void write_log(std::ostream& out, const std::vector<PerturbationStep>& log) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& st : log) {
        nlohmann::ordered_json j;
        j["mode"] = to_string(st.field.mode);
        j["scatterer"] = st.field.scatterer;
        j["s0"] = format_double(st.field.s0);
        j["w"] = format_double(st.field.w);
        j["theta0"] = format_double(st.field.theta0);
        j["half_width"] = format_double(st.field.half_width);
        j["eps"] = format_double(st.eps);
        j["reason"] = st.reason;
        j["outcome"] = st.outcome;
        j["affected"] = st.affected;
        arr.push_back(j);
    }
    out << arr.dump(2) << '\n';
}

std::vector<PerturbationStep> read_log(std::istream& in) {
    std::vector<PerturbationStep> log;
    nlohmann::json arr;
    try {
        in >> arr;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed perturbation log: ") + e.what(), 0);
    }
    if (!arr.is_array()) throw ParseError("perturbation log must be a JSON array", 0);
    auto num = [](const nlohmann::json& j, const char* k) {
        const auto& v = j.at(k);
        return v.is_string() ? std::stod(v.get<std::string>()) : v.get<double>();
    };
    try {
        for (const auto& j : arr) {
            PerturbationStep st;
            st.field.mode = parse_mode(j.at("mode").get<std::string>());
            st.field.scatterer = j.at("scatterer").get<int>();
            st.field.s0 = num(j, "s0");
            st.field.w = num(j, "w");
            st.field.theta0 = num(j, "theta0");
            st.field.half_width = num(j, "half_width");
            st.eps = num(j, "eps");
            st.reason = j.value("reason", "");
            st.outcome = j.value("outcome", "");
            if (j.contains("affected")) st.affected = j.at("affected").get<std::vector<std::string>>();
            log.push_back(st);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed perturbation log entry: ") + e.what(), 0);
    } catch (const std::invalid_argument&) {
        throw ParseError("malformed number in perturbation log", 0);
    }
    return log;
}

}  // namespace sinai
