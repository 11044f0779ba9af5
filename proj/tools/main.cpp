#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sinai/compare.hpp"
#include "sinai/dynamics.hpp"
#include "sinai/enriched.hpp"
#include "sinai/errors.hpp"
#include "sinai/geometry.hpp"
#include "sinai/kourganoff.hpp"
#include "sinai/perturbation.hpp"
#include "sinai/spectrum.hpp"

using namespace sinai;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kDiffers = 1;

struct RunConfig {
    std::vector<std::string> tables;
    std::string command;
    int q_max = 4;
    double T_max = 1.2;
    double tol_crit = 1e-10;
    double tol_graze = kTolGraze;
    double tol_sub = 1e-8;
    int lattice_bound = 6;
    std::vector<double> eps_list{0.2, 0.1, 0.05, 0.025};
    std::uint64_t seed = 1;
    int workers = 0;
    std::string output;

    // command specific
    std::string word;
    int boundary = -1;
    int scatterer = 0;
    double s0 = 0.0, w = 0.1;
    std::string mode = "tilt";
    std::vector<double> respond_eps{1e-3, 5e-4, 2.5e-4};
    std::string log_path, table_out;
    double eps_max = 1e-3;
    double gap = 1e-9;
    double tol_compare = 1e-9;
    bool reports = false;
    std::vector<double> point{0.75, 0.3}, direction{0.3, 1.0};
    double T = 1.0;
    double clamp = 0.05;
    double length = 0.5;
    double samples = 1e6;
};

std::string num(double v) { return format_double(v); }

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Resolved options of the app and the chosen subcommands, minus the ones
// that cannot change results.
void collect_options(const CLI::App* app, std::string& out) {
    for (const CLI::Option* opt : app->get_options()) {
        const std::string name = opt->get_name();
        if (name == "--help" || name == "--workers" || name == "--output" || name == "--config" ||
            name == "--version")
            continue;
        std::string value;
        if (opt->count() > 0) {
            for (const auto& r : opt->results()) value += r + ",";
        } else {
            value = opt->get_default_str();
        }
        out += app->get_name() + ":" + name + "=" + value + "\n";
    }
    for (const CLI::App* sub : app->get_subcommands()) collect_options(sub, out);
}

class Report {
public:
    Report(const RunConfig& cfg, const std::string& hash) {
        if (!cfg.output.empty()) {
            file_ = std::make_unique<std::ofstream>(cfg.output);
            if (!*file_) throw InvalidTable("cannot open output " + cfg.output);
        }
        out() << "# sinai " << kVersion << "\n# command " << cfg.command << "\n# config_hash " << hash
              << "\n# seed " << cfg.seed << "\n";
    }
    std::ostream& out() { return file_ ? *file_ : std::cout; }
    void comment(const std::string& key, const std::string& value) { out() << "# " << key << " " << value << "\n"; }
    void row(const std::vector<std::string>& cells) {
        for (size_t k = 0; k < cells.size(); ++k) out() << (k ? "\t" : "") << cells[k];
        out() << "\n";
    }

private:
    std::unique_ptr<std::ofstream> file_;
};

Table load_table(const RunConfig& cfg, const std::string& path) {
    TableOptions topts;
    topts.lattice_bound = cfg.lattice_bound;
    return Table::build(read_table_file(path).curves, topts);
}

SpectrumOptions spectrum_options(const RunConfig& cfg) {
    SpectrumOptions o;
    o.q_max = cfg.q_max;
    o.T_max = cfg.T_max;
    o.solver.tol_crit = cfg.tol_crit;
    o.solver.tol_graze = cfg.tol_graze;
    o.workers = cfg.workers;
    return o;
}

EnrichedOptions enriched_options(const RunConfig& cfg) {
    EnrichedOptions o;
    o.q_max = cfg.q_max;
    o.T_max = cfg.T_max;
    o.workers = cfg.workers;
    o.el.tol_sub = cfg.tol_sub;
    return o;
}

std::string transitions(const EnrichedEntry& e) {
    if (e.kind == EnrichedEntry::Kind::boundary) return "-";
    std::string s;
    for (auto t : e.cycle.transitions) {
        switch (t) {
            case BilliardCycle::Transition::specular: s += 'S'; break;
            case BilliardCycle::Transition::tangential: s += 'T'; break;
            case BilliardCycle::Transition::constrained: s += 'C'; break;
        }
    }
    return s;
}

double arc_total(const EnrichedEntry& e) {
    if (e.kind == EnrichedEntry::Kind::boundary) return e.EL;
    double a = 0.0;
    for (double x : e.cycle.arcs) a += x;
    return a;
}

int cmd_validate(const RunConfig& cfg, Report& rep) {
    const TableFile tf = read_table_file(cfg.tables.at(0));
    bool ok = true;
    rep.row({"check", "subject", "status", "value"});
    std::vector<Scatterer> sc;
    for (size_t l = 0; l < tf.curves.size(); ++l) {
        const ConvexityScan scan = scan_convexity(tf.curves[l]);
        const bool pass = scan.min_radius > 0.0;
        ok = ok && pass;
        rep.row({"convexity", std::to_string(l), pass ? "pass" : "fail", num(scan.min_radius)});
        if (pass) sc.emplace_back(tf.curves[l]);
    }
    if (!ok) return 2;
    double r_out = 0.0;
    for (const auto& s : sc) r_out = std::max(r_out, s.outer_radius());
    const int box = static_cast<int>(std::ceil(2.0 * r_out)) + 1;
    bool disjoint = true;
    for (size_t a = 0; a < sc.size(); ++a) {
        for (size_t b = a; b < sc.size(); ++b) {
            for (int i = -box; i <= box; ++i) {
                for (int j = -box; j <= box; ++j) {
                    if (a == b && (i < 0 || (i == 0 && j <= 0))) continue;
                    const Vec2 off{static_cast<double>(i), static_cast<double>(j)};
                    if (norm(sc[b].center() + off - sc[a].center()) > sc[a].outer_radius() + sc[b].outer_radius() + 0.1)
                        continue;
                    const double g = convex_gap(sc[a], {0, 0}, sc[b], off);
                    if (g < 1e-6) {
                        disjoint = false;
                        rep.row({"disjoint", std::to_string(a) + "," + std::to_string(b) + "@(" + std::to_string(i) +
                                                 "," + std::to_string(j) + ")",
                                 "fail", num(g)});
                    }
                }
            }
        }
    }
    if (!disjoint) return 2;
    rep.row({"disjoint", "all", "pass", "-"});
    const HorizonCertificate hc = check_shadow_cover(sc, cfg.lattice_bound);
    if (hc.status == HorizonCertificate::Status::finite) {
        rep.row({"horizon", "all", "pass", "finite"});
        return 0;
    }
    std::string witness = "-";
    if (hc.witness)
        witness = "(" + std::to_string(hc.witness->p) + "," + std::to_string(hc.witness->q) + ") offsets [" +
                  num(hc.witness->lo) + ", " + num(hc.witness->hi) + "]";
    rep.row({"horizon", "all", "fail", "corridor " + witness});
    return 2;
}

int cmd_horizon(const RunConfig& cfg, Report& rep) {
    const Table t = load_table(cfg, cfg.tables.at(0));
    const HorizonCertificate& hc = t.horizon();
    rep.row({"status", "tau_max_bound", "tau_min", "lattice_bound", "exhaustive", "witness"});
    std::string witness = "-";
    if (hc.witness)
        witness = std::to_string(hc.witness->p) + "," + std::to_string(hc.witness->q) + ":" + num(hc.witness->lo) +
                  ":" + num(hc.witness->hi);
    const bool finite = t.finite_horizon();
    rep.row({finite ? "finite" : "corridor", finite ? num(hc.tau_max_bound) : "inf", num(t.tau_min()),
             std::to_string(hc.lattice_bound), hc.exhaustive ? "yes" : "no", witness});
    return finite ? 0 : 2;
}

void write_spectrum(const SpectrumTable& s, Report& rep) {
    rep.comment("words_examined", std::to_string(s.words_examined));
    rep.row({"word", "q", "length", "class", "hess_min_eig", "grad_residual"});
    for (const auto& e : s.entries)
        rep.row({e.key, std::to_string(e.word.q()), num(e.orbit.length), to_string(e.orbit.cls),
                 num(e.orbit.hess_min_eig), num(e.orbit.grad_norm)});
    for (const auto& f : s.failures) rep.comment("failure", f);
    for (const auto& d : s.degenerate) rep.comment("degenerate", d);
}

int cmd_spectrum(const RunConfig& cfg, Report& rep) {
    const Table t = load_table(cfg, cfg.tables.at(0));
    try {
        const SpectrumTable s = enumerate_spectrum(t, spectrum_options(cfg));
        write_spectrum(s, rep);
        return s.failures.empty() ? 0 : 3;
    } catch (const SpectrumBudgetExceeded& ex) {
        rep.comment("partial", "budget exceeded");
        write_spectrum(ex.partial, rep);
        throw;
    }
}

void write_enriched(const EnrichedTable& e, int scatterers, Report& rep) {
    rep.comment("scatterers", std::to_string(scatterers));
    rep.comment("q_max", std::to_string(e.q_max));
    rep.comment("T_max", num(e.T_max));
    rep.row({"word", "q", "EL", "kind", "arc_total", "transitions", "doubled", "multi_interval"});
    for (const auto& x : e.entries)
        rep.row({x.key, std::to_string(x.q), num(x.EL), to_string(x.kind), num(arc_total(x)), transitions(x),
                 x.doubled_class ? "1" : "0", x.multi_interval ? "1" : "0"});
    rep.comment("infeasible", std::to_string(e.infeasible.size()));
    rep.comment("obstructed", std::to_string(e.obstructed.size()));
    for (const auto& f : e.failures) rep.comment("failure", f);
}

int cmd_enriched(const RunConfig& cfg, Report& rep) {
    const Table t = load_table(cfg, cfg.tables.at(0));
    const EnrichedTable e = enriched_spectrum(t, enriched_options(cfg));
    write_enriched(e, t.size(), rep);
    if (e.partial) throw BudgetExceeded("word enumeration truncated");
    return e.failures.empty() ? 0 : 3;
}

// Reads the rows written by write_enriched.
EnrichedTable read_enriched(const std::string& path, int& scatterers) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path, 0);
    EnrichedTable out;
    scatterers = -1;
    std::string line;
    int n = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ss(line.substr(1));
            std::string key;
            ss >> key;
            if (key == "scatterers") ss >> scatterers;
            continue;
        }
        if (!header) {
            header = true;
            continue;
        }
        std::istringstream ss(line);
        std::string word, q, el, kind;
        if (!std::getline(ss, word, '\t') || !std::getline(ss, q, '\t') || !std::getline(ss, el, '\t') ||
            !std::getline(ss, kind, '\t'))
            throw ParseError("expected word, q, EL and kind columns", n);
        EnrichedEntry e;
        e.key = word;
        try {
            e.q = std::stoi(q);
            e.EL = std::stod(el);
        } catch (const std::exception&) {
            throw ParseError("malformed number", n);
        }
        out.entries.push_back(e);
    }
    if (scatterers < 0) throw ParseError("missing '# scatterers' header in " + path, n);
    return out;
}

int cmd_compare(const RunConfig& cfg, Report& rep) {
    ComparisonReport cr;
    if (cfg.reports) {
        int ka = 0, kb = 0;
        const EnrichedTable ea = read_enriched(cfg.tables.at(0), ka);
        const EnrichedTable eb = read_enriched(cfg.tables.at(1), kb);
        cr = compare_reports(ka, ea, kb, eb);
    } else {
        const Table a = load_table(cfg, cfg.tables.at(0));
        const Table b = load_table(cfg, cfg.tables.at(1));
        if (a.size() != b.size())
            throw IncomparableTables("scatterer counts " + std::to_string(a.size()) + " and " +
                                     std::to_string(b.size()));
        const EnrichedOptions eo = enriched_options(cfg);
        const EnrichedTable ea = enriched_spectrum(a, eo);
        const EnrichedTable eb = enriched_spectrum(b, eo);
        CompareOptions co;
        co.el = eo.el;
        cr = compare_spectra(a, ea, b, eb, co);
    }
    rep.comment("max_deviation", num(cr.max_deviation));
    rep.comment("matched", std::to_string(cr.rows.size()));
    rep.row({"word", "EL_a", "EL_b", "abs_diff"});
    for (const auto& r : cr.rows) rep.row({r.key, num(r.EL_a), num(r.EL_b), num(r.dev)});
    for (const auto& k : cr.unmatched_a) rep.comment("only_a", k);
    for (const auto& k : cr.unmatched_b) rep.comment("only_b", k);
    return cr.agrees(cfg.tol_compare) ? 0 : kDiffers;
}

void write_steps(const std::vector<PerturbationStep>& log, Report& rep) {
    rep.row({"step", "mode", "scatterer", "s0", "w", "eps", "reason", "outcome"});
    for (size_t k = 0; k < log.size(); ++k) {
        const auto& st = log[k];
        rep.row({std::to_string(k), to_string(st.field.mode), std::to_string(st.field.scatterer), num(st.field.s0),
                 num(st.field.w), num(st.eps), st.reason, st.outcome});
    }
}

void save_outputs(const RunConfig& cfg, const Table& t, const std::vector<PerturbationStep>* log) {
    if (!cfg.table_out.empty()) write_table_file(cfg.table_out, t.curves());
    if (log && !cfg.log_path.empty()) {
        std::ofstream out(cfg.log_path);
        if (!out) throw InvalidTable("cannot open log " + cfg.log_path);
        write_log(out, *log);
    }
}

int cmd_perturb(const RunConfig& cfg, const std::string& action, Report& rep) {
    const Table t = load_table(cfg, cfg.tables.at(0));
    if (action == "respond") {
        const OrbitWord w = parse_orbit_word(cfg.word);
        const GeneralizedOrbit o = find_generalized_orbit(t, w);
        const BumpField bf = BumpField::make(t, cfg.scatterer, cfg.s0, cfg.w, parse_mode(cfg.mode));
        const ResponseReport r = first_order_response(t, o, bf, cfg.respond_eps);
        rep.comment("word", r.word);
        rep.comment("P", num(r.P));
        rep.comment("first_order_dL", num(r.first_order));
        rep.comment("residual", num(r.residual));
        rep.comment("tilt_gain", num(r.tilt_gain));
        std::string psi;
        for (double x : r.psi) psi += (psi.empty() ? "" : ",") + num(x);
        rep.comment("psi", psi);
        rep.row({"eps", "dL", "shift_error", "length_error"});
        for (const auto& c : r.checks) rep.row({num(c.eps), num(c.dL), num(c.shift_error), num(c.length_error)});
        for (size_t k = 0; k < r.shift_ratios.size(); ++k)
            rep.comment("ratio", num(r.shift_ratios[k]) + " " + num(r.length_ratios[k]));
        return 0;
    }
    if (action == "replay") {
        std::ifstream in(cfg.log_path);
        if (!in) throw InvalidTable("cannot open log " + cfg.log_path);
        const auto log = read_log(in);
        const Table out = replay(t, log);
        write_steps(log, rep);
        save_outputs(cfg, out, nullptr);
        return 0;
    }
    GenericityOptions go;
    go.q_max = cfg.q_max;
    go.T_max = cfg.T_max;
    go.eps_max = cfg.eps_max;
    go.gap = cfg.gap;
    go.workers = cfg.workers;
    const GenericityResult res = action == "degraze" ? degraze(t, go) : separate_lengths(t, go);
    write_steps(res.log, rep);
    for (const auto& r : res.remaining) rep.comment("remaining", r);
    save_outputs(cfg, res.table, &res.log);
    if (res.partial) throw BudgetExceeded("step budget exhausted");
    return res.remaining.empty() ? 0 : 3;
}

int cmd_kourganoff(const RunConfig& cfg, const std::string& action, Report& rep) {
    const Table t = load_table(cfg, cfg.tables.at(0));
    t.require_finite_horizon();
    const HeightProfile prof(t, cfg.clamp);
    if (action == "converge") {
        const Vec2 p{cfg.point.at(0), cfg.point.at(1)}, v{cfg.direction.at(0), cfg.direction.at(1)};
        const ConvergenceReport cr = convergence_test(prof, p, v, cfg.T, cfg.eps_list, {}, cfg.workers);
        rep.comment("min_cos", num(cr.min_cos));
        rep.comment("collisions", std::to_string(cr.collisions));
        rep.comment("monotone", cr.monotone() ? "yes" : "no");
        rep.row({"eps", "sup_distance", "steps", "speed_drift"});
        for (const auto& r : cr.rows)
            rep.row({num(r.eps), num(r.sup_distance), std::to_string(r.steps), num(r.speed_drift)});
        return 0;
    }
    if (cfg.word.empty() && cfg.boundary < 0) throw InvalidWord("closed-geodesic needs --word or --boundary");
    if (cfg.boundary >= 0) {
        const ClosedGeodesic g = seam_geodesic(prof, cfg.boundary);
        rep.row({"eps", "length", "gap", "residual", "iterations"});
        rep.row({"any", num(g.length), "0", num(g.residual), std::to_string(g.iterations)});
        return 0;
    }
    const BilliardCycle c = minimize_EL(t, parse_orbit_word(cfg.word));
    const LengthConvergence lc = length_convergence(prof, c, cfg.eps_list);
    rep.comment("word", lc.word);
    rep.comment("EL", num(lc.EL));
    rep.row({"eps", "length", "gap", "residual", "iterations", "ratio"});
    for (size_t k = 0; k < lc.geodesics.size(); ++k) {
        const auto& g = lc.geodesics[k];
        rep.row({num(g.eps), num(g.length), num(lc.gaps[k]), num(g.residual), std::to_string(g.iterations),
                 k > 0 ? num(lc.ratios[k - 1]) : "-"});
    }
    return 0;
}

int cmd_crofton(const RunConfig& cfg, Report& rep) {
    const auto n = static_cast<std::size_t>(cfg.samples);
    const CroftonEstimate ce = crofton_check(cfg.length, n, cfg.seed);
    rep.row({"length", "estimate", "sigma", "z", "samples"});
    const double z = (ce.value - cfg.length) / ce.sigma;
    rep.row({num(cfg.length), num(ce.value), num(ce.sigma), num(z), std::to_string(ce.samples)});
    return std::abs(z) <= 3.0 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    RunConfig cfg;
    CLI::App app{"Periodic-orbit and enriched length spectra of Sinai billiards"};
    app.set_version_flag("--version", kVersion);
    app.set_config("--config", "", "TOML config file; flags override it");
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--q-max", cfg.q_max, "maximum number of bounces")->check(CLI::Range(2, 12))->capture_default_str();
    app.add_option("--T-max", cfg.T_max, "length cutoff")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--tol-crit", cfg.tol_crit)->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--tol-graze", cfg.tol_graze)->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--tol-sub", cfg.tol_sub)->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--lattice-bound", cfg.lattice_bound)->check(CLI::Range(1, 64))->capture_default_str();
    app.add_option("--eps", cfg.eps_list, "flattening parameters")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--seed", cfg.seed)->capture_default_str();
    app.add_option("--workers", cfg.workers, "0 = hardware concurrency")->check(CLI::NonNegativeNumber);
    app.add_option("-o,--output", cfg.output, "report path (default stdout)");

    auto table_arg = [&](CLI::App* sub, int n) {
        sub->add_option("tables", cfg.tables, n == 1 ? "table file" : "two table files")
            ->required()
            ->expected(n);
    };
    CLI::App* validate = app.add_subcommand("validate", "invariant checks and horizon certificate");
    table_arg(validate, 1);
    CLI::App* horizon = app.add_subcommand("horizon", "finite-horizon certificate");
    table_arg(horizon, 1);
    CLI::App* spectrum = app.add_subcommand("spectrum", "periodic-orbit spectrum");
    table_arg(spectrum, 1);
    CLI::App* enriched = app.add_subcommand("enriched", "enriched marked length spectrum");
    table_arg(enriched, 1);
    CLI::App* compare = app.add_subcommand("compare", "per-word enriched length differences");
    table_arg(compare, 2);
    compare->add_flag("--reports", cfg.reports, "inputs are enriched reports instead of tables");
    compare->add_option("--tol", cfg.tol_compare)->check(CLI::PositiveNumber)->capture_default_str();

    CLI::App* perturb = app.add_subcommand("perturb", "boundary perturbations");
    perturb->require_subcommand(1);
    std::string perturb_action;
    for (const char* name : {"degraze", "separate", "respond", "replay"}) {
        CLI::App* sub = perturb->add_subcommand(name);
        table_arg(sub, 1);
        sub->callback([&perturb_action, name] { perturb_action = name; });
        if (std::string(name) == "respond") {
            sub->add_option("--word", cfg.word)->required();
            sub->add_option("--scatterer", cfg.scatterer)->capture_default_str();
            sub->add_option("--s0", cfg.s0)->required();
            sub->add_option("--w", cfg.w)->check(CLI::PositiveNumber)->capture_default_str();
            sub->add_option("--mode", cfg.mode)->check(CLI::IsMember({"move", "tilt", "retract"}))->capture_default_str();
            sub->add_option("--response-eps", cfg.respond_eps)->check(CLI::PositiveNumber)->capture_default_str();
        } else if (std::string(name) == "replay") {
            sub->add_option("--log", cfg.log_path)->required();
            sub->add_option("--table-out", cfg.table_out);
        } else {
            sub->add_option("--eps-max", cfg.eps_max)->check(CLI::PositiveNumber)->capture_default_str();
            sub->add_option("--gap", cfg.gap)->check(CLI::PositiveNumber)->capture_default_str();
            sub->add_option("--log", cfg.log_path);
            sub->add_option("--table-out", cfg.table_out);
        }
    }

    CLI::App* kourganoff = app.add_subcommand("kourganoff", "flattened-surface geodesics");
    kourganoff->require_subcommand(1);
    kourganoff->add_option("--clamp", cfg.clamp)->check(CLI::PositiveNumber)->capture_default_str();
    std::string kourganoff_action;
    CLI::App* converge = kourganoff->add_subcommand("converge", "projected geodesic vs billiard flow");
    table_arg(converge, 1);
    converge->add_option("--point", cfg.point)->expected(2)->capture_default_str();
    converge->add_option("--dir", cfg.direction)->expected(2)->capture_default_str();
    converge->add_option("--T", cfg.T)->check(CLI::PositiveNumber)->capture_default_str();
    converge->callback([&] { kourganoff_action = "converge"; });
    CLI::App* closed = kourganoff->add_subcommand("closed-geodesic", "closed geodesic lengths in a class");
    table_arg(closed, 1);
    auto* word_opt = closed->add_option("--word", cfg.word);
    auto* boundary_opt = closed->add_option("--boundary", cfg.boundary, "scatterer whose boundary class is used");
    word_opt->excludes(boundary_opt);
    closed->callback([&] { kourganoff_action = "closed-geodesic"; });

    CLI::App* crofton = app.add_subcommand("crofton", "Monte Carlo line-measure check");
    crofton->add_option("--length", cfg.length)->check(CLI::PositiveNumber)->capture_default_str();
    crofton->add_option("--samples", cfg.samples)->check(CLI::Range(1e3, 1e9))->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const CLI::App* chosen = app.get_subcommands().front();
    cfg.command = chosen->get_name();
    if (!perturb_action.empty()) cfg.command += " " + perturb_action;
    if (!kourganoff_action.empty()) cfg.command += " " + kourganoff_action;
    std::string resolved;
    collect_options(&app, resolved);
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(resolved)));

    try {
        Report rep(cfg, hash);
        rep.out().precision(17);
        if (chosen == validate) return cmd_validate(cfg, rep);
        if (chosen == horizon) return cmd_horizon(cfg, rep);
        if (chosen == spectrum) return cmd_spectrum(cfg, rep);
        if (chosen == enriched) return cmd_enriched(cfg, rep);
        if (chosen == compare) return cmd_compare(cfg, rep);
        if (chosen == perturb) return cmd_perturb(cfg, perturb_action, rep);
        if (chosen == kourganoff) return cmd_kourganoff(cfg, kourganoff_action, rep);
        if (chosen == crofton) return cmd_crofton(cfg, rep);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.family());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
