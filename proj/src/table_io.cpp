#include <cstdio>
#include <fstream>
#include <sstream>

#include "sinai/errors.hpp"
#include "sinai/geometry.hpp"

namespace sinai {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_number(const std::string& tok, int line) {
    try {
        size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw ParseError("malformed number '" + tok + "'", line);
        return v;
    } catch (const std::invalid_argument&) {
        throw ParseError("malformed number '" + tok + "'", line);
    } catch (const std::out_of_range&) {
        throw ParseError("number out of range '" + tok + "'", line);
    }
}

}  // namespace

TableFile read_table_file(std::istream& in) {
    TableFile out;
    bool have_version = false, have_torus = false, in_block = false, block_has_coeffs = false;
    int block_line = 0;
    std::string raw;
    int line = 0;
    auto close_block = [&]() {
        if (in_block && !block_has_coeffs)
            throw ParseError("[scatterer] block without fourier_coeffs", block_line);
    };
    while (std::getline(in, raw)) {
        ++line;
        std::string s = raw;
        if (auto hash = s.find('#'); hash != std::string::npos) s = s.substr(0, hash);
        s = trim(s);
        if (s.empty()) continue;
        if (s == "[scatterer]") {
            close_block();
            in_block = true;
            block_has_coeffs = false;
            block_line = line;
            continue;
        }
        if (s.front() == '[') throw ParseError("unknown section " + s, line);
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ParseError("expected 'key = value'", line);
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        if (!in_block) {
            if (key == "version") {
                const double v = parse_number(value, line);
                if (v != 1.0) throw ParseError("unsupported version " + value, line);
                out.version = 1;
                have_version = true;
            } else if (key == "torus") {
                if (value != "unit_square") throw ParseError("only torus = unit_square is supported", line);
                have_torus = true;
            } else {
                throw ParseError("unknown key '" + key + "'", line);
            }
        } else if (key == "bump") {
            if (!block_has_coeffs) throw ParseError("bump before fourier_coeffs", line);
            std::istringstream ss(value);
            std::string shape, t0, hw, amp, extra;
            if (!(ss >> shape >> t0 >> hw >> amp) || (ss >> extra))
                throw ParseError("bump needs: even|odd theta0 half_width amplitude", line);
            SupportBump b;
            if (shape == "even") b.shape = SupportBump::Shape::even;
            else if (shape == "odd") b.shape = SupportBump::Shape::odd;
            else throw ParseError("bump shape must be even or odd", line);
            b.theta0 = parse_number(t0, line);
            b.half_width = parse_number(hw, line);
            b.amplitude = parse_number(amp, line);
            if (!(b.half_width > 0.0 && b.half_width < kPi)) throw ParseError("bump half-width must lie in (0, pi)", line);
            out.curves.back() = out.curves.back().with_bump(b);
        } else {
            if (key != "fourier_coeffs") throw ParseError("unknown scatterer key '" + key + "'", line);
            if (block_has_coeffs) throw ParseError("duplicate fourier_coeffs", line);
            std::istringstream ss(value);
            std::vector<double> c;
            std::string tok;
            while (ss >> tok) c.push_back(parse_number(tok, line));
            if (c.empty() || c.size() % 2 == 0)
                throw ParseError("fourier_coeffs needs a0 followed by (a_n, b_n) pairs", line);
            out.curves.push_back(SupportCurve::from_coeffs(c));
            block_has_coeffs = true;
        }
    }
    close_block();
    if (!have_version) throw ParseError("missing version", line);
    if (!have_torus) throw ParseError("missing torus", line);
    return out;
}

TableFile read_table_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path, 0);
    return read_table_file(in);
}

void write_table_file(std::ostream& out, const std::vector<SupportCurve>& curves) {
    out << "version = 1\n";
    out << "torus = unit_square\n";
    for (const auto& c : curves) {
        out << "\n[scatterer]\nfourier_coeffs =";
        for (double v : c.coeffs()) out << ' ' << format_double(v);
        out << '\n';
        for (const auto& b : c.bumps())
            out << "bump = " << (b.shape == SupportBump::Shape::even ? "even" : "odd") << ' '
                << format_double(b.theta0) << ' ' << format_double(b.half_width) << ' '
                << format_double(b.amplitude) << '\n';
    }
}

void write_table_file(const std::string& path, const std::vector<SupportCurve>& curves) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write " + path, 0);
    write_table_file(out, curves);
}

}  // namespace sinai
