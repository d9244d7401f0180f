#include "symode/benchmarks.hpp"

#include <fstream>
#include <random>

#include "symode/simplify.hpp"

namespace symode {

namespace {

struct Row {
    const char* name;
    const char* f;
    double y0;
};

// 0.76 in the harvesting row is kept as published even though 0.23*0.33 = 0.0759.
constexpr Row kTextbook[] = {
    {"autonomous Riccati", "0.6*y**2 + 2*y + 0.1", -0.2},
    {"autonomous Stuart-Landau", "-1.1*y**3 + 1.31*y", 0.1},
    {"autonomous Bernoulli", "-1.3*y + 2.1*y**2.2", 0.6},
    {"compound interest", "0.1*y", 9.0},
    {"Newton's law of cooling", "0.3 - 0.1*y", 9.0},
    {"Logistic equation", "0.23*(y - y**2)", 9.0},
    {"Logistic equation with harvesting", "0.23*y - 0.76*y**2 - 0.5", 9.0},
    {"Logistic equation with harvesting 2", "2*y - 0.66*y**2 - 0.5", 0.7},
    {"Solow-Swan", "7.2*y**0.5 - 5.5*y", 0.1},
    {"Tank draining", "-0.21*y**0.5", 1.0},
    {"Draining water through a funnel", "-0.67/y**1.5", 3.0},
    {"velocity of a body thrown vertically upwards", "-0.1*y - 9.81", 0.1},
};

constexpr const char* kClassic = "y**3 + y**2 + y";

double draw_y0(const SolveConfig& cfg, Rng& rng) {
    std::uniform_real_distribution<double> dist(cfg.y0_min, cfg.y0_max);
    double v = dist(rng);
    while (v <= cfg.y0_min) v = dist(rng);
    return v;
}

} // namespace

BenchmarkFileError::BenchmarkFileError(std::size_t line, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}

std::vector<BenchmarkOde> load_textbook() {
    std::vector<BenchmarkOde> out;
    for (const Row& r : kTextbook) out.push_back({r.name, simplify(parse_infix(r.f)).expr, r.y0});
    return out;
}

std::vector<BenchmarkOde> load_classic(std::istream* user, const SolveConfig& cfg, Rng& rng) {
    std::vector<BenchmarkOde> out;
    out.push_back({kClassic, simplify(parse_infix(kClassic)).expr, draw_y0(cfg, rng)});
    if (!user) return out;
    std::string line;
    for (std::size_t lineno = 1; std::getline(*user, line); ++lineno) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        Simplified s;
        try {
            s = simplify(parse_prefix(std::string_view(line).substr(first)));
        } catch (const ParseError& e) {
            throw BenchmarkFileError(lineno, e.what());
        }
        if (!s.usable()) throw BenchmarkFileError(lineno, "not a usable f(y): " + line);
        out.push_back({line.substr(first), std::move(s.expr), draw_y0(cfg, rng)});
    }
    return out;
}

std::vector<BenchmarkOde> load_classic(const std::filesystem::path& user, const SolveConfig& cfg, Rng& rng) {
    std::ifstream in(user);
    if (!in) throw std::runtime_error("cannot open " + user.string());
    return load_classic(&in, cfg, rng);
}

} // namespace symode
