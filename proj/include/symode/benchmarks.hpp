#pragma once

#include <filesystem>
#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

#include "symode/expr.hpp"
#include "symode/ode.hpp"
#include "symode/sampling.hpp"

namespace symode {

struct BenchmarkOde {
    std::string name;
    Expr f; // canonical
    double y0;
};

/// The 12 textbook ODEs, simplified coefficients as published.
std::vector<BenchmarkOde> load_textbook();

class BenchmarkFileError : public std::runtime_error {
public:
    BenchmarkFileError(std::size_t line, const std::string& message);
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// f(y) = y**3 + y**2 + y, then one ODE per non-blank, non-'#' line of `user`
/// (prefix grammar). Each gets y0 drawn from (cfg.y0_min, cfg.y0_max).
std::vector<BenchmarkOde> load_classic(std::istream* user, const SolveConfig& cfg, Rng& rng);
std::vector<BenchmarkOde> load_classic(const std::filesystem::path& user, const SolveConfig& cfg, Rng& rng);

} // namespace symode
