#pragma once

#include <Eigen/Core>
#include <chrono>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "symode/expr.hpp"
#include "symode/sampling.hpp"

namespace symode {

struct SolveConfig {
    double T = 4.0;
    int n_grid = 1024;
    int n_iv = 25;
    double y0_min = -5.0;
    double y0_max = 5.0;
    double rtol = 1e-9;
    double atol = 1e-9;
    double blowup = 1e10;
    long max_steps = 1'000'000;
    double max_step = 0.125; // step ceiling; bounds the dense-output error between steps
    double qc_epsilon = 1.0;
    double timeout_seconds = 10.0; // per ODE, enforced by callers that pass a deadline

    void validate() const;
};

enum class SolveStatus { Ok, SolverFailed, Blowup, QcRejected };

std::string_view status_name(SolveStatus s) noexcept;

struct Solution {
    Eigen::VectorXd t;
    Eigen::VectorXd y; // finite when status == Ok
    double y0 = 0.0;
    SolveStatus status = SolveStatus::Ok;
    std::string detail; // reason for a non-ok status
    long accepted_steps = 0;
    long rejected_steps = 0;

    bool ok() const noexcept { return status == SolveStatus::Ok; }
};

/// t_i = i*T/(n-1), computed by exactly that expression.
Eigen::VectorXd time_grid(double T, int n);

using Rhs = std::function<double(double)>;
using Deadline = std::optional<std::chrono::steady_clock::time_point>;

/// Dormand-Prince 5(4) with PI step control and the quartic dense output sampled
/// on time_grid(cfg.T, cfg.n_grid). Error norm |err| / (atol + rtol*max(|y_n|, |y_n+1|)).
/// A NaN in a trial stage rejects the step; a NaN at an accepted point, step
/// underflow, the step cap or an expired deadline give SolverFailed; |y| > blowup
/// gives Blowup.
Solution integrate(const Rhs& f, double y0, const SolveConfig& cfg, Deadline deadline = {});
Solution integrate(const Expr& f, double y0, const SolveConfig& cfg, Deadline deadline = {});

inline constexpr int kStencilHalfWidth = 4;

/// Central 9-point first derivative, 8th-order accurate. Output has n-8 entries
/// aligned with y[4..n-5].
template <class Derived>
Eigen::VectorXd finite_diff(const Eigen::MatrixBase<Derived>& y, double h) {
    const Eigen::Index n = y.size();
    if (n < 2 * kStencilHalfWidth + 1) throw std::length_error("finite_diff needs at least 9 samples");
    const Eigen::Index m = n - 2 * kStencilHalfWidth;
    auto diff = [&](Eigen::Index k) {
        return (y.segment(kStencilHalfWidth + k, m) - y.segment(kStencilHalfWidth - k, m)).eval();
    };
    Eigen::VectorXd d = (4.0 / 5.0) * diff(1) - (1.0 / 5.0) * diff(2) + (4.0 / 105.0) * diff(3) -
                        (1.0 / 280.0) * diff(4);
    return d / h;
}

/// Largest |y_fd - f(y)| over the interior; +inf if any compared value is non-finite.
double qc_residual(const Solution& sol, const Expr& f);

/// qc_residual(sol, f) <= epsilon.
bool qc_check(const Solution& sol, const Expr& f, double epsilon);

/// cfg.n_iv draws uniform on the open interval (y0_min, y0_max).
std::vector<double> sample_initial_values(const SolveConfig& cfg, Rng& rng);

} // namespace symode
