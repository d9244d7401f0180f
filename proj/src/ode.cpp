#include "symode/ode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace symode {

void SolveConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("SolveConfig: " + what); };
    if (!(T > 0.0)) fail("T must be > 0");
    if (n_grid < 16) fail("N_grid must be >= 16");
    if (n_iv < 1) fail("N_iv must be >= 1");
    if (!(y0_min < y0_max)) fail("y0 range must be nonempty");
    if (!(rtol > 0.0 && atol > 0.0)) fail("rtol and atol must be > 0");
    if (!(blowup > 0.0)) fail("blowup bound must be > 0");
    if (max_steps < 1) fail("max steps must be >= 1");
    if (!(max_step > 0.0)) fail("max step must be > 0");
    if (!(qc_epsilon > 0.0)) fail("epsilon must be > 0");
}

std::string_view status_name(SolveStatus s) noexcept {
    switch (s) {
    case SolveStatus::Ok:
        return "ok";
    case SolveStatus::SolverFailed:
        return "solver-failed";
    case SolveStatus::Blowup:
        return "blowup";
    case SolveStatus::QcRejected:
        return "qc-rejected";
    }
    return "?";
}

Eigen::VectorXd time_grid(double T, int n) {
    Eigen::VectorXd t(n);
    for (int i = 0; i < n; ++i) t[i] = static_cast<double>(i) * T / static_cast<double>(n - 1);
    return t;
}

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784, a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                 d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                 d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;

// PI controller constants.
constexpr double kSafety = 0.9;
constexpr double kBeta = 0.04;
constexpr double kExpo = 0.2 - kBeta * 0.75;
constexpr double kMaxShrink = 5.0; // h_new >= h/5
constexpr double kMaxGrow = 0.1;   // h_new <= h*10
constexpr double kUround = std::numeric_limits<double>::epsilon();

double initial_step(const Rhs& f, double y0, double f0, double hmax, const SolveConfig& cfg) {
    const double sk = cfg.atol + cfg.rtol * std::abs(y0);
    const double dnf = (f0 / sk) * (f0 / sk);
    const double dny = (y0 / sk) * (y0 / sk);
    double h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : std::sqrt(dny / dnf) * 0.01;
    h = std::min(h, hmax);
    const double f1 = f(y0 + h * f0);
    const double der2 = std::abs(f1 - f0) / sk / h;
    const double der12 = std::max(der2, std::sqrt(dnf));
    const double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 0.2);
    h = std::min({100.0 * h, h1, hmax});
    return std::isfinite(h) && h > 0.0 ? h : 1e-6;
}

// Quartic dense output over one accepted step.
struct Dense {
    double r1, r2, r3, r4, r5;
    double operator()(double theta) const {
        const double theta1 = 1.0 - theta;
        return r1 + theta * (r2 + theta1 * (r3 + theta * (r4 + theta1 * r5)));
    }
};

Solution failed(Solution sol, SolveStatus status, std::string detail) {
    sol.status = status;
    sol.detail = std::move(detail);
    sol.y.setConstant(std::numeric_limits<double>::quiet_NaN());
    return sol;
}

} // namespace

Solution integrate(const Rhs& f, double y0, const SolveConfig& cfg, Deadline deadline) {
    Solution sol;
    sol.t = time_grid(cfg.T, cfg.n_grid);
    sol.y.resize(cfg.n_grid);
    sol.y0 = y0;
    if (!std::isfinite(y0)) return failed(std::move(sol), SolveStatus::SolverFailed, "non-finite initial value");
    if (std::abs(y0) > cfg.blowup) return failed(std::move(sol), SolveStatus::Blowup, "initial value beyond bound");

    double y = y0;
    double k1 = f(y);
    if (!std::isfinite(k1)) return failed(std::move(sol), SolveStatus::SolverFailed, "f(y0) is not finite");
    sol.y[0] = y0;
    int next = 1;

    const double T = cfg.T;
    double t = 0.0;
    const double hmax = std::min(T, cfg.max_step);
    double h = initial_step(f, y, k1, hmax, cfg);
    double facold = 1e-4;
    bool last_rejected = false;
    long steps = 0;

    while (next < cfg.n_grid) {
        if (++steps > cfg.max_steps) return failed(std::move(sol), SolveStatus::SolverFailed, "step cap reached");
        if (deadline && (steps & 1023) == 0 && std::chrono::steady_clock::now() > *deadline)
            return failed(std::move(sol), SolveStatus::SolverFailed, "timeout");
        if (0.1 * h <= std::abs(t) * kUround || h <= std::numeric_limits<double>::min())
            return failed(std::move(sol), SolveStatus::SolverFailed, "step size underflow");
        bool final_step = false;
        if (t + 1.01 * h >= T) {
            h = T - t;
            final_step = true;
        }

        const double k2 = f(y + h * a21 * k1);
        const double k3 = f(y + h * (a31 * k1 + a32 * k2));
        const double k4 = f(y + h * (a41 * k1 + a42 * k2 + a43 * k3));
        const double k5 = f(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        const double k6 = f(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        const double y1 = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
        const double k7 = f(y1);
        const double sk = cfg.atol + cfg.rtol * std::max(std::abs(y), std::abs(y1));
        const double err = std::abs(h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7)) / sk;

        if (!std::isfinite(err) || !std::isfinite(k7)) {
            // Trial left the domain of f or overflowed: shrink hard and retry.
            ++sol.rejected_steps;
            last_rejected = true;
            h /= kMaxShrink;
            continue;
        }

        const double fac11 = std::pow(err, kExpo);
        if (err <= 1.0) {
            const double fac = std::clamp(fac11 / std::pow(facold, kBeta) / kSafety, kMaxGrow, kMaxShrink);
            double hnew = std::min(h / fac, hmax);
            facold = std::max(err, 1e-4);
            ++sol.accepted_steps;

            const double ydiff = y1 - y;
            const double bspl = h * k1 - ydiff;
            const Dense dense{y, ydiff, bspl, ydiff - h * k7 - bspl,
                              h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7)};
            const double t1 = final_step ? T : t + h;
            while (next < cfg.n_grid && sol.t[next] <= t1) {
                sol.y[next] = dense((sol.t[next] - t) / h);
                ++next;
            }

            if (std::abs(y1) > cfg.blowup) return failed(std::move(sol), SolveStatus::Blowup, "|y| exceeded bound");
            if (last_rejected) hnew = std::min(hnew, h);
            last_rejected = false;
            t = t1;
            y = y1;
            k1 = k7;
            h = hnew;
        } else {
            ++sol.rejected_steps;
            h /= std::min(kMaxShrink, fac11 / kSafety);
            last_rejected = true;
        }
    }
    for (Eigen::Index i = 0; i < sol.y.size(); ++i)
        if (!std::isfinite(sol.y[i]) || std::abs(sol.y[i]) > cfg.blowup)
            return failed(std::move(sol), SolveStatus::Blowup, "non-finite grid value");
    return sol;
}

Solution integrate(const Expr& f, double y0, const SolveConfig& cfg, Deadline deadline) {
    return integrate([&f](double y) { return evaluate(f, y); }, y0, cfg, deadline);
}

double qc_residual(const Solution& sol, const Expr& f) {
    const Eigen::Index n = sol.y.size();
    if (n < 2 * kStencilHalfWidth + 1 || !sol.y.allFinite()) return std::numeric_limits<double>::infinity();
    const double h = (sol.t[n - 1] - sol.t[0]) / static_cast<double>(n - 1);
    const Eigen::VectorXd fd = finite_diff(sol.y, h);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < fd.size(); ++i) {
        const double rhs = evaluate(f, sol.y[i + kStencilHalfWidth]);
        const double d = std::abs(fd[i] - rhs);
        if (!std::isfinite(d)) return std::numeric_limits<double>::infinity();
        worst = std::max(worst, d);
    }
    return worst;
}

bool qc_check(const Solution& sol, const Expr& f, double epsilon) { return qc_residual(sol, f) <= epsilon; }

std::vector<double> sample_initial_values(const SolveConfig& cfg, Rng& rng) {
    std::uniform_real_distribution<double> dist(cfg.y0_min, cfg.y0_max);
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(cfg.n_iv));
    while (out.size() < static_cast<std::size_t>(cfg.n_iv)) {
        const double v = dist(rng);
        if (v > cfg.y0_min && v < cfg.y0_max) out.push_back(v);
    }
    return out;
}

} // namespace symode
