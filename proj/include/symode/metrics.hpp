#pragma once

#include <Eigen/Core>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "symode/expr.hpp"
#include "symode/ode.hpp"

namespace symode {

struct MetricsConfig {
    int n_eval = 100;
    double atol = 1e-10;
    double rtol = 0.05;
    double r2_threshold = 0.999;

    void validate() const;
};

struct MetricsReport {
    bool allclose = false;
    double r_squared = -std::numeric_limits<double>::infinity();
    bool r2_pass = false;
    bool skeleton_match = false;
    std::size_t complexity_pred = 0;
    std::size_t complexity_gt = 0;
    bool skeleton_and_allclose = false;
    bool skeleton_and_r2 = false;

    /// Report for a candidate that could not be decoded at all.
    static MetricsReport failing(std::size_t complexity_gt);

    nlohmann::json to_json() const;
    static MetricsReport from_json(const nlohmann::json& j);
    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

using SeriesRef = Eigen::Ref<const Eigen::VectorXd>;

/// n equally spaced values over [min y, max y], endpoints exact; n copies when flat.
Eigen::VectorXd eval_points(const SeriesRef& y, int n);

/// Elementwise |pred - gt| <= atol + rtol*|gt|. Any NaN fails; infinities only
/// match an identical infinity. Throws std::invalid_argument on length mismatch.
bool allclose(const SeriesRef& pred, const SeriesRef& gt, double atol, double rtol);

/// 1 - SS_res/SS_tot. Flat gt: 1 if residuals are all zero, else -inf. Any
/// non-finite input gives -inf.
double r_squared(const SeriesRef& pred, const SeriesRef& gt);

/// True iff pred's constants can be replaced by values that are nonzero and keep
/// their signs so that the canonical form becomes gt. Structural unification of
/// skeletonize(pred) against gt first; if that fails, a bounded search over values
/// drawn from gt's constants, +-1 and their pairwise sums, differences, products
/// and quotients catches rewrites that collapse (C*X with C = 1, X**C + X**D with
/// C = D, ...). Both inputs canonical.
bool skeleton_match(const Expr& gt, const Expr& pred);

MetricsReport score(const Expr& gt, const Expr& pred, const SeriesRef& trajectory, const MetricsConfig& cfg);

/// Percentage passing per metric, overall and per gt-complexity bucket.
/// Columns: complexity,count,allclose,r2,skeleton,skeleton_and_allclose,skeleton_and_r2
std::string aggregate_csv(const std::vector<MetricsReport>& reports);

} // namespace symode
