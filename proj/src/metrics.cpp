#include "symode/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>

#include <fmt/format.h>

#include "symode/simplify.hpp"

namespace symode {

void MetricsConfig::validate() const {
    if (n_eval < 2) throw std::invalid_argument("MetricsConfig: N_eval must be >= 2");
    if (!(atol >= 0.0 && rtol >= 0.0)) throw std::invalid_argument("MetricsConfig: atol and rtol must be >= 0");
}

MetricsReport MetricsReport::failing(std::size_t complexity_gt) {
    MetricsReport r;
    r.complexity_gt = complexity_gt;
    return r;
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j{{"allclose", allclose},
                     {"r2_pass", r2_pass},
                     {"skeleton_match", skeleton_match},
                     {"complexity_pred", complexity_pred},
                     {"complexity_gt", complexity_gt},
                     {"skeleton_and_allclose", skeleton_and_allclose},
                     {"skeleton_and_r2", skeleton_and_r2}};
    // JSON has no infinities; a failed fit is null.
    j["r_squared"] = std::isfinite(r_squared) ? nlohmann::json(r_squared) : nlohmann::json(nullptr);
    return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
    MetricsReport r;
    r.allclose = j.at("allclose").get<bool>();
    r.r2_pass = j.at("r2_pass").get<bool>();
    r.skeleton_match = j.at("skeleton_match").get<bool>();
    r.complexity_pred = j.at("complexity_pred").get<std::size_t>();
    r.complexity_gt = j.at("complexity_gt").get<std::size_t>();
    r.skeleton_and_allclose = j.at("skeleton_and_allclose").get<bool>();
    r.skeleton_and_r2 = j.at("skeleton_and_r2").get<bool>();
    const auto& r2 = j.at("r_squared");
    r.r_squared = r2.is_null() ? -std::numeric_limits<double>::infinity() : r2.get<double>();
    return r;
}

Eigen::VectorXd eval_points(const SeriesRef& y, int n) {
    if (n < 2) throw std::invalid_argument("eval_points needs n >= 2");
    if (y.size() == 0 || !y.allFinite()) throw std::invalid_argument("eval_points needs a finite trajectory");
    const double lo = y.minCoeff(), hi = y.maxCoeff();
    Eigen::VectorXd out(n);
    for (int k = 0; k < n; ++k) out[k] = lo + static_cast<double>(k) * (hi - lo) / (n - 1);
    out[n - 1] = hi;
    return out;
}

bool allclose(const SeriesRef& pred, const SeriesRef& gt, double atol, double rtol) {
    if (pred.size() != gt.size()) throw std::invalid_argument("allclose: length mismatch");
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
        const double a = pred[i], b = gt[i];
        if (std::isnan(a) || std::isnan(b)) return false;
        if (std::isinf(a) || std::isinf(b)) {
            if (a != b) return false;
            continue;
        }
        if (!(std::abs(a - b) <= atol + rtol * std::abs(b))) return false;
    }
    return true;
}

double r_squared(const SeriesRef& pred, const SeriesRef& gt) {
    if (pred.size() != gt.size()) throw std::invalid_argument("r_squared: length mismatch");
    if (gt.size() < 2) throw std::invalid_argument("r_squared needs at least 2 points");
    constexpr double kFail = -std::numeric_limits<double>::infinity();
    if (!pred.allFinite() || !gt.allFinite()) return kFail;
    const double ss_res = (gt - pred).squaredNorm();
    const double ss_tot = (gt.array() - gt.mean()).matrix().squaredNorm();
    if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : kFail;
    const double r2 = 1.0 - ss_res / ss_tot;
    return std::isfinite(r2) ? r2 : kFail;
}

namespace {

bool sign_ok(double v, int sign) { return v != 0.0 && (v < 0.0) == (sign < 0); }

// Binds placeholders of `pattern` to constant leaves of `target`.
bool unify(const Expr& pattern, const Expr& target, std::vector<Expr>& bound) {
    if (pattern.is(Op::Placeholder)) {
        if (!target.is_const() || !sign_ok(target.value(), pattern.placeholder_sign())) return false;
        bound[static_cast<std::size_t>(pattern.placeholder_index())] = target;
        return true;
    }
    if (pattern.op() != target.op()) return false;
    const auto pc = pattern.children(), tc = target.children();
    for (std::size_t i = 0; i < pc.size(); ++i)
        if (!unify(pc[i], tc[i], bound)) return false;
    return true;
}

bool realizes(const Skeleton& skeleton, std::span<const Expr> values, const Expr& gt) {
    const Simplified s = simplify(fill_placeholders(skeleton.tree, values));
    return s.valid && same_value_tree(s.expr, gt);
}

constexpr std::size_t kSearchBudget = 200000;
constexpr double kProbes[] = {0.731, 1.618, 2.419};

std::vector<double> candidate_values(const std::vector<double>& d, bool extended) {
    std::vector<double> out{1.0, -1.0};
    for (double a : d) {
        out.push_back(a);
        if (!extended) continue;
        out.push_back(-a);
        out.push_back(a + 1.0);
        out.push_back(a - 1.0);
        for (double b : d) {
            out.push_back(a + b);
            out.push_back(a - b);
            out.push_back(a * b);
            if (b != 0.0) out.push_back(a / b);
        }
    }
    std::erase_if(out, [](double v) { return !std::isfinite(v) || v == 0.0; });
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// Exhaustive search over per-placeholder candidate lists; gt is probed numerically
// before paying for a simplification.
bool search(const Skeleton& skeleton, const Expr& gt, const std::vector<std::vector<double>>& lists) {
    const std::size_t n = lists.size();
    double gt_at[std::size(kProbes)];
    for (std::size_t p = 0; p < std::size(kProbes); ++p) gt_at[p] = evaluate(gt, kProbes[p]);
    std::vector<std::size_t> idx(n, 0);
    std::vector<Expr> values(n);
    while (true) {
        for (std::size_t k = 0; k < n; ++k) {
            const double v = lists[k][idx[k]];
            values[k] = Expr::constant(v, v == std::trunc(v) && std::abs(v) < 1e15 ? ConstKind::Integer : ConstKind::Real);
        }
        const Expr filled = fill_placeholders(skeleton.tree, values);
        bool plausible = true;
        for (std::size_t p = 0; p < std::size(kProbes) && plausible; ++p) {
            const double a = evaluate(filled, kProbes[p]);
            if (std::isfinite(a) && std::isfinite(gt_at[p]))
                plausible = std::abs(a - gt_at[p]) <= 1e-6 * std::max(1.0, std::abs(gt_at[p]));
        }
        if (plausible && realizes(skeleton, values, gt)) return true;
        std::size_t k = 0;
        while (k < n && ++idx[k] == lists[k].size()) idx[k++] = 0;
        if (k == n) return false;
    }
}

std::optional<std::vector<std::vector<double>>> candidate_lists(const Skeleton& skeleton,
                                                               const std::vector<double>& gt_constants, bool extended) {
    const auto base = candidate_values(gt_constants, extended);
    std::vector<std::vector<double>> lists;
    std::size_t combos = 1;
    for (int sign : skeleton.signs()) {
        std::vector<double> list;
        std::copy_if(base.begin(), base.end(), std::back_inserter(list), [&](double v) { return sign_ok(v, sign); });
        if (list.empty()) return std::vector<std::vector<double>>{};
        combos *= list.size();
        if (combos > kSearchBudget) return std::nullopt;
        lists.push_back(std::move(list));
    }
    return lists;
}

} // namespace

bool skeleton_match(const Expr& gt, const Expr& pred) {
    // Identity needs no constant change, so it matches even where gt holds a 0.
    if (same_value_tree(gt, pred)) return true;
    const Skeleton skeleton = skeletonize(pred);
    const std::size_t n = skeleton.placeholder_count();
    std::vector<Expr> bound(n);
    if (unify(skeleton.tree, gt, bound) && realizes(skeleton, bound, gt)) return true;
    if (n == 0) return false;

    std::vector<double> gt_constants;
    for (const Expr& c : constant_leaves(gt)) gt_constants.push_back(c.value());
    for (bool extended : {true, false}) {
        const auto lists = candidate_lists(skeleton, gt_constants, extended);
        if (!lists) continue;
        if (lists->empty()) return false;
        return search(skeleton, gt, *lists);
    }
    return false;
}

MetricsReport score(const Expr& gt, const Expr& pred, const SeriesRef& trajectory, const MetricsConfig& cfg) {
    MetricsReport r;
    r.complexity_gt = complexity(gt);
    r.complexity_pred = complexity(pred);
    r.skeleton_match = skeleton_match(gt, pred);
    const Eigen::VectorXd ys = eval_points(trajectory, cfg.n_eval);
    const Eigen::VectorXd g = ys.unaryExpr([&](double y) { return evaluate(gt, y); });
    const Eigen::VectorXd p = ys.unaryExpr([&](double y) { return evaluate(pred, y); });
    r.allclose = allclose(p, g, cfg.atol, cfg.rtol);
    r.r_squared = r_squared(p, g);
    r.r2_pass = r.r_squared >= cfg.r2_threshold;
    r.skeleton_and_allclose = r.skeleton_match && r.allclose;
    r.skeleton_and_r2 = r.skeleton_match && r.r2_pass;
    return r;
}

std::string aggregate_csv(const std::vector<MetricsReport>& reports) {
    struct Tally {
        std::size_t count = 0, allclose = 0, r2 = 0, skeleton = 0, sk_ac = 0, sk_r2 = 0;
        void add(const MetricsReport& r) {
            ++count;
            allclose += r.allclose;
            r2 += r.r2_pass;
            skeleton += r.skeleton_match;
            sk_ac += r.skeleton_and_allclose;
            sk_r2 += r.skeleton_and_r2;
        }
    };
    Tally all;
    std::map<std::size_t, Tally> buckets;
    for (const auto& r : reports) {
        all.add(r);
        buckets[r.complexity_gt].add(r);
    }
    auto pct = [](std::size_t k, std::size_t n) { return n == 0 ? 0.0 : 100.0 * static_cast<double>(k) / n; };
    auto row = [&](const std::string& label, const Tally& t) {
        return fmt::format("{},{},{:.2f},{:.2f},{:.2f},{:.2f},{:.2f}\n", label, t.count, pct(t.allclose, t.count),
                           pct(t.r2, t.count), pct(t.skeleton, t.count), pct(t.sk_ac, t.count), pct(t.sk_r2, t.count));
    };
    std::string out = "complexity,count,allclose,r2,skeleton,skeleton_and_allclose,skeleton_and_r2\n";
    out += row("all", all);
    for (const auto& [c, t] : buckets) out += row(std::to_string(c), t);
    return out;
}

} // namespace symode
