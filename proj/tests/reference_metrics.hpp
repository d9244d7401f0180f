#pragma once

// Element-wise loops for allclose and the R^2 pass decision, written without
// Eigen so they are independent of the library implementation.

#include <cmath>
#include <vector>

namespace symode::testing {

// numpy.allclose semantics, written out per element.
inline bool reference_allclose(const std::vector<double>& a, const std::vector<double>& b, double atol, double rtol) {
    bool ok = true;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] != a[i] || b[i] != b[i]) return false;
        const bool both_inf = std::isinf(a[i]) && std::isinf(b[i]);
        if (both_inf) {
            ok = ok && (a[i] == b[i]);
        } else if (std::isinf(a[i]) || std::isinf(b[i])) {
            ok = false;
        } else {
            ok = ok && (std::fabs(a[i] - b[i]) <= atol + rtol * std::fabs(b[i]));
        }
    }
    return ok;
}

inline bool reference_r2_pass(const std::vector<double>& pred, const std::vector<double>& gt, double threshold) {
    long double mean = 0;
    for (double g : gt) mean += g;
    mean /= gt.size();
    long double res = 0, tot = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!std::isfinite(pred[i]) || !std::isfinite(gt[i])) return false;
        res += (static_cast<long double>(gt[i]) - pred[i]) * (static_cast<long double>(gt[i]) - pred[i]);
        tot += (gt[i] - mean) * (gt[i] - mean);
    }
    if (tot == 0) return res == 0;
    return 1 - res / tot >= threshold;
}

} // namespace symode::testing
