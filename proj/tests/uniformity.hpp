#pragma once

#include <boost/math/distributions/chi_squared.hpp>
#include <map>

#include "support.hpp"

namespace symode::testing {

// Pearson chi-squared p-value of `draws` sampled shapes against the uniform law
// over all shapes with 1..K internal nodes. -1 if a draw is not such a shape.
inline double uniformity_p_value(int K, int draws, std::uint64_t seed) {
    std::map<std::vector<std::uint8_t>, int> counts;
    for (int n = 1; n <= K; ++n)
        for (auto& s : enumerate_shapes(n)) counts[s] = 0;
    GenerationConfig cfg;
    cfg.max_internal_nodes = K;
    Rng rng = make_stream(seed, 0);
    for (int i = 0; i < draws; ++i) {
        auto it = counts.find(sample_tree(cfg, rng).arities);
        if (it == counts.end()) return -1.0;
        ++it->second;
    }
    const double expected = static_cast<double>(draws) / counts.size();
    double chi2 = 0.0;
    for (const auto& [shape, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
    boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
    return boost::math::cdf(boost::math::complement(dist, chi2));
}

} // namespace symode::testing
