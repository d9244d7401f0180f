#pragma once

#include <cstdint>
#include <vector>

#include "symode/sampling.hpp"

namespace symode::testing {

// Canonical expressions as the corpus generator would emit them.
inline std::vector<Expr> sampled_expressions(std::size_t n, std::uint64_t seed,
                                             const GenerationConfig& cfg = {}) {
    std::vector<Expr> out;
    Rng rng = make_stream(seed, 0);
    while (out.size() < n)
        if (auto e = sample_expression(cfg, rng)) out.push_back(std::move(*e));
    return out;
}

// Every unary-binary shape with exactly n internal nodes, by direct recursion.
inline std::vector<std::vector<std::uint8_t>> enumerate_shapes(int n) {
    if (n == 0) return {{0}};
    std::vector<std::vector<std::uint8_t>> out;
    for (auto& s : enumerate_shapes(n - 1)) {
        s.insert(s.begin(), 1);
        out.push_back(std::move(s));
    }
    for (int left = 0; left < n; ++left)
        for (const auto& a : enumerate_shapes(left))
            for (const auto& b : enumerate_shapes(n - 1 - left)) {
                std::vector<std::uint8_t> s{2};
                s.insert(s.end(), a.begin(), a.end());
                s.insert(s.end(), b.begin(), b.end());
                out.push_back(std::move(s));
            }
    return out;
}

} // namespace symode::testing
