#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "symode/expr.hpp"
#include "symode/simplify.hpp"

namespace symode {

using Rng = std::mt19937_64;

/// Independent stream for task `stream` under `master_seed`; `salt` separates stages
/// that share a task index.
Rng make_stream(std::uint64_t master_seed, std::uint64_t stream, std::uint64_t salt = 0);

inline constexpr std::array<Op, 5> kBinaryOps = {Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Pow};
inline constexpr std::array<Op, 5> kUnaryOps = {Op::Sin, Op::Cos, Op::Exp, Op::Sqrt, Op::Log};

struct GenerationConfig {
    int max_internal_nodes = 5;                                   // K
    std::array<double, 5> binary_weights{0.2, 0.2, 0.2, 0.2, 0.2}; // add sub mul div pow
    std::array<double, 5> unary_weights{0.2, 0.2, 0.2, 0.2, 0.2};  // sin cos exp sqrt log
    double p_symbol = 0.5;                                        // leaf is y
    double p_integer = 0.5;                                       // integer vs real constant
    int int_min = -10;                                            // p_int = U({int_min..int_max} \ {0})
    int int_max = 10;
    double real_min = -10.0; // p_real = U((real_min, real_max))
    double real_max = 10.0;
    int n_const = 25; // constant sets per skeleton

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

/// Number of unary-binary tree shapes with exactly `internal_nodes` internal nodes
/// (large Schroeder numbers: 1, 2, 6, 22, 90, ...). Throws std::overflow_error past 2^63.
std::uint64_t count_trees(int internal_nodes);

/// A tree shape as the pre-order list of node arities (0 leaf, 1 unary, 2 binary).
struct TreeShape {
    std::vector<std::uint8_t> arities;

    std::size_t internal_nodes() const;
    friend auto operator<=>(const TreeShape&, const TreeShape&) = default;
};

/// Uniform over all shapes with 1..K internal nodes: size drawn with weight
/// count_trees(n), then a uniform shape of that size.
TreeShape sample_tree(const GenerationConfig& cfg, Rng& rng);

/// Uniform over shapes with exactly n internal nodes.
TreeShape sample_tree_of_size(int n, Rng& rng);

/// Source of the decoration choices; lets tests force specific draws.
class DecorationSource {
public:
    virtual ~DecorationSource() = default;
    virtual Op binary_op() = 0;
    virtual Op unary_op() = 0;
    virtual Expr leaf() = 0;
};

Expr decorate(const TreeShape& shape, DecorationSource& source);
Expr decorate(const TreeShape& shape, const GenerationConfig& cfg, Rng& rng);

/// Integer-vs-real Bernoulli, then p_int or p_real.
Expr sample_constant(const GenerationConfig& cfg, Rng& rng);

/// One generation attempt: sample a shape, decorate, simplify. Empty when the result
/// is invalid, constant in y, or folds a constant to 0 or outside the sampling range.
std::optional<Expr> sample_expression(const GenerationConfig& cfg, Rng& rng);

class ResampleExhausted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kResampleAttempts = 100;

/// Fresh constants for `skeleton` obeying: nonzero; sign of the original; no base 1
/// in pow; no exponent +-1; no mul coefficient +-1; no divisor +-1. The returned
/// expression is canonical and re-skeletonizes to `skeleton`. Throws
/// ResampleExhausted after kResampleAttempts failed draws.
Expr resample_constants(const Skeleton& skeleton, const GenerationConfig& cfg, Rng& rng);

} // namespace symode
