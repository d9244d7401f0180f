#pragma once

#include <span>
#include <string>
#include <vector>

#include "symode/expr.hpp"

namespace symode {

/// Outcome of canonicalization.
///
/// `valid` is false when folding produced a non-finite constant (x/0, log(-2), ...)
/// or the tree holds something outside the sampling distribution; `expr` is then the
/// unmodified input. `constant` flags results without `y`, which corpus generation
/// drops.
struct Simplified {
    Expr expr;
    bool valid = true;
    bool constant = false;

    bool usable() const noexcept { return valid && !constant; }
};

/// Canonical form under a fixed rewrite set:
///  - constant subtrees folded; integer tags kept when every input was an integer
///    and the result is integral
///  - identities: x+0, x*1, x/1, x**1 -> x;  x*0, 0/x -> 0;  x**0, 1**x, x/x -> 1
///  - subtraction becomes add(a, neg b); negation is pushed into constants,
///    mul coefficients and div numerators, distributed over sums; neg(neg x) -> x
///  - add/mul chains flattened; like terms (c1*X + c2*X) and like factors
///    (X**a * X**b) collected; operands sorted by canonical_compare and rebuilt
///    right-nested
/// The result is a fixed point: simplify(simplify(e).expr).expr == simplify(e).expr.
Simplified simplify(const Expr& e);

/// Total order used to sort chain operands. Structure is compared first, by node
/// rank (const < placeholder < y < pow < mul < div < add < sub < neg < sin < cos <
/// exp < sqrt < log) and then children left to right; constant values only break
/// ties between structurally identical trees (pre-order, numerically), tags last.
int canonical_compare(const Expr& a, const Expr& b) noexcept;

/// Structural comparison that treats every constant as equal to every other.
int shape_compare(const Expr& a, const Expr& b) noexcept;

/// Equality on structure and constant values, ignoring integer/real tags.
bool same_value_tree(const Expr& a, const Expr& b) noexcept;

/// Defensive check that the tree stays inside the sampled distribution: only the
/// closed operator set, `y`, and finite constants (no placeholders).
bool within_distribution(const Expr& e) noexcept;

/// Constants abstracted to placeholders C_k (pre-order), each remembering the sign
/// of the constant it replaced.
struct Skeleton {
    Expr tree;

    /// Dedup identity: prefix string with `C<k>` tokens (signs not included).
    std::string key() const { return to_prefix_string(tree); }
    std::vector<int> signs() const;
    std::size_t placeholder_count() const { return signs().size(); }

    friend bool operator==(const Skeleton&, const Skeleton&) = default;
};

Skeleton skeletonize(const Expr& e);

/// Replaces placeholder C_k with `values[k]`.
Expr fill_placeholders(const Expr& tree, std::span<const Expr> values);

} // namespace symode
