#include <doctest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "symode/simplify.hpp"

using namespace symode;

namespace {

std::string canon(std::string_view infix) { return to_prefix_string(simplify(parse_infix(infix)).expr); }

// Operand pool for the commutativity oracle: every tree with at most two operators
// over {y, 2, -3.5}.
std::vector<Expr> small_trees() {
    std::vector<Expr> leaves{Expr::var(), Expr::integer(2), Expr::real(-3.5)};
    std::vector<Expr> out = leaves;
    std::vector<Expr> one;
    for (const Expr& a : leaves) {
        for (Op u : {Op::Sin, Op::Cos, Op::Exp, Op::Sqrt, Op::Log}) one.push_back(Expr::unary(u, a));
        for (const Expr& b : leaves)
            for (Op bop : {Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Pow}) one.push_back(Expr::binary(bop, a, b));
    }
    out.insert(out.end(), one.begin(), one.end());
    for (const Expr& a : one)
        for (Op u : {Op::Cos, Op::Exp}) out.push_back(Expr::unary(u, a));
    return out;
}

} // namespace

TEST_CASE("identities and folding") {
    CHECK(canon("1*y") == "y");
    CHECK(canon("y + (2 + 3)") == "add 5 y");
    CHECK(canon("y + 0") == "y");
    CHECK(canon("y**1") == "y");
    CHECK(canon("y/1") == "y");
    CHECK(canon("y/(-1)") == "neg y");
    CHECK(canon("1**y + y") == "add 1 y");
    CHECK(canon("y**0 + y") == "add 1 y");
    CHECK(canon("y/y + y") == "add 1 y");
    CHECK(canon("0*y + y") == "y");
    CHECK(canon("-(-y)") == "y");
    CHECK(canon("y - y + cos(y)") == "cos y");
    CHECK(canon("2*y + 3*y") == "mul 5 y");
    CHECK(canon("y*y") == "pow y 2");
    CHECK(canon("y**2*y**0.5") == "pow y 2.5");
    CHECK(canon("3 - y") == "add 3 neg y");
    CHECK(canon("3 - 2*y") == "add 3 mul -2 y");
    CHECK(canon("-(y + 2)") == "add -2 neg y");
    CHECK(canon("y/2") == "div y 2");
    CHECK(canon("-(y/2)") == "neg div y 2");
    CHECK(canon("-(2*y)/3") == "div mul -2 y 3");
    CHECK(canon("sin(2*3)*y") == "mul -0.27941549819892586 y");
}

TEST_CASE("integer tags follow integer arithmetic") {
    CHECK(simplify(parse_infix("(2+3)*y")).expr.lhs().const_kind() == ConstKind::Integer);
    CHECK(simplify(parse_infix("(2.0+3)*y")).expr.lhs().const_kind() == ConstKind::Real);
    CHECK(canon("(1/2)*y") == "mul 0.5 y");
    CHECK(canon("(4/2)*y") == "mul 2 y");
}

TEST_CASE("invalid and constant results are flagged") {
    CHECK_FALSE(simplify(parse_infix("y + 1/0")).valid);
    CHECK_FALSE(simplify(parse_infix("y + log(-2)")).valid);
    CHECK_FALSE(simplify(parse_infix("y + sqrt(-1)")).valid);
    CHECK_FALSE(simplify(parse_infix("y + exp(1000)")).valid);
    CHECK_FALSE(simplify(Expr::placeholder(0)).valid);
    const Simplified c = simplify(parse_infix("y - y + 3"));
    CHECK(c.valid);
    CHECK(c.constant);
    CHECK_FALSE(c.usable());
}

TEST_CASE("operand order does not matter") {
    const auto pool = small_trees();
    for (const Expr& a : pool)
        for (const Expr& b : pool)
            for (Op op : {Op::Add, Op::Mul}) {
                const Simplified ab = simplify(Expr::binary(op, a, b));
                const Simplified ba = simplify(Expr::binary(op, b, a));
                REQUIRE(ab.valid == ba.valid);
                if (ab.valid) REQUIRE_MESSAGE(ab.expr == ba.expr, to_prefix_string(Expr::binary(op, a, b)));
            }
    CHECK(simplify(parse_infix("cos(y) + y")).expr == simplify(parse_infix("y + cos(y)")).expr);
}

TEST_CASE("canonical_compare is a strict total order on the pool") {
    const auto pool = small_trees();
    for (const Expr& a : pool)
        for (const Expr& b : pool) {
            const int ab = canonical_compare(a, b);
            REQUIRE(ab == -canonical_compare(b, a));
            REQUIRE((ab == 0) == (a == b));
        }
}

TEST_CASE("idempotence and value preservation") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ys(-5.0, 5.0);
    GenerationConfig cfg;
    Rng source = make_stream(21, 0);
    int checked = 0;
    for (int i = 0; i < 4000; ++i) {
        const Expr raw = decorate(sample_tree(cfg, source), cfg, source);
        const Simplified s = simplify(raw);
        if (!s.valid) continue;
        REQUIRE(simplify(s.expr).expr == s.expr);
        REQUIRE(within_distribution(s.expr));
        for (int k = 0; k < 100; ++k) {
            const double y = ys(rng);
            const double a = evaluate(raw, y);
            const double b = evaluate(s.expr, y);
            if (!std::isfinite(a) || !std::isfinite(b)) continue;
            // Skip points where a few ulps of input move the output past the tolerance
            // (e.g. cos of an argument near 1e50); no rewrite can be exact there.
            const double nudged = evaluate(raw, y * (1.0 + 4e-16));
            if (!(std::abs(nudged - a) <= 1e-13 * std::max(1.0, std::abs(a)))) continue;
            REQUIRE_MESSAGE(std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)}),
                            to_prefix_string(raw) << " at y=" << y);
            ++checked;
        }
    }
    CHECK(checked > 10000);
}

TEST_CASE("skeletons") {
    const Expr e = simplify(parse_infix("y**2 + 1.64*cos(y)")).expr;
    const Skeleton s = skeletonize(e);
    CHECK(s.key() == "add pow y C0 mul C1 cos y");
    CHECK(s.signs() == std::vector<int>{1, 1});
    CHECK(skeletonize(Expr::var()).key() == "y");
    CHECK(skeletonize(Expr::var()).placeholder_count() == 0);
    CHECK(skeletonize(simplify(parse_infix("0.6*y**2 + 2*y + 0.1")).expr) ==
          skeletonize(simplify(parse_infix("3*y**2 + 7*y + 9")).expr));
    CHECK_FALSE(skeletonize(simplify(parse_infix("y - 2")).expr) == skeletonize(simplify(parse_infix("y + 2")).expr));
    CHECK(skeletonize(s.tree) == s);
    const std::vector<Expr> values{Expr::integer(2), Expr::real(1.64)};
    CHECK(fill_placeholders(s.tree, values) == e);
}

TEST_CASE("skeletonize is idempotent on samples") {
    for (const Expr& e : testing::sampled_expressions(2000, 3)) {
        const Skeleton s = skeletonize(e);
        REQUIRE(skeletonize(s.tree) == s);
        REQUIRE(fill_placeholders(s.tree, constant_leaves(e)) == e);
    }
}
