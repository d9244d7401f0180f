#include <doctest.h>

#include <map>

#include "support.hpp"
#include "uniformity.hpp"
#include "symode/sampling.hpp"

using namespace symode;

namespace {

class Scripted final : public DecorationSource {
public:
    std::vector<Op> binaries, unaries;
    std::vector<Expr> leaves;
    Op binary_op() override { return take(binaries); }
    Op unary_op() override { return take(unaries); }
    Expr leaf() override { return take(leaves); }

private:
    template <class T>
    static T take(std::vector<T>& v) {
        if (v.empty()) throw std::out_of_range("script exhausted");
        T x = v.front();
        v.erase(v.begin());
        return x;
    }
};

} // namespace

TEST_CASE("tree counts match enumeration") {
    CHECK(count_trees(0) == 1);
    CHECK(count_trees(1) == 2);
    CHECK(count_trees(2) == 6);
    CHECK(count_trees(3) == 22);
    CHECK(count_trees(4) == 90);
    for (int n = 0; n <= 7; ++n) CHECK(count_trees(n) == testing::enumerate_shapes(n).size());
    CHECK_THROWS_AS(count_trees(-1), std::invalid_argument);
    CHECK_THROWS_AS(count_trees(200), std::overflow_error);
}

TEST_CASE("shape sampling is uniform") {
    CHECK(testing::uniformity_p_value(1, 20000, 1) > 0.01);
    CHECK(testing::uniformity_p_value(2, 40000, 2) > 0.01);
    CHECK(testing::uniformity_p_value(3, 100000, 3) > 0.01);
}

TEST_CASE("shape sampling is deterministic per seed") {
    GenerationConfig cfg;
    cfg.max_internal_nodes = 2;
    Rng a = make_stream(9, 4), b = make_stream(9, 4), c = make_stream(9, 5);
    std::vector<TreeShape> sa, sb, sc;
    for (int i = 0; i < 50; ++i) {
        sa.push_back(sample_tree(cfg, a));
        sb.push_back(sample_tree(cfg, b));
        sc.push_back(sample_tree(cfg, c));
    }
    CHECK(sa == sb);
    CHECK(sa != sc);
    for (const auto& s : sa) CHECK(s.internal_nodes() >= 1);
}

TEST_CASE("decorate with forced draws") {
    Scripted src;
    src.binaries = {Op::Mul};
    src.leaves = {Expr::var(), Expr::integer(3)};
    CHECK(decorate(TreeShape{{2, 0, 0}}, src) == Expr::binary(Op::Mul, Expr::var(), Expr::integer(3)));
    Scripted bad;
    bad.binaries = {Op::Add};
    bad.leaves = {Expr::var(), Expr::var()};
    CHECK_THROWS_AS(decorate(TreeShape{{2, 0}}, bad), std::invalid_argument);
    CHECK_THROWS_AS(decorate(TreeShape{{0, 0}}, bad), std::invalid_argument);
}

TEST_CASE("leaf laws") {
    GenerationConfig all_y;
    all_y.p_symbol = 0.999999999;
    Rng rng = make_stream(4, 0);
    for (int i = 0; i < 200; ++i)
        for (const Expr& c : constant_leaves(decorate(sample_tree(all_y, rng), all_y, rng))) FAIL(c.value());

    GenerationConfig cfg;
    long leaves = 0, vars = 0;
    long ints = 0, consts = 0;
    auto visit = [&](auto&& self, const Expr& e) -> void {
        if (e.is(Op::Var)) ++vars;
        if (e.is_const()) {
            ++consts;
            ints += e.const_kind() == ConstKind::Integer;
            CHECK(e.value() != 0.0);
            CHECK(std::abs(e.value()) < 10.0 + (e.const_kind() == ConstKind::Integer));
        }
        if (is_leaf(e.op())) ++leaves;
        for (const Expr& c : e.children()) self(self, c);
    };
    for (int i = 0; i < 100000; ++i) visit(visit, decorate(sample_tree(cfg, rng), cfg, rng));
    CHECK(std::abs(static_cast<double>(vars) / leaves - 0.5) < 0.01);
    CHECK(std::abs(static_cast<double>(ints) / consts - 0.5) < 0.01);
}

TEST_CASE("resampling rules") {
    GenerationConfig cfg;
    Rng rng = make_stream(17, 0);

    const Skeleton neg_coef = skeletonize(simplify(parse_infix("-2.5*y")).expr);
    REQUIRE(neg_coef.signs() == std::vector<int>{-1});
    for (int i = 0; i < 2000; ++i) {
        const Expr e = resample_constants(neg_coef, cfg, rng);
        const double c = e.lhs().value();
        REQUIRE(c < 0.0);
        REQUIRE(c > -10.0 - 1e-12);
        REQUIRE(c != -1.0);
    }

    const Skeleton power = skeletonize(simplify(parse_infix("y**2")).expr);
    for (int i = 0; i < 2000; ++i) {
        const double p = resample_constants(power, cfg, rng).rhs().value();
        REQUIRE(p > 0.0);
        REQUIRE(p != 1.0);
    }

    const Skeleton base = skeletonize(simplify(parse_infix("2**y")).expr);
    for (int i = 0; i < 2000; ++i) REQUIRE(resample_constants(base, cfg, rng).lhs().value() != 1.0);

    const Skeleton divisor = skeletonize(simplify(parse_infix("y/(-3)+cos(y)/4")).expr);
    for (int i = 0; i < 2000; ++i)
        for (const Expr& c : constant_leaves(resample_constants(divisor, cfg, rng))) REQUIRE(std::abs(c.value()) != 1.0);
}

TEST_CASE("resampling never changes the skeleton") {
    GenerationConfig cfg;
    Rng rng = make_stream(23, 0);
    const Skeleton fixed = skeletonize(simplify(parse_infix("0.6*y**2 + 2*y + 0.1")).expr);
    for (int i = 0; i < 10000; ++i) REQUIRE(skeletonize(resample_constants(fixed, cfg, rng)) == fixed);

    int exhausted = 0;
    for (const Expr& e : testing::sampled_expressions(1000, 29)) {
        const Skeleton s = skeletonize(e);
        try {
            for (int k = 0; k < 5; ++k) REQUIRE(skeletonize(simplify(resample_constants(s, cfg, rng)).expr) == s);
        } catch (const ResampleExhausted&) {
            ++exhausted;
        }
    }
    CHECK(exhausted < 50);
}

TEST_CASE("degenerate skeletons exhaust the retry budget") {
    GenerationConfig cfg;
    Rng rng = make_stream(1, 0);
    CHECK_THROWS_AS(resample_constants(Skeleton{parse_prefix("add C0 add C1 y")}, cfg, rng), ResampleExhausted);
}

TEST_CASE("config validation") {
    GenerationConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.max_internal_nodes = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.p_symbol = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.binary_weights[0] = 0.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("sampled expressions are canonical, usable and in range") {
    GenerationConfig cfg;
    Rng rng = make_stream(31, 0);
    int kept = 0;
    for (int n = 0; n < 5000; ++n) {
        const auto e = sample_expression(cfg, rng);
        if (!e) continue;
        ++kept;
        REQUIRE(simplify(*e).expr == *e);
        REQUIRE(contains_variable(*e));
        for (const Expr& c : constant_leaves(*e)) {
            REQUIRE(c.value() != 0.0);
            REQUIRE(std::fabs(c.value()) <= 10.0);
        }
    }
    CHECK(kept > 2500);
}
