#include "symode/simplify.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

namespace symode {

namespace {

// Thrown internally when folding yields NaN/Inf.
struct InvalidFold {};

constexpr double kMaxExactInteger = 9007199254740992.0; // 2^53

Expr make_const(double v, bool integer) {
    if (!std::isfinite(v)) throw InvalidFold{};
    if (v == 0.0) v = 0.0; // drop the sign of -0
    const bool is_int = integer && v == std::trunc(v) && std::abs(v) <= kMaxExactInteger;
    return Expr::constant(v, is_int ? ConstKind::Integer : ConstKind::Real);
}

bool is_int(const Expr& c) { return c.const_kind() == ConstKind::Integer; }

bool is_const_value(const Expr& e, double v) { return e.is_const() && e.value() == v; }

struct Number {
    double value = 0.0;
    bool integer = true;
};

Expr canon(const Expr& e);
Expr canon_add(std::vector<Expr> operands);
Expr canon_mul(std::vector<Expr> operands);
Expr canon_div(Expr a, Expr b);
Expr canon_pow(Expr a, Expr b);
Expr negate(const Expr& a);

Expr build_chain(Op op, std::vector<Expr> items) {
    std::sort(items.begin(), items.end(),
              [](const Expr& a, const Expr& b) { return canonical_compare(a, b) < 0; });
    Expr acc = std::move(items.back());
    for (std::size_t i = items.size() - 1; i-- > 0;) acc = Expr::binary(op, std::move(items[i]), std::move(acc));
    return acc;
}

Expr negate(const Expr& a) {
    switch (a.op()) {
    case Op::Const:
        return make_const(-a.value(), is_int(a));
    case Op::Neg:
        return a.child(0);
    case Op::Mul:
        return canon_mul({Expr::integer(-1), a});
    case Op::Add: {
        std::vector<Expr> terms;
        const Expr* cur = &a;
        while (cur->is(Op::Add)) {
            terms.push_back(negate(cur->lhs()));
            cur = &cur->rhs();
        }
        terms.push_back(negate(*cur));
        return canon_add(std::move(terms));
    }
    case Op::Div: {
        Expr num = negate(a.lhs());
        if (num.is(Op::Neg)) return Expr::unary(Op::Neg, a);
        return canon_div(std::move(num), a.rhs());
    }
    default:
        return Expr::unary(Op::Neg, a);
    }
}

// ---- sums ------------------------------------------------------------------

void flatten_add(const Expr& e, std::vector<Expr>& out) {
    if (e.is(Op::Add)) {
        flatten_add(e.lhs(), out);
        flatten_add(e.rhs(), out);
    } else {
        out.push_back(e);
    }
}

struct Term {
    Number coef;
    Expr rest;
};

// term == coef * rest, with rest carrying no numeric coefficient.
Term split_term(const Expr& t) {
    if (t.is(Op::Neg)) {
        Term inner = split_term(t.child(0));
        inner.coef.value = -inner.coef.value;
        return inner;
    }
    if (t.is(Op::Mul) && t.lhs().is_const()) return {{t.lhs().value(), is_int(t.lhs())}, t.rhs()};
    return {{1.0, true}, t};
}

Expr make_term(const Number& c, const Expr& rest) {
    if (c.value == 1.0) return rest;
    if (c.value == -1.0) return negate(rest);
    return canon_mul({make_const(c.value, c.integer), rest});
}

Expr canon_add(std::vector<Expr> operands) {
    std::vector<Expr> flat;
    for (const auto& o : operands) flatten_add(o, flat);

    Number constant{0.0, true};
    std::vector<Term> groups;
    for (const auto& t : flat) {
        if (t.is_const()) {
            constant.value += t.value();
            constant.integer = constant.integer && is_int(t);
            continue;
        }
        Term term = split_term(t);
        auto it = std::find_if(groups.begin(), groups.end(), [&](const Term& g) { return g.rest == term.rest; });
        if (it == groups.end()) {
            groups.push_back(std::move(term));
        } else {
            it->coef.value += term.coef.value;
            it->coef.integer = it->coef.integer && term.coef.integer;
        }
    }

    std::vector<Expr> items;
    for (const auto& g : groups) {
        if (!std::isfinite(g.coef.value)) throw InvalidFold{};
        if (g.coef.value == 0.0) continue;
        items.push_back(make_term(g.coef, g.rest));
    }
    // Rebuilt terms may themselves be sums (negate distributes) or constants.
    const bool reflatten = std::any_of(items.begin(), items.end(),
                                       [](const Expr& t) { return t.is(Op::Add) || t.is_const(); });
    if (reflatten) {
        if (constant.value != 0.0) items.push_back(make_const(constant.value, constant.integer));
        return canon_add(std::move(items));
    }
    if (constant.value != 0.0 || !std::isfinite(constant.value)) {
        items.push_back(make_const(constant.value, constant.integer));
    }
    if (items.empty()) return make_const(0.0, constant.integer);
    if (items.size() == 1) return std::move(items.front());
    return build_chain(Op::Add, std::move(items));
}

// ---- products --------------------------------------------------------------

void flatten_mul(const Expr& e, Number& coef, std::vector<Expr>& out) {
    switch (e.op()) {
    case Op::Mul:
        flatten_mul(e.lhs(), coef, out);
        flatten_mul(e.rhs(), coef, out);
        break;
    case Op::Neg:
        coef.value = -coef.value;
        flatten_mul(e.child(0), coef, out);
        break;
    case Op::Const:
        coef.value *= e.value();
        coef.integer = coef.integer && is_int(e);
        break;
    default:
        out.push_back(e);
    }
}

struct Factor {
    Expr base;
    Number exponent;
};

Factor split_factor(const Expr& f) {
    if (f.is(Op::Pow) && f.rhs().is_const()) return {f.lhs(), {f.rhs().value(), is_int(f.rhs())}};
    return {f, {1.0, true}};
}

Expr canon_mul(std::vector<Expr> operands) {
    Number coef{1.0, true};
    std::vector<Expr> flat;
    for (const auto& o : operands) flatten_mul(o, coef, flat);
    if (!std::isfinite(coef.value)) throw InvalidFold{};
    if (coef.value == 0.0) return make_const(0.0, coef.integer);

    std::vector<Factor> groups;
    for (const auto& f : flat) {
        Factor factor = split_factor(f);
        auto it = std::find_if(groups.begin(), groups.end(),
                               [&](const Factor& g) { return g.base == factor.base; });
        if (it == groups.end()) {
            groups.push_back(std::move(factor));
        } else {
            it->exponent.value += factor.exponent.value;
            it->exponent.integer = it->exponent.integer && factor.exponent.integer;
        }
    }

    std::vector<Expr> factors;
    bool reflatten = false;
    for (const auto& g : groups) {
        if (g.exponent.value == 0.0) continue;
        Expr f = g.exponent.value == 1.0 ? g.base : canon_pow(g.base, make_const(g.exponent.value, g.exponent.integer));
        reflatten = reflatten || f.is(Op::Mul) || f.is(Op::Neg) || f.is_const();
        factors.push_back(std::move(f));
    }
    if (reflatten) {
        factors.push_back(make_const(coef.value, coef.integer));
        return canon_mul(std::move(factors));
    }

    if (factors.empty()) return make_const(coef.value, coef.integer);
    if (coef.value == -1.0) {
        if (factors.size() == 1) return negate(factors.front());
        return Expr::unary(Op::Neg, build_chain(Op::Mul, std::move(factors)));
    }
    if (coef.value != 1.0) factors.push_back(make_const(coef.value, coef.integer));
    if (factors.size() == 1) return std::move(factors.front());
    return build_chain(Op::Mul, std::move(factors));
}

// ---- the rest ----------------------------------------------------------------

Expr canon_div(Expr a, Expr b) {
    if (b.is_const()) {
        if (b.value() == 0.0) throw InvalidFold{};
        if (a.is_const()) return make_const(a.value() / b.value(), is_int(a) && is_int(b));
        if (b.value() == 1.0) return a;
        if (b.value() == -1.0) return negate(a);
    }
    if (is_const_value(a, 0.0)) return make_const(0.0, is_int(a));
    if (a == b) return make_const(1.0, true);
    if (b.is(Op::Neg)) return negate(canon_div(std::move(a), b.child(0)));
    if (a.is(Op::Neg)) return negate(canon_div(a.child(0), std::move(b)));
    return Expr::binary(Op::Div, std::move(a), std::move(b));
}

Expr canon_pow(Expr a, Expr b) {
    if (a.is_const() && b.is_const()) {
        return make_const(std::pow(a.value(), b.value()), is_int(a) && is_int(b) && b.value() >= 0.0);
    }
    if (b.is_const()) {
        if (b.value() == 0.0) return make_const(1.0, true);
        if (b.value() == 1.0) return a;
    }
    if (is_const_value(a, 1.0)) return make_const(1.0, true);
    return Expr::binary(Op::Pow, std::move(a), std::move(b));
}

Expr canon_unary(Op op, Expr a) {
    if (!a.is_const()) return Expr::unary(op, std::move(a));
    double v = a.value();
    switch (op) {
    case Op::Sin:
        v = std::sin(v);
        break;
    case Op::Cos:
        v = std::cos(v);
        break;
    case Op::Exp:
        v = std::exp(v);
        break;
    case Op::Sqrt:
        v = std::sqrt(v);
        break;
    case Op::Log:
        v = std::log(v);
        break;
    default:
        break;
    }
    return make_const(v, false);
}

Expr canon(const Expr& e) {
    switch (e.op()) {
    case Op::Var:
    case Op::Placeholder:
        return e;
    case Op::Const:
        return make_const(e.value(), is_int(e));
    case Op::Add:
        return canon_add({canon(e.lhs()), canon(e.rhs())});
    case Op::Sub:
        return canon_add({canon(e.lhs()), negate(canon(e.rhs()))});
    case Op::Mul:
        return canon_mul({canon(e.lhs()), canon(e.rhs())});
    case Op::Div:
        return canon_div(canon(e.lhs()), canon(e.rhs()));
    case Op::Pow:
        return canon_pow(canon(e.lhs()), canon(e.rhs()));
    case Op::Neg:
        return negate(canon(e.child(0)));
    default:
        return canon_unary(e.op(), canon(e.child(0)));
    }
}

constexpr int rank(Op op) noexcept {
    switch (op) {
    case Op::Const:
        return 0;
    case Op::Placeholder:
        return 1;
    case Op::Var:
        return 2;
    case Op::Pow:
        return 3;
    case Op::Mul:
        return 4;
    case Op::Div:
        return 5;
    case Op::Add:
        return 6;
    case Op::Sub:
        return 7;
    case Op::Neg:
        return 8;
    case Op::Sin:
        return 9;
    case Op::Cos:
        return 10;
    case Op::Exp:
        return 11;
    case Op::Sqrt:
        return 12;
    case Op::Log:
        return 13;
    }
    return 14;
}

template <typename T>
int three_way(const T& a, const T& b) {
    return a < b ? -1 : (b < a ? 1 : 0);
}

int value_compare(const Expr& a, const Expr& b) noexcept {
    if (a.is_const()) {
        if (int c = three_way(a.value(), b.value())) return c;
        return three_way(static_cast<int>(a.const_kind()), static_cast<int>(b.const_kind()));
    }
    for (std::size_t i = 0; i < a.children().size(); ++i) {
        if (int c = value_compare(a.children()[i], b.children()[i])) return c;
    }
    return 0;
}

bool walk_signs(const Expr& e, std::vector<int>& out) {
    if (e.is(Op::Placeholder)) out.push_back(e.placeholder_sign());
    for (const auto& c : e.children()) walk_signs(c, out);
    return true;
}

Expr to_skeleton(const Expr& e, int& next) {
    switch (e.op()) {
    case Op::Const:
        return Expr::placeholder(next++, std::signbit(e.value()) ? -1 : 1);
    case Op::Placeholder:
        return Expr::placeholder(next++, e.placeholder_sign());
    case Op::Var:
        return e;
    default:
        break;
    }
    if (is_unary(e.op())) return Expr::unary(e.op(), to_skeleton(e.child(0), next));
    Expr lhs = to_skeleton(e.lhs(), next);
    Expr rhs = to_skeleton(e.rhs(), next);
    return Expr::binary(e.op(), std::move(lhs), std::move(rhs));
}

Expr fill(const Expr& e, std::span<const Expr> values) {
    switch (e.op()) {
    case Op::Placeholder:
        return values[static_cast<std::size_t>(e.placeholder_index())];
    case Op::Const:
    case Op::Var:
        return e;
    default:
        break;
    }
    if (is_unary(e.op())) return Expr::unary(e.op(), fill(e.child(0), values));
    return Expr::binary(e.op(), fill(e.lhs(), values), fill(e.rhs(), values));
}

} // namespace

Simplified simplify(const Expr& e) {
    if (!within_distribution(e)) return {e, false, false};
    try {
        Expr out = canon(e);
        const bool constant = !contains_variable(out);
        return {std::move(out), within_distribution(out), constant};
    } catch (const InvalidFold&) {
        return {e, false, false};
    }
}

int shape_compare(const Expr& a, const Expr& b) noexcept {
    if (int c = three_way(rank(a.op()), rank(b.op()))) return c;
    if (a.is(Op::Placeholder)) return three_way(a.placeholder_index(), b.placeholder_index());
    for (std::size_t i = 0; i < a.children().size(); ++i) {
        if (int c = shape_compare(a.children()[i], b.children()[i])) return c;
    }
    return 0;
}

int canonical_compare(const Expr& a, const Expr& b) noexcept {
    if (int c = shape_compare(a, b)) return c;
    return value_compare(a, b);
}

bool same_value_tree(const Expr& a, const Expr& b) noexcept {
    if (a.op() != b.op()) return false;
    if (a.is_const()) return a.value() == b.value();
    if (a.is(Op::Placeholder)) return a.placeholder_index() == b.placeholder_index();
    for (std::size_t i = 0; i < a.children().size(); ++i) {
        if (!same_value_tree(a.children()[i], b.children()[i])) return false;
    }
    return true;
}

bool within_distribution(const Expr& e) noexcept {
    switch (e.op()) {
    case Op::Placeholder:
        return false;
    case Op::Const:
        return std::isfinite(e.value());
    case Op::Var:
        return true;
    default:
        break;
    }
    for (const auto& c : e.children()) {
        if (!within_distribution(c)) return false;
    }
    return static_cast<std::size_t>(e.op()) < kOpCount;
}

std::vector<int> Skeleton::signs() const {
    std::vector<int> out;
    walk_signs(tree, out);
    return out;
}

Skeleton skeletonize(const Expr& e) {
    int next = 0;
    return {to_skeleton(e, next)};
}

Expr fill_placeholders(const Expr& tree, std::span<const Expr> values) { return fill(tree, values); }

} // namespace symode
