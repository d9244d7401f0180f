#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace symode {

// Closed node-kind set. Binary ops first, then unary, then leaves.
// Placeholder only occurs inside skeleton trees.
enum class Op : std::uint8_t {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Sin,
    Cos,
    Exp,
    Sqrt,
    Log,
    Neg,
    Var,
    Const,
    Placeholder,
};

inline constexpr std::size_t kOpCount = 14;

constexpr int arity(Op op) noexcept {
    switch (op) {
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
    case Op::Pow:
        return 2;
    case Op::Sin:
    case Op::Cos:
    case Op::Exp:
    case Op::Sqrt:
    case Op::Log:
    case Op::Neg:
        return 1;
    default:
        return 0;
    }
}

constexpr bool is_binary(Op op) noexcept { return arity(op) == 2; }
constexpr bool is_unary(Op op) noexcept { return arity(op) == 1; }
constexpr bool is_leaf(Op op) noexcept { return arity(op) == 0; }
constexpr bool is_operator(Op op) noexcept { return arity(op) > 0; }

/// Token name used by the prefix grammar and the vocabulary ("add", "sin", "y", ...).
std::string_view op_name(Op op) noexcept;

/// Inverse of op_name for operators and the variable; constants are not named.
std::optional<Op> op_from_name(std::string_view name) noexcept;

enum class ConstKind : std::uint8_t { Integer, Real };

/// Expression tree for f(y) with value semantics.
///
/// Constants carry a finite 64-bit value and a tag recording whether they were
/// produced as integers or reals; the tag survives printing and parsing.
/// Placeholder leaves store their pre-order index and the sign (+1/-1) of the
/// constant they replaced.
class Expr {
public:
    Expr() = default;

    static Expr var();
    static Expr constant(double value, ConstKind kind);
    static Expr integer(double value) { return constant(value, ConstKind::Integer); }
    static Expr real(double value) { return constant(value, ConstKind::Real); }
    static Expr placeholder(int index, int sign = 1);
    static Expr unary(Op op, Expr arg);
    static Expr binary(Op op, Expr lhs, Expr rhs);

    Op op() const noexcept { return op_; }
    bool is(Op op) const noexcept { return op_ == op; }
    bool is_const() const noexcept { return op_ == Op::Const; }

    double value() const noexcept { return value_; }
    ConstKind const_kind() const noexcept { return kind_; }
    int placeholder_index() const noexcept { return index_; }
    int placeholder_sign() const noexcept { return value_ < 0 ? -1 : 1; }

    std::span<const Expr> children() const noexcept { return children_; }
    const Expr& child(std::size_t i) const { return children_.at(i); }
    const Expr& lhs() const { return children_.at(0); }
    const Expr& rhs() const { return children_.at(1); }

    /// Exact equality: node kinds, constant values and tags, placeholder indices and signs.
    friend bool operator==(const Expr& a, const Expr& b);

    /// Node count; equals the prefix token count.
    std::size_t size() const noexcept;

private:
    Op op_ = Op::Var;
    ConstKind kind_ = ConstKind::Real;
    int index_ = 0;
    double value_ = 0.0;
    std::vector<Expr> children_;
};

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t position, const std::string& message);
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

/// Pre-order token list. Constants print as shortest round-trip decimals;
/// real-tagged constants always carry a '.' or exponent.
std::vector<std::string> to_prefix(const Expr& e);
std::string to_prefix_string(const Expr& e);

/// Parses whitespace-separated prefix tokens. Position in errors is the token index.
Expr parse_prefix(std::span<const std::string> tokens);
Expr parse_prefix(std::string_view text);

/// Python-style infix: `**` for pow, function-call syntax for unary ops, add chains
/// re-sugared into subtraction where a term is negative.
std::string to_infix(const Expr& e);

/// Parses the infix grammar (character position in errors):
///
///   expr  := term (('+' | '-') term)*
///   term  := unary (('*' | '/') unary)*
///   unary := '-' unary | power
///   power := atom ('**' unary)?
///   atom  := number | 'y' | 'C' digits | func '(' expr ')' | '(' expr ')'
///   func  := 'sin' | 'cos' | 'exp' | 'sqrt' | 'log'
Expr parse_infix(std::string_view text);

/// Formats a constant the way the prefix grammar prints it.
std::string format_constant(double value, ConstKind kind);

/// IEEE semantics throughout; domain violations give NaN or Inf instead of throwing.
/// Negative base with non-integer exponent is NaN. Placeholders evaluate to NaN.
double evaluate(const Expr& e, double y) noexcept;

/// Number of prefix tokens (operators, variables and constants each count one).
std::size_t complexity(const Expr& e) noexcept;

/// Number of operator nodes.
std::size_t operator_count(const Expr& e) noexcept;

bool contains_variable(const Expr& e) noexcept;

/// Constant leaves in pre-order.
std::vector<Expr> constant_leaves(const Expr& e);

} // namespace symode
