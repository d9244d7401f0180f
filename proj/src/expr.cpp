#include "symode/expr.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

namespace symode {

namespace {

constexpr std::array<std::string_view, kOpCount> kOpNames = {
    "add", "sub", "mul", "div", "pow", "sin", "cos", "exp", "sqrt", "log", "neg", "y", "const", "C",
};

} // namespace

std::string_view op_name(Op op) noexcept { return kOpNames[static_cast<std::size_t>(op)]; }

std::optional<Op> op_from_name(std::string_view name) noexcept {
    for (std::size_t i = 0; i <= static_cast<std::size_t>(Op::Var); ++i) {
        if (kOpNames[i] == name) return static_cast<Op>(i);
    }
    return std::nullopt;
}

Expr Expr::var() {
    Expr e;
    e.op_ = Op::Var;
    return e;
}

Expr Expr::constant(double value, ConstKind kind) {
    if (!std::isfinite(value)) throw std::invalid_argument("constant must be finite");
    Expr e;
    e.op_ = Op::Const;
    e.value_ = value;
    e.kind_ = kind;
    return e;
}

Expr Expr::placeholder(int index, int sign) {
    Expr e;
    e.op_ = Op::Placeholder;
    e.index_ = index;
    e.value_ = sign < 0 ? -1.0 : 1.0;
    return e;
}

Expr Expr::unary(Op op, Expr arg) {
    if (!is_unary(op)) throw std::invalid_argument("not a unary operator");
    Expr e;
    e.op_ = op;
    e.children_.push_back(std::move(arg));
    return e;
}

Expr Expr::binary(Op op, Expr lhs, Expr rhs) {
    if (!is_binary(op)) throw std::invalid_argument("not a binary operator");
    Expr e;
    e.op_ = op;
    e.children_.reserve(2);
    e.children_.push_back(std::move(lhs));
    e.children_.push_back(std::move(rhs));
    return e;
}

bool operator==(const Expr& a, const Expr& b) {
    if (a.op_ != b.op_) return false;
    switch (a.op_) {
    case Op::Const:
        if (a.value_ != b.value_ || a.kind_ != b.kind_) return false;
        break;
    case Op::Placeholder:
        if (a.index_ != b.index_ || a.value_ != b.value_) return false;
        break;
    default:
        break;
    }
    return a.children_ == b.children_;
}

std::size_t Expr::size() const noexcept {
    std::size_t n = 1;
    for (const auto& c : children_) n += c.size();
    return n;
}

ParseError::ParseError(std::size_t position, const std::string& message)
    : std::runtime_error("parse error at " + std::to_string(position) + ": " + message),
      position_(position) {}

std::string format_constant(double value, ConstKind kind) {
    std::array<char, 64> buf{};
    if (kind == ConstKind::Integer) {
        auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value, std::chars_format::fixed);
        return std::string(buf.data(), end);
    }
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    std::string s(buf.data(), end);
    if (s.find_first_of(".e") == std::string::npos) s += ".0";
    return s;
}

// ---------------------------------------------------------------------------
// Prefix

namespace {

void append_prefix(const Expr& e, std::vector<std::string>& out) {
    switch (e.op()) {
    case Op::Const:
        out.push_back(format_constant(e.value(), e.const_kind()));
        return;
    case Op::Placeholder:
        out.push_back("C" + std::to_string(e.placeholder_index()));
        return;
    default:
        out.emplace_back(op_name(e.op()));
        for (const auto& c : e.children()) append_prefix(c, out);
    }
}

// Decimal literal: -?(digits(.digits*)?|.digits)([eE][+-]?digits)?
// Returns the length of the longest numeric prefix of s, or 0.
std::size_t scan_number(std::string_view s, bool allow_sign, bool& is_real) {
    std::size_t i = 0;
    is_real = false;
    if (allow_sign && i < s.size() && s[i] == '-') ++i;
    std::size_t digits = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i, ++digits;
    if (i < s.size() && s[i] == '.') {
        is_real = true;
        ++i;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i, ++digits;
    }
    if (digits == 0) return 0;
    if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
        std::size_t j = i + 1;
        if (j < s.size() && (s[j] == '+' || s[j] == '-')) ++j;
        std::size_t exp_digits = 0;
        while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j, ++exp_digits;
        if (exp_digits > 0) {
            is_real = true;
            i = j;
        }
    }
    return i;
}

std::optional<Expr> number_from(std::string_view text, bool is_real) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) return std::nullopt;
    if (!is_real && v != std::trunc(v)) return std::nullopt;
    return Expr::constant(v, is_real ? ConstKind::Real : ConstKind::Integer);
}

std::optional<int> placeholder_from(std::string_view tok) {
    if (tok.size() < 2 || tok[0] != 'C') return std::nullopt;
    int idx = 0;
    auto [ptr, ec] = std::from_chars(tok.data() + 1, tok.data() + tok.size(), idx);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || idx < 0) return std::nullopt;
    return idx;
}

class PrefixParser {
public:
    explicit PrefixParser(std::span<const std::string> tokens) : tokens_(tokens) {}

    Expr parse_all() {
        if (tokens_.empty()) throw ParseError(0, "empty expression");
        Expr e = parse();
        if (pos_ != tokens_.size()) throw ParseError(pos_, "trailing token '" + tokens_[pos_] + "'");
        return e;
    }

private:
    Expr parse() {
        if (pos_ >= tokens_.size()) throw ParseError(pos_, "unexpected end of input (arity mismatch)");
        const std::size_t at = pos_;
        const std::string& tok = tokens_[pos_++];
        if (auto op = op_from_name(tok)) {
            switch (arity(*op)) {
            case 0:
                return Expr::var();
            case 1:
                return Expr::unary(*op, parse());
            default: {
                Expr lhs = parse();
                Expr rhs = parse();
                return Expr::binary(*op, std::move(lhs), std::move(rhs));
            }
            }
        }
        if (auto idx = placeholder_from(tok)) return Expr::placeholder(*idx);
        bool is_real = false;
        if (scan_number(tok, true, is_real) == tok.size()) {
            if (auto c = number_from(tok, is_real)) return *c;
        }
        throw ParseError(at, "unknown symbol '" + tok + "'");
    }

    std::span<const std::string> tokens_;
    std::size_t pos_ = 0;
};

} // namespace

std::vector<std::string> to_prefix(const Expr& e) {
    std::vector<std::string> out;
    out.reserve(e.size());
    append_prefix(e, out);
    return out;
}

std::string to_prefix_string(const Expr& e) {
    std::string s;
    for (const auto& tok : to_prefix(e)) {
        if (!s.empty()) s += ' ';
        s += tok;
    }
    return s;
}

Expr parse_prefix(std::span<const std::string> tokens) { return PrefixParser(tokens).parse_all(); }

Expr parse_prefix(std::string_view text) {
    std::vector<std::string> tokens;
    std::istringstream in{std::string(text)};
    std::string tok;
    while (in >> tok) tokens.push_back(tok);
    return parse_prefix(tokens);
}

// ---------------------------------------------------------------------------
// Infix

namespace {

enum Prec : int { kAdd = 1, kMul = 2, kUnary = 3, kPow = 4, kAtom = 5 };

struct Printed {
    std::string text;
    int prec;
};

Printed render(const Expr& e);

std::string wrap(const Printed& p, int min_prec) {
    return p.prec < min_prec ? "(" + p.text + ")" : p.text;
}

void flatten_chain(const Expr& e, Op op, std::vector<const Expr*>& out) {
    if (e.is(op)) {
        for (const auto& c : e.children()) flatten_chain(c, op, out);
    } else {
        out.push_back(&e);
    }
}

// For subtraction re-sugaring: if `term` reads as a negated expression, return the
// positive counterpart.
std::optional<Expr> negated_term(const Expr& term) {
    if (term.is(Op::Neg)) return term.child(0);
    if (term.is_const() && std::signbit(term.value())) return Expr::constant(-term.value(), term.const_kind());
    if (term.is(Op::Mul) && term.lhs().is_const() && std::signbit(term.lhs().value())) {
        return Expr::binary(Op::Mul, Expr::constant(-term.lhs().value(), term.lhs().const_kind()), term.rhs());
    }
    return std::nullopt;
}

Printed render(const Expr& e) {
    switch (e.op()) {
    case Op::Var:
        return {"y", kAtom};
    case Op::Const: {
        auto s = format_constant(e.value(), e.const_kind());
        return {s, s.front() == '-' ? kUnary : kAtom};
    }
    case Op::Placeholder:
        return {"C" + std::to_string(e.placeholder_index()), kAtom};
    case Op::Add: {
        std::vector<const Expr*> terms;
        flatten_chain(e, Op::Add, terms);
        std::string s = render(*terms.front()).text;
        for (std::size_t i = 1; i < terms.size(); ++i) {
            if (auto pos = negated_term(*terms[i])) {
                s += " - " + wrap(render(*pos), kMul);
            } else {
                s += " + " + wrap(render(*terms[i]), kMul);
            }
        }
        return {s, kAdd};
    }
    case Op::Sub:
        return {wrap(render(e.lhs()), kAdd) + " - " + wrap(render(e.rhs()), kMul), kAdd};
    case Op::Mul: {
        std::vector<const Expr*> factors;
        flatten_chain(e, Op::Mul, factors);
        std::string s = wrap(render(*factors.front()), kMul);
        for (std::size_t i = 1; i < factors.size(); ++i) s += "*" + wrap(render(*factors[i]), kUnary);
        return {s, kMul};
    }
    case Op::Div:
        return {wrap(render(e.lhs()), kMul) + "/" + wrap(render(e.rhs()), kUnary), kMul};
    case Op::Pow:
        return {wrap(render(e.lhs()), kAtom) + "**" + wrap(render(e.rhs()), kPow), kPow};
    case Op::Neg:
        return {"-" + wrap(render(e.child(0)), kPow), kUnary};
    default:
        return {std::string(op_name(e.op())) + "(" + render(e.child(0)).text + ")", kAtom};
    }
}

class InfixParser {
public:
    explicit InfixParser(std::string_view text) : s_(text) {}

    Expr parse_all() {
        Expr e = expr();
        skip_ws();
        if (pos_ != s_.size()) fail("unexpected character '" + std::string(1, s_[pos_]) + "'");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(pos_, msg); }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool accept(std::string_view tok) {
        skip_ws();
        if (s_.substr(pos_, tok.size()) == tok) {
            pos_ += tok.size();
            return true;
        }
        return false;
    }

    bool peek(std::string_view tok) {
        skip_ws();
        return s_.substr(pos_, tok.size()) == tok;
    }

    Expr expr() {
        Expr lhs = term();
        while (true) {
            if (accept("+")) {
                lhs = Expr::binary(Op::Add, std::move(lhs), term());
            } else if (accept("-")) {
                lhs = Expr::binary(Op::Sub, std::move(lhs), term());
            } else {
                return lhs;
            }
        }
    }

    Expr term() {
        Expr lhs = unary();
        while (true) {
            if (peek("**")) return lhs;
            if (accept("*")) {
                lhs = Expr::binary(Op::Mul, std::move(lhs), unary());
            } else if (accept("/")) {
                lhs = Expr::binary(Op::Div, std::move(lhs), unary());
            } else {
                return lhs;
            }
        }
    }

    Expr unary() {
        if (accept("-")) return Expr::unary(Op::Neg, unary());
        return power();
    }

    Expr power() {
        Expr base = atom();
        if (accept("**")) return Expr::binary(Op::Pow, std::move(base), unary());
        return base;
    }

    Expr atom() {
        skip_ws();
        if (pos_ >= s_.size()) fail("unexpected end of input");
        if (accept("(")) {
            Expr e = expr();
            if (!accept(")")) fail("expected ')'");
            return e;
        }
        const char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            bool is_real = false;
            const std::size_t len = scan_number(s_.substr(pos_), false, is_real);
            if (len == 0) fail("malformed number");
            auto num = number_from(s_.substr(pos_, len), is_real);
            if (!num) fail("malformed number");
            pos_ += len;
            return *num;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            const std::size_t start = pos_;
            while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            const std::string_view ident = s_.substr(start, pos_ - start);
            if (ident == "y") return Expr::var();
            if (auto idx = placeholder_from(ident)) return Expr::placeholder(*idx);
            auto op = op_from_name(ident);
            if (!op || !is_unary(*op) || *op == Op::Neg) {
                pos_ = start;
                fail("unknown symbol '" + std::string(ident) + "'");
            }
            if (!accept("(")) fail("expected '(' after " + std::string(ident));
            Expr arg = expr();
            if (!accept(")")) fail("expected ')'");
            return Expr::unary(*op, std::move(arg));
        }
        fail("unexpected character '" + std::string(1, c) + "'");
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

} // namespace

std::string to_infix(const Expr& e) { return render(e).text; }

Expr parse_infix(std::string_view text) { return InfixParser(text).parse_all(); }

// ---------------------------------------------------------------------------

double evaluate(const Expr& e, double y) noexcept {
    switch (e.op()) {
    case Op::Var:
        return y;
    case Op::Const:
        return e.value();
    case Op::Placeholder:
        return std::numeric_limits<double>::quiet_NaN();
    case Op::Add:
        return evaluate(e.lhs(), y) + evaluate(e.rhs(), y);
    case Op::Sub:
        return evaluate(e.lhs(), y) - evaluate(e.rhs(), y);
    case Op::Mul:
        return evaluate(e.lhs(), y) * evaluate(e.rhs(), y);
    case Op::Div:
        return evaluate(e.lhs(), y) / evaluate(e.rhs(), y);
    case Op::Pow:
        return std::pow(evaluate(e.lhs(), y), evaluate(e.rhs(), y));
    case Op::Sin:
        return std::sin(evaluate(e.child(0), y));
    case Op::Cos:
        return std::cos(evaluate(e.child(0), y));
    case Op::Exp:
        return std::exp(evaluate(e.child(0), y));
    case Op::Sqrt:
        return std::sqrt(evaluate(e.child(0), y));
    case Op::Log:
        return std::log(evaluate(e.child(0), y));
    case Op::Neg:
        return -evaluate(e.child(0), y);
    }
    return std::numeric_limits<double>::quiet_NaN();
}

std::size_t complexity(const Expr& e) noexcept { return e.size(); }

std::size_t operator_count(const Expr& e) noexcept {
    std::size_t n = is_operator(e.op()) ? 1 : 0;
    for (const auto& c : e.children()) n += operator_count(c);
    return n;
}

bool contains_variable(const Expr& e) noexcept {
    if (e.is(Op::Var)) return true;
    for (const auto& c : e.children()) {
        if (contains_variable(c)) return true;
    }
    return false;
}

namespace {
void collect_constants(const Expr& e, std::vector<Expr>& out) {
    if (e.is_const()) out.push_back(e);
    for (const auto& c : e.children()) collect_constants(c, out);
}
} // namespace

std::vector<Expr> constant_leaves(const Expr& e) {
    std::vector<Expr> out;
    collect_constants(e, out);
    return out;
}

} // namespace symode
