#include "symode/codec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace symode {

Vocabulary::Vocabulary(std::vector<std::string> symbols, GridSpec grid) : tokens_(std::move(symbols)), grid_(grid) {
    if (grid_.points < 2 || !(grid_.min < grid_.max)) throw std::invalid_argument("grid needs >= 2 increasing points");
    first_grid_ = static_cast<int>(tokens_.size());
    for (int k = 1; k <= grid_.points; ++k) tokens_.push_back("x_" + std::to_string(k));
    for (std::size_t a = 0; a < tokens_.size(); ++a)
        for (std::size_t b = a + 1; b < tokens_.size(); ++b)
            if (tokens_[a] == tokens_[b]) throw std::invalid_argument("duplicate token " + tokens_[a]);
    const auto bos = id("BOS"), eos = id("EOS");
    if (!bos || !eos) throw std::invalid_argument("vocabulary needs BOS and EOS");
    bos_ = *bos;
    eos_ = *eos;
    pad_ = id("PAD");
}

Vocabulary Vocabulary::standard() {
    std::vector<std::string> symbols{"PAD", "BOS", "EOS"};
    for (Op op : {Op::Var, Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Pow, Op::Sin, Op::Cos, Op::Exp, Op::Sqrt, Op::Log,
                  Op::Neg})
        symbols.emplace_back(op_name(op));
    return Vocabulary(std::move(symbols), GridSpec{});
}

std::optional<int> Vocabulary::id(std::string_view token) const {
    const auto it = std::find(tokens_.begin(), tokens_.end(), token);
    if (it == tokens_.end()) return std::nullopt;
    return static_cast<int>(it - tokens_.begin());
}

int Vocabulary::id_of(Op op) const {
    const auto found = id(op_name(op));
    if (!found || is_grid(*found)) throw std::invalid_argument("vocabulary has no token for " + std::string(op_name(op)));
    return *found;
}

nlohmann::json Vocabulary::to_json() const {
    nlohmann::json ids = nlohmann::json::object();
    for (int i = 0; i < size(); ++i) ids[tokens_[static_cast<std::size_t>(i)]] = i;
    return {{"version", kVersion},
            {"size", size()},
            {"tokens", tokens_},
            {"ids", ids},
            {"grid", {{"min", grid_.min}, {"max", grid_.max}, {"points", grid_.points}, {"first_id", first_grid_}}}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
    if (j.at("version").get<int>() != kVersion) throw std::invalid_argument("unsupported vocabulary version");
    const auto& g = j.at("grid");
    const GridSpec grid{g.at("min").get<double>(), g.at("max").get<double>(), g.at("points").get<int>()};
    auto tokens = j.at("tokens").get<std::vector<std::string>>();
    const int first = g.at("first_id").get<int>();
    if (first < 0 || static_cast<std::size_t>(first) + static_cast<std::size_t>(grid.points) != tokens.size())
        throw std::invalid_argument("vocabulary grid does not match token list");
    tokens.resize(static_cast<std::size_t>(first));
    Vocabulary v(std::move(tokens), grid);
    if (v.to_json() != j) throw std::invalid_argument("vocabulary document is inconsistent");
    return v;
}

// Measuring from the endpoint nearer zero keeps c - endpoint exact on unit grids.
double TwoHot::value(const GridSpec& grid) const noexcept {
    const double left = grid.value(i);
    const double right = grid.value(i + 1);
    if (beta == 0.0) return left;
    if (alpha == 0.0) return right;
    if (std::abs(right) < std::abs(left)) return right - alpha * (right - left);
    return left + beta * (right - left);
}

ConstantOutOfRange::ConstantOutOfRange(double value)
    : std::domain_error("constant " + format_constant(value, ConstKind::Real) + " outside the token grid"),
      value_(value) {}

TwoHot two_hot_encode(double c, const GridSpec& grid) {
    if (!(c >= grid.min && c <= grid.max)) throw ConstantOutOfRange(c);
    const double step = (grid.max - grid.min) / (grid.points - 1);
    int i = static_cast<int>(std::floor((c - grid.min) / step));
    i = std::clamp(i, 0, grid.points - 2);
    while (i > 0 && grid.value(i) > c) --i;
    while (i < grid.points - 2 && grid.value(i + 1) <= c) ++i;
    const double left = grid.value(i);
    const double right = grid.value(i + 1);
    if (c == left) return {i, 1.0, 0.0};
    if (std::abs(right) < std::abs(left)) {
        const double alpha = std::clamp((right - c) / (right - left), 0.0, 1.0);
        return {i, alpha, 1.0 - alpha};
    }
    const double beta = std::clamp((c - left) / (right - left), 0.0, 1.0);
    return {i, 1.0 - beta, beta};
}

Eigen::VectorXd item_targets(const SeqItem& item, const Vocabulary& vocab) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(vocab.size());
    if (const auto* tok = std::get_if<TokenId>(&item)) {
        p[tok->id] = 1.0;
    } else {
        const auto& c = std::get<TwoHot>(item);
        p[vocab.grid_id(c.i)] += c.alpha;
        if (c.beta > 0.0) p[vocab.grid_id(c.i) + 1] += c.beta;
    }
    return p;
}

TwoHot refine_constant(std::span<const double> logits, const Vocabulary& vocab, int id) {
    const int k = vocab.grid_index(id);
    const int last = vocab.grid().points - 1;
    int neighbor;
    if (k == 0) {
        neighbor = 1;
    } else if (k == last) {
        neighbor = last - 1;
    } else {
        const double left = logits[static_cast<std::size_t>(id - 1)];
        const double right = logits[static_cast<std::size_t>(id + 1)];
        neighbor = left > right ? k - 1 : k + 1;
    }
    // The softmax normalizer cancels in the renormalized pair.
    const double la = logits[static_cast<std::size_t>(vocab.grid_id(std::min(k, neighbor)))];
    const double lb = logits[static_cast<std::size_t>(vocab.grid_id(std::max(k, neighbor)))];
    const double top = std::max(la, lb);
    const double pa = std::exp(la - top), pb = std::exp(lb - top);
    return {std::min(k, neighbor), pa / (pa + pb), pb / (pa + pb)};
}

SeqItem two_hot_decode(std::span<const double> logits, const Vocabulary& vocab) {
    if (logits.size() != static_cast<std::size_t>(vocab.size()))
        throw std::invalid_argument("logit count does not match the vocabulary");
    const int best = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (!vocab.is_grid(best)) return TokenId{best};
    return refine_constant(logits, vocab, best);
}

TokenSeq tokenize_expr(const Expr& e, const Vocabulary& vocab) {
    TokenSeq seq{TokenId{vocab.bos()}};
    auto visit = [&](auto&& self, const Expr& node) -> void {
        if (node.is_const()) {
            seq.emplace_back(two_hot_encode(node.value(), vocab.grid()));
            return;
        }
        if (node.is(Op::Placeholder)) throw std::invalid_argument("cannot tokenize a placeholder");
        seq.emplace_back(TokenId{vocab.id_of(node.op())});
        for (const Expr& c : node.children()) self(self, c);
    };
    visit(visit, e);
    seq.emplace_back(TokenId{vocab.eos()});
    return seq;
}

Expr detokenize(const TokenSeq& seq, const Vocabulary& vocab) {
    if (seq.size() < 3 || seq.front() != SeqItem{TokenId{vocab.bos()}} || seq.back() != SeqItem{TokenId{vocab.eos()}})
        throw DetokenizeError("sequence must start with BOS and end with EOS");
    std::size_t pos = 1;
    const std::size_t end = seq.size() - 1;
    auto read = [&](auto&& self) -> Expr {
        if (pos >= end) throw DetokenizeError("sequence ends before the expression is complete");
        const SeqItem& item = seq[pos++];
        if (const auto* c = std::get_if<TwoHot>(&item)) {
            if (c->i < 0 || c->i + 1 >= vocab.grid().points) throw DetokenizeError("grid index out of range");
            const double v = c->value(vocab.grid());
            const bool integral = (c->beta == 0.0 || c->alpha == 0.0) && v == std::trunc(v);
            return Expr::constant(v, integral ? ConstKind::Integer : ConstKind::Real);
        }
        const int id = std::get<TokenId>(item).id;
        if (id < 0 || id >= vocab.size()) throw DetokenizeError("token id out of range");
        if (vocab.is_grid(id)) {
            const double v = vocab.grid().value(vocab.grid_index(id));
            return Expr::constant(v, v == std::trunc(v) ? ConstKind::Integer : ConstKind::Real);
        }
        const auto op = op_from_name(vocab.token(id));
        if (!op) throw DetokenizeError("token " + vocab.token(id) + " cannot appear inside an expression");
        if (*op == Op::Var) return Expr::var();
        if (is_unary(*op)) return Expr::unary(*op, self(self));
        Expr lhs = self(self);
        Expr rhs = self(self);
        return Expr::binary(*op, std::move(lhs), std::move(rhs));
    };
    Expr e = read(read);
    if (pos != end) throw DetokenizeError("trailing items after a complete expression");
    return e;
}

TrajectoryTokens encode_trajectory(const Eigen::VectorXd& t, const Eigen::VectorXd& y) {
    if (t.size() != y.size()) throw std::invalid_argument("t and y differ in length");
    TrajectoryTokens out(t.size(), 2);
    out.col(0) = t.unaryExpr([](double v) { return encode_float64(v); });
    out.col(1) = y.unaryExpr([](double v) { return encode_float64(v); });
    return out;
}

} // namespace symode
