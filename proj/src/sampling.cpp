#include "symode/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace symode {

Rng make_stream(std::uint64_t master_seed, std::uint64_t stream, std::uint64_t salt) {
    auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
    auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    std::seed_seq seq{lo(master_seed), hi(master_seed), lo(stream), hi(stream), lo(salt), hi(salt)};
    return Rng(seq);
}

void GenerationConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("GenerationConfig: " + what); };
    if (max_internal_nodes < 1) fail("K must be >= 1");
    for (const auto* weights : {&binary_weights, &unary_weights}) {
        double sum = 0.0;
        for (double w : *weights) {
            if (w < 0.0) fail("operator weights must be nonnegative");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-9) fail("operator weights must sum to 1");
    }
    if (!(p_symbol > 0.0 && p_symbol < 1.0)) fail("p_sym must lie in (0, 1)");
    if (!(p_integer >= 0.0 && p_integer <= 1.0)) fail("p_integer must lie in [0, 1]");
    if (int_min > -1 || int_max < 1) fail("integer range must straddle 0");
    if (!(real_min < 0.0 && real_max > 0.0)) fail("real range must straddle 0");
    if (n_const < 1) fail("N_const must be >= 1");
}

namespace {

constexpr int kMaxCountable = 40;

const std::vector<std::uint64_t>& tree_counts() {
    static const std::vector<std::uint64_t> table = [] {
        std::vector<std::uint64_t> t{1};
        for (int n = 1; n <= kMaxCountable; ++n) {
            std::uint64_t total = t[n - 1];
            bool overflow = false;
            for (int i = 0; i < n; ++i) {
                std::uint64_t prod = 0;
                overflow = overflow || __builtin_mul_overflow(t[i], t[n - 1 - i], &prod);
                overflow = overflow || __builtin_add_overflow(total, prod, &total);
            }
            if (overflow || total > (std::uint64_t{1} << 63)) break;
            t.push_back(total);
        }
        return t;
    }();
    return table;
}

std::uint64_t uniform_below(std::uint64_t bound, Rng& rng) {
    return std::uniform_int_distribution<std::uint64_t>(0, bound - 1)(rng);
}

void grow(int n, Rng& rng, std::vector<std::uint8_t>& out) {
    if (n == 0) {
        out.push_back(0);
        return;
    }
    const auto& t = tree_counts();
    std::uint64_t r = uniform_below(t[n], rng);
    if (r < t[n - 1]) {
        out.push_back(1);
        grow(n - 1, rng, out);
        return;
    }
    r -= t[n - 1];
    for (int left = 0; left < n; ++left) {
        const std::uint64_t w = t[left] * t[n - 1 - left];
        if (r < w) {
            out.push_back(2);
            grow(left, rng, out);
            grow(n - 1 - left, rng, out);
            return;
        }
        r -= w;
    }
}

Expr decorate_at(const TreeShape& shape, std::size_t& pos, DecorationSource& source) {
    if (pos >= shape.arities.size()) throw std::invalid_argument("malformed tree shape");
    switch (shape.arities[pos++]) {
    case 0:
        return source.leaf();
    case 1: {
        const Op op = source.unary_op();
        return Expr::unary(op, decorate_at(shape, pos, source));
    }
    case 2: {
        const Op op = source.binary_op();
        Expr lhs = decorate_at(shape, pos, source);
        Expr rhs = decorate_at(shape, pos, source);
        return Expr::binary(op, std::move(lhs), std::move(rhs));
    }
    default:
        throw std::invalid_argument("malformed tree shape");
    }
}

class RandomDecoration final : public DecorationSource {
public:
    RandomDecoration(const GenerationConfig& cfg, Rng& rng)
        : cfg_(cfg), rng_(rng), binary_(cfg.binary_weights.begin(), cfg.binary_weights.end()),
          unary_(cfg.unary_weights.begin(), cfg.unary_weights.end()) {}

    Op binary_op() override { return kBinaryOps[binary_(rng_)]; }
    Op unary_op() override { return kUnaryOps[unary_(rng_)]; }
    Expr leaf() override {
        if (std::bernoulli_distribution(cfg_.p_symbol)(rng_)) return Expr::var();
        return sample_constant(cfg_, rng_);
    }

private:
    const GenerationConfig& cfg_;
    Rng& rng_;
    std::discrete_distribution<std::size_t> binary_;
    std::discrete_distribution<std::size_t> unary_;
};

double draw_real(double lo, double hi, Rng& rng) {
    std::uniform_real_distribution<double> dist(lo, hi);
    while (true) {
        const double v = dist(rng);
        if (v != lo && v != 0.0) return v;
    }
}

// Values a placeholder may not take beyond 0, given where it sits.
struct Slot {
    int sign = 1;
    bool forbid_one = false;
    bool forbid_minus_one = false;
};

void collect_slots(const Expr& e, Op parent, std::size_t position, std::vector<Slot>& out) {
    if (e.is(Op::Placeholder)) {
        Slot s;
        s.sign = e.placeholder_sign();
        const bool unit_sensitive = parent == Op::Mul || (parent == Op::Pow && position == 1) ||
                                    (parent == Op::Div && position == 1);
        s.forbid_one = unit_sensitive || (parent == Op::Pow && position == 0);
        s.forbid_minus_one = unit_sensitive;
        out.push_back(s);
        return;
    }
    for (std::size_t i = 0; i < e.children().size(); ++i) collect_slots(e.children()[i], e.op(), i, out);
}

Expr draw_for_slot(const Slot& slot, const GenerationConfig& cfg, Rng& rng) {
    if (std::bernoulli_distribution(cfg.p_integer)(rng)) {
        const int lo = slot.sign < 0 ? cfg.int_min : 1;
        const int hi = slot.sign < 0 ? -1 : cfg.int_max;
        return Expr::integer(static_cast<double>(std::uniform_int_distribution<int>(lo, hi)(rng)));
    }
    return Expr::real(slot.sign < 0 ? draw_real(cfg.real_min, 0.0, rng) : -draw_real(-cfg.real_max, 0.0, rng));
}

bool slot_accepts(const Slot& slot, double v) {
    if (v == 0.0 || (v < 0.0) != (slot.sign < 0)) return false;
    if (slot.forbid_one && v == 1.0) return false;
    if (slot.forbid_minus_one && v == -1.0) return false;
    return true;
}

} // namespace

std::uint64_t count_trees(int internal_nodes) {
    if (internal_nodes < 0) throw std::invalid_argument("internal node count must be >= 0");
    const auto& t = tree_counts();
    if (static_cast<std::size_t>(internal_nodes) >= t.size()) throw std::overflow_error("tree count overflows");
    return t[internal_nodes];
}

std::size_t TreeShape::internal_nodes() const {
    return static_cast<std::size_t>(std::count_if(arities.begin(), arities.end(), [](auto a) { return a > 0; }));
}

TreeShape sample_tree_of_size(int n, Rng& rng) {
    count_trees(n); // range check
    TreeShape shape;
    grow(n, rng, shape.arities);
    return shape;
}

TreeShape sample_tree(const GenerationConfig& cfg, Rng& rng) {
    std::uint64_t total = 0;
    for (int n = 1; n <= cfg.max_internal_nodes; ++n) total += count_trees(n);
    std::uint64_t r = uniform_below(total, rng);
    int n = 1;
    while (r >= count_trees(n)) r -= count_trees(n++);
    return sample_tree_of_size(n, rng);
}

Expr decorate(const TreeShape& shape, DecorationSource& source) {
    std::size_t pos = 0;
    Expr e = decorate_at(shape, pos, source);
    if (pos != shape.arities.size()) throw std::invalid_argument("malformed tree shape");
    return e;
}

Expr decorate(const TreeShape& shape, const GenerationConfig& cfg, Rng& rng) {
    RandomDecoration source(cfg, rng);
    return decorate(shape, source);
}

Expr sample_constant(const GenerationConfig& cfg, Rng& rng) {
    if (std::bernoulli_distribution(cfg.p_integer)(rng)) {
        while (true) {
            const int v = std::uniform_int_distribution<int>(cfg.int_min, cfg.int_max)(rng);
            if (v != 0) return Expr::integer(static_cast<double>(v));
        }
    }
    return Expr::real(draw_real(cfg.real_min, cfg.real_max, rng));
}

std::optional<Expr> sample_expression(const GenerationConfig& cfg, Rng& rng) {
    const TreeShape shape = sample_tree(cfg, rng);
    Simplified s = simplify(decorate(shape, cfg, rng));
    if (!s.usable()) return std::nullopt;
    const double lo = std::min<double>(cfg.int_min, cfg.real_min);
    const double hi = std::max<double>(cfg.int_max, cfg.real_max);
    for (const Expr& c : constant_leaves(s.expr))
        if (c.value() == 0.0 || c.value() < lo || c.value() > hi) return std::nullopt;
    return std::move(s.expr);
}

Expr resample_constants(const Skeleton& skeleton, const GenerationConfig& cfg, Rng& rng) {
    std::vector<Slot> slots;
    collect_slots(skeleton.tree, Op::Var, 0, slots);
    std::vector<Expr> values(slots.size());
    for (int attempt = 0; attempt < kResampleAttempts; ++attempt) {
        bool ok = true;
        for (std::size_t k = 0; k < slots.size() && ok; ++k) {
            values[k] = draw_for_slot(slots[k], cfg, rng);
            ok = slot_accepts(slots[k], values[k].value());
        }
        if (!ok) continue;
        Simplified s = simplify(fill_placeholders(skeleton.tree, values));
        if (s.usable() && skeletonize(s.expr) == skeleton) return s.expr;
    }
    throw ResampleExhausted("could not resample constants for skeleton " + skeleton.key());
}

} // namespace symode
