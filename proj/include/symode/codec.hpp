#pragma once

#include <Eigen/Core>
#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "symode/expr.hpp"

namespace symode {

/// Equidistant constant grid x_0 < ... < x_{points-1} (0-based here; the token
/// names are 1-based: x_1 .. x_m).
struct GridSpec {
    double min = -10.0;
    double max = 10.0;
    int points = 21;

    double value(int k) const noexcept {
        return k == points - 1 ? max : min + static_cast<double>(k) * (max - min) / (points - 1);
    }
    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Token table: named symbols first (ids 0..), then one token per grid point.
/// The standard table has 36 entries:
///   0 PAD, 1 BOS, 2 EOS, 3 y, 4 add, 5 sub, 6 mul, 7 div, 8 pow,
///   9 sin, 10 cos, 11 exp, 12 sqrt, 13 log, 14 neg, 15..35 x_1..x_21 (-10..10)
class Vocabulary {
public:
    static constexpr int kVersion = 1;

    /// `symbols` must contain BOS and EOS; grid tokens are appended after them.
    Vocabulary(std::vector<std::string> symbols, GridSpec grid);
    static Vocabulary standard();

    int size() const noexcept { return static_cast<int>(tokens_.size()); }
    const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    std::optional<int> id(std::string_view token) const;
    int id_of(Op op) const;

    int bos() const noexcept { return bos_; }
    int eos() const noexcept { return eos_; }
    std::optional<int> pad() const noexcept { return pad_; }

    const GridSpec& grid() const noexcept { return grid_; }
    int first_grid_id() const noexcept { return first_grid_; }
    bool is_grid(int id) const noexcept { return id >= first_grid_ && id < size(); }
    int grid_index(int id) const noexcept { return id - first_grid_; }
    int grid_id(int index) const noexcept { return first_grid_ + index; }

    nlohmann::json to_json() const;
    static Vocabulary from_json(const nlohmann::json& j);

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
        return a.tokens_ == b.tokens_ && a.grid_ == b.grid_;
    }

private:
    std::vector<std::string> tokens_;
    GridSpec grid_;
    int first_grid_ = 0;
    int bos_ = -1, eos_ = -1;
    std::optional<int> pad_;
};

/// Constant as weights on grid points i and i+1 (0-based grid index).
struct TwoHot {
    int i = 0;
    double alpha = 1.0;
    double beta = 0.0;

    /// alpha*x_i + beta*x_{i+1}, evaluated from the endpoint nearer zero so that
    /// encode/value round trips are exact on unit-spaced grids.
    double value(const GridSpec& grid) const noexcept;
    friend bool operator==(const TwoHot&, const TwoHot&) = default;
};

struct TokenId {
    int id = 0;
    friend bool operator==(const TokenId&, const TokenId&) = default;
};

using SeqItem = std::variant<TokenId, TwoHot>;
using TokenSeq = std::vector<SeqItem>;

class ConstantOutOfRange : public std::domain_error {
public:
    explicit ConstantOutOfRange(double value);
    double value() const noexcept { return value_; }

private:
    double value_;
};

/// x_i <= c <= x_{i+1}; grid hits give beta = 0 except at the right edge, which
/// uses the last interval with beta = 1.
TwoHot two_hot_encode(double c, const GridSpec& grid);

/// Target distribution over the vocabulary for one item (one-hot or two-hot).
Eigen::VectorXd item_targets(const SeqItem& item, const Vocabulary& vocab);

/// Pairs grid token `id` with its larger-logit neighbor (ties go right; edges use
/// their only neighbor) and renormalizes the two softmax probabilities.
TwoHot refine_constant(std::span<const double> logits, const Vocabulary& vocab, int id);

/// Argmax (lowest id on ties); a grid argmax becomes a refined constant.
SeqItem two_hot_decode(std::span<const double> logits, const Vocabulary& vocab);

/// [BOS, prefix items..., EOS]. Throws ConstantOutOfRange.
TokenSeq tokenize_expr(const Expr& e, const Vocabulary& vocab);

class DetokenizeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inverse of tokenize_expr. Constants landing exactly on an integer grid point
/// come back integer-tagged.
Expr detokenize(const TokenSeq& seq, const Vocabulary& vocab);

inline std::uint64_t encode_float64(double x) noexcept { return std::bit_cast<std::uint64_t>(x); }
inline double decode_float64(std::uint64_t bits) noexcept { return std::bit_cast<double>(bits); }

/// One row per observation: the IEEE-754 bit patterns of (t_i, y_i).
using TrajectoryTokens = Eigen::Matrix<std::uint64_t, Eigen::Dynamic, 2>;

TrajectoryTokens encode_trajectory(const Eigen::VectorXd& t, const Eigen::VectorXd& y);

/// Decoder input for one item: its embedding row, or alpha*row(x_i) + beta*row(x_{i+1}).
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic>
teacher_forcing_mix(const SeqItem& item, const Vocabulary& vocab, const Eigen::MatrixBase<Derived>& table) {
    if (const auto* tok = std::get_if<TokenId>(&item)) return table.row(tok->id);
    const auto& c = std::get<TwoHot>(item);
    using S = typename Derived::Scalar;
    const int left = vocab.grid_id(c.i);
    if (c.beta == 0.0) return table.row(left);
    return static_cast<S>(c.alpha) * table.row(left) + static_cast<S>(c.beta) * table.row(left + 1);
}

} // namespace symode
