#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "symode/codec.hpp"
#include "symode/metrics.hpp"
#include "symode/wire.hpp"

namespace symode {

/// What the scorer conditions on. `id` names the trajectory for out-of-process
/// peers ("<corpus path>#<record index>"); `tokens` is the in-process encoding.
struct Trajectory {
    std::string id;
    TrajectoryTokens tokens;
};

/// Autoregressive model: one finite logit per vocabulary id for the next item.
/// Must be deterministic in (trajectory, prefix). The prefix starts with BOS.
class Scorer {
public:
    virtual ~Scorer() = default;
    virtual int vocab_size() const = 0;
    virtual std::vector<double> logits(const Trajectory& traj, const TokenSeq& prefix) = 0;
};

/// Puts all mass on a fixed target sequence while the prefix follows it: logit
/// kOracleHit on the target token, kOracleMiss elsewhere. For a constant the two
/// grid points get log alpha and log beta, adjusted in the last bits so that
/// refine_constant reproduces the target value, bit-exactly where exp granularity
/// allows and within a few ulps otherwise. A prefix constant follows
/// the target when it has the same grid index. Once the prefix deviates, or runs
/// past the target, every logit is 0.
class OracleScorer final : public Scorer {
public:
    static constexpr double kOracleHit = 50.0;
    static constexpr double kOracleMiss = -1000.0;

    OracleScorer(TokenSeq target, const Vocabulary& vocab);
    int vocab_size() const override { return vocab_.size(); }
    std::vector<double> logits(const Trajectory& traj, const TokenSeq& prefix) override;

private:
    TokenSeq target_;
    Vocabulary vocab_;
    std::vector<std::array<double, 2>> constant_logits_; // per target position; unused for tokens
};

/// Same logit vector for every request.
class ConstantScorer final : public Scorer {
public:
    explicit ConstantScorer(std::vector<double> logits) : logits_(std::move(logits)) {}
    int vocab_size() const override { return static_cast<int>(logits_.size()); }
    std::vector<double> logits(const Trajectory&, const TokenSeq&) override { return logits_; }

private:
    std::vector<double> logits_;
};

/// Out-of-process scorer over the v1 wire protocol. Endpoints:
///   exec:<shell command>   spawn the peer with a socket pair on its stdin/stdout
///   unix:<socket path>     connect to a listening unix-domain socket
/// Every failure raises ScorerError; no logits are ever fabricated.
class RemoteScorer final : public Scorer {
public:
    RemoteScorer(const std::string& endpoint, int vocab_size,
                 std::chrono::milliseconds timeout = std::chrono::seconds(30));
    ~RemoteScorer() override;
    RemoteScorer(const RemoteScorer&) = delete;
    RemoteScorer& operator=(const RemoteScorer&) = delete;

    int vocab_size() const override { return vocab_size_; }
    std::vector<double> logits(const Trajectory& traj, const TokenSeq& prefix) override;

private:
    void send_all(const std::string& frame);
    std::string read_line();

    int fd_ = -1;
    int child_ = -1;
    int vocab_size_;
    std::chrono::milliseconds timeout_;
    std::string buffer_;
};

struct BeamConfig {
    int width = 1536;
    int max_length = 64;              // items, BOS and EOS included
    double length_penalty = 0.0;      // rank by score / length^penalty; 0 disables
    std::vector<int> top_k{1, 10, 100, 1536};
    std::uint64_t memory_budget = std::uint64_t{1} << 26; // cap on V*W*L
    int fallback_width = 256;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
    /// Width actually used for a vocabulary of `vocab_size` tokens.
    int effective_width(int vocab_size) const;
};

struct Candidate {
    TokenSeq items;
    std::vector<int> ids; // chosen token id per item (grid id for constants)
    double score = 0.0;   // cumulative log-softmax
    double rank_score = 0.0;
};

struct BeamResult {
    std::vector<Candidate> candidates; // ranked best first
    int width = 0;
    std::uint64_t expansions = 0;
};

class NoCandidateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Pool beam search. Each round expands every live beam in the pool by every id
/// except PAD and BOS; the pool becomes the finished beams plus all children, cut
/// to the best `width` under (rank score desc, finished first, length asc, ids
/// lexicographic). Rounds stop once every pooled beam ends in EOS. A grid id
/// becomes refine_constant() of that step's logits. Children that reach
/// max_length without EOS are discarded. Throws NoCandidateError when nothing
/// finishes.
BeamResult beam_search(Scorer& scorer, const Trajectory& traj, const Vocabulary& vocab, const BeamConfig& cfg);

/// Ids of the next items chosen greedily (argmax, lowest id on ties, PAD and BOS
/// excluded) until EOS or max_length.
std::vector<int> greedy_decode(Scorer& scorer, const Trajectory& traj, const Vocabulary& vocab, int max_length);

/// Per-k verdicts for one ground truth. at_k[j] merges the first ks[j] candidates:
/// every boolean is any-of (conjunctions are taken per candidate first), r_squared
/// is the maximum, complexity_pred is that of the first candidate.
struct TopKResult {
    std::vector<int> ks;
    std::vector<MetricsReport> at_k;
};

/// Candidates that fail to detokenize, or fold to an invalid expression, fail every
/// metric. ks must be positive.
TopKResult top_k_evaluate(const std::vector<Candidate>& candidates, const Expr& gt, const SeriesRef& trajectory,
                          const std::vector<int>& ks, const MetricsConfig& cfg, const Vocabulary& vocab);

} // namespace symode
