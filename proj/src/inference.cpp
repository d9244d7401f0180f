#include "symode/inference.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <thread>

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <sys/wait.h>
#include <unistd.h>

#include "symode/simplify.hpp"

namespace symode {

// ---------------------------------------------------------------- scorers

namespace {

// Logits (log alpha, log beta) for constant c, with log beta shifted so that
// refine_constant decodes c bit-exactly when some shift can. One ulp of a log-odds
// l moves exp(l) by about |l| ulps, so for c near a grid point some targets are
// unreachable; the closest decodable value is used then.
std::array<double, 2> exact_constant_logits(const TwoHot& c, const Vocabulary& vocab) {
    const double miss = OracleScorer::kOracleMiss;
    auto weight = [&](double w) { return w > 0.0 ? std::max(std::log(w), miss) : miss; };
    const bool has_right = c.i + 1 < vocab.grid().points;
    std::array<double, 2> out{weight(c.alpha), has_right ? weight(c.beta) : miss};
    if (!has_right || out[0] == miss || out[1] == miss) return out;

    std::vector<double> logits(static_cast<std::size_t>(vocab.size()), miss);
    const auto left = static_cast<std::size_t>(vocab.grid_id(c.i));
    const double target = c.value(vocab.grid());
    auto decode = [&](double shift) {
        logits[left] = out[0];
        logits[left + 1] = out[1] + shift;
        const int best = logits[left] >= logits[left + 1] ? vocab.grid_id(c.i) : vocab.grid_id(c.i + 1);
        return refine_constant(logits, vocab, best).value(vocab.grid());
    };
    double best_shift = 0.0, best_error = std::abs(decode(0.0) - target);
    // The decoded value is nondecreasing in the log beta shift.
    double lo = -1e-9, hi = 1e-9;
    for (int it = 0; it < 200 && best_error > 0.0; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double v = decode(mid);
        if (std::abs(v - target) < best_error) {
            best_error = std::abs(v - target);
            best_shift = mid;
        }
        (v < target ? lo : hi) = mid;
    }
    out[1] += best_shift;
    return out;
}

} // namespace

OracleScorer::OracleScorer(TokenSeq target, const Vocabulary& vocab)
    : target_(std::move(target)), vocab_(vocab), constant_logits_(target_.size()) {
    for (std::size_t k = 0; k < target_.size(); ++k)
        if (const auto* c = std::get_if<TwoHot>(&target_[k])) constant_logits_[k] = exact_constant_logits(*c, vocab_);
}

std::vector<double> OracleScorer::logits(const Trajectory&, const TokenSeq& prefix) {
    const auto v = static_cast<std::size_t>(vocab_.size());
    // Refined constants carry softmax rounding, so a constant follows the target when
    // it sits on the same grid pair.
    auto follows = [](const SeqItem& got, const SeqItem& want) {
        const auto* a = std::get_if<TwoHot>(&got);
        const auto* b = std::get_if<TwoHot>(&want);
        return a && b ? a->i == b->i : got == want;
    };
    if (prefix.size() >= target_.size() || !std::equal(prefix.begin(), prefix.end(), target_.begin(), follows))
        return std::vector<double>(v, 0.0);
    std::vector<double> out(v, kOracleMiss);
    const SeqItem& next = target_[prefix.size()];
    if (const auto* tok = std::get_if<TokenId>(&next)) {
        out.at(static_cast<std::size_t>(tok->id)) = kOracleHit;
        return out;
    }
    const auto& c = std::get<TwoHot>(next);
    const auto& [la, lb] = constant_logits_[prefix.size()];
    out.at(static_cast<std::size_t>(vocab_.grid_id(c.i))) = la;
    if (c.i + 1 < vocab_.grid().points) out.at(static_cast<std::size_t>(vocab_.grid_id(c.i + 1))) = lb;
    return out;
}

// ---------------------------------------------------------------- remote scorer

namespace {

[[noreturn]] void transport(const std::string& what) {
    throw ScorerError(ScorerError::Kind::Transport, "scorer transport: " + what);
}

std::string errno_text() { return std::strerror(errno); }

constexpr std::size_t kMaxFrameBytes = std::size_t{64} << 20;

} // namespace

RemoteScorer::RemoteScorer(const std::string& endpoint, int vocab_size, std::chrono::milliseconds timeout)
    : vocab_size_(vocab_size), timeout_(timeout) {
    if (vocab_size < 1) throw std::invalid_argument("vocabulary size must be positive");
    if (endpoint.rfind("exec:", 0) == 0) {
        const std::string cmd = endpoint.substr(5);
        int sv[2];
        if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) transport("socketpair: " + errno_text());
        const pid_t pid = ::fork();
        if (pid < 0) {
            ::close(sv[0]);
            ::close(sv[1]);
            transport("fork: " + errno_text());
        }
        if (pid == 0) {
            ::dup2(sv[1], STDIN_FILENO);
            ::dup2(sv[1], STDOUT_FILENO);
            ::execl("/bin/sh", "sh", "-c", cmd.c_str(), static_cast<char*>(nullptr));
            ::_exit(127);
        }
        ::close(sv[1]);
        fd_ = sv[0];
        child_ = pid;
    } else if (endpoint.rfind("unix:", 0) == 0) {
        const std::string path = endpoint.substr(5);
        sockaddr_un addr{};
        addr.sun_family = AF_UNIX;
        if (path.empty() || path.size() >= sizeof(addr.sun_path)) transport("bad socket path '" + path + "'");
        std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
        fd_ = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
        if (fd_ < 0) transport("socket: " + errno_text());
        if (::connect(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
            const std::string msg = "connect " + path + ": " + errno_text();
            ::close(fd_);
            fd_ = -1;
            transport(msg);
        }
    } else {
        transport("endpoint must start with exec: or unix:, got '" + endpoint + "'");
    }
}

RemoteScorer::~RemoteScorer() {
    if (fd_ >= 0) ::close(fd_);
    if (child_ > 0) {
        // The peer sees EOF and should exit on its own; give it a moment.
        for (int i = 0; i < 200; ++i) {
            if (::waitpid(child_, nullptr, WNOHANG) != 0) return;
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
        ::kill(child_, SIGKILL);
        ::waitpid(child_, nullptr, 0);
    }
}

void RemoteScorer::send_all(const std::string& frame) {
    std::size_t sent = 0;
    while (sent < frame.size()) {
        const ssize_t n = ::send(fd_, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) transport("send: " + errno_text());
        sent += static_cast<std::size_t>(n);
    }
}

std::string RemoteScorer::read_line() {
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    while (true) {
        if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl + 1);
            buffer_.erase(0, nl + 1);
            return line;
        }
        if (buffer_.size() > kMaxFrameBytes) transport("frame exceeds size limit");
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) transport("timed out waiting for response");
        pollfd p{fd_, POLLIN, 0};
        const int r = ::poll(&p, 1, static_cast<int>(std::min<long long>(left.count(), 1 << 30)));
        if (r < 0 && errno == EINTR) continue;
        if (r < 0) transport("poll: " + errno_text());
        if (r == 0) continue;
        char chunk[65536];
        const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
        if (n < 0 && errno == EINTR) continue;
        if (n < 0) transport("recv: " + errno_text());
        if (n == 0) transport("peer closed the connection");
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

std::vector<double> RemoteScorer::logits(const Trajectory& traj, const TokenSeq& prefix) {
    if (fd_ < 0) transport("connection is closed");
    try {
        send_all(encode_request({traj.id, prefix}));
        return decode_response(read_line(), vocab_size_);
    } catch (const ScorerError&) {
        // A failed exchange leaves the stream position unknown; refuse further use.
        ::close(fd_);
        fd_ = -1;
        throw;
    }
}

// ---------------------------------------------------------------- beam search

void BeamConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("BeamConfig: " + what); };
    if (width < 1) fail("width must be >= 1");
    if (max_length < 3) fail("max_length must be >= 3");
    if (!(length_penalty >= 0.0) || !std::isfinite(length_penalty)) fail("length_penalty must be finite and >= 0");
    if (fallback_width < 1) fail("fallback_width must be >= 1");
    if (memory_budget == 0) fail("memory_budget must be positive");
    for (int k : top_k)
        if (k < 1) fail("top-k entries must be >= 1");
}

int BeamConfig::effective_width(int vocab_size) const {
    const long double load = static_cast<long double>(vocab_size) * width * max_length;
    return load > static_cast<long double>(memory_budget) ? std::min(width, fallback_width) : width;
}

namespace {

struct Beam {
    TokenSeq items;
    std::vector<int> ids;
    double score = 0.0;
    double rank = 0.0;
    bool finished = false;
};

// A pooled beam, or a child described by (parent, next id) before it is built.
struct Entry {
    const Beam* beam;
    int next; // -1 when the entry is `beam` itself
    double score;
    double rank;
    bool finished;

    std::size_t length() const { return beam->ids.size() + (next >= 0 ? 1 : 0); }
    int id_at(std::size_t k) const { return k < beam->ids.size() ? beam->ids[k] : next; }
};

// Strict weak order: better entries first.
bool better(const Entry& a, const Entry& b) {
    if (a.rank != b.rank) return a.rank > b.rank;
    if (a.finished != b.finished) return a.finished;
    const std::size_t la = a.length(), lb = b.length();
    if (la != lb) return la < lb;
    for (std::size_t k = 0; k < la; ++k)
        if (a.id_at(k) != b.id_at(k)) return a.id_at(k) < b.id_at(k);
    return false;
}

std::vector<double> checked_logits(Scorer& scorer, const Trajectory& traj, const TokenSeq& prefix, int v) {
    std::vector<double> logits = scorer.logits(traj, prefix);
    if (static_cast<int>(logits.size()) != v)
        throw ScorerError(ScorerError::Kind::Malformed, "scorer returned " + std::to_string(logits.size()) +
                                                            " logits for a vocabulary of " + std::to_string(v));
    for (double x : logits)
        if (!std::isfinite(x)) throw ScorerError(ScorerError::Kind::Malformed, "scorer returned a non-finite logit");
    return logits;
}

std::vector<double> log_softmax(const std::vector<double>& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double x : logits) sum += std::exp(x - m);
    const double lse = m + std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
    return out;
}

bool excluded(int id, const Vocabulary& vocab) { return id == vocab.bos() || (vocab.pad() && id == *vocab.pad()); }

} // namespace

BeamResult beam_search(Scorer& scorer, const Trajectory& traj, const Vocabulary& vocab, const BeamConfig& cfg) {
    cfg.validate();
    const int v = vocab.size();
    if (scorer.vocab_size() != v) throw std::invalid_argument("scorer and vocabulary disagree on size");
    BeamResult result;
    result.width = cfg.effective_width(v);
    const auto width = static_cast<std::size_t>(result.width);
    auto rank_of = [&](double score, std::size_t length) {
        return cfg.length_penalty > 0.0 ? score / std::pow(static_cast<double>(length), cfg.length_penalty) : score;
    };

    std::vector<Beam> pool(1);
    pool[0].items = {TokenId{vocab.bos()}};
    pool[0].ids = {vocab.bos()};
    pool[0].rank = rank_of(0.0, 1);

    while (std::any_of(pool.begin(), pool.end(), [](const Beam& b) { return !b.finished; })) {
        std::vector<Entry> entries;
        std::vector<std::vector<double>> step_logits(pool.size());
        for (std::size_t b = 0; b < pool.size(); ++b) {
            const Beam& beam = pool[b];
            if (beam.finished) {
                entries.push_back({&beam, -1, beam.score, beam.rank, true});
                continue;
            }
            step_logits[b] = checked_logits(scorer, traj, beam.items, v);
            const std::vector<double> lp = log_softmax(step_logits[b]);
            const std::size_t child_length = beam.ids.size() + 1;
            for (int id = 0; id < v; ++id) {
                if (excluded(id, vocab)) continue;
                ++result.expansions;
                const bool done = id == vocab.eos();
                if (!done && child_length >= static_cast<std::size_t>(cfg.max_length)) continue;
                const double s = beam.score + lp[static_cast<std::size_t>(id)];
                entries.push_back({&beam, id, s, rank_of(s, child_length), done});
            }
        }
        const std::size_t keep = std::min(width, entries.size());
        std::partial_sort(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(keep), entries.end(), better);

        std::vector<Beam> next;
        next.reserve(keep);
        for (std::size_t e = 0; e < keep; ++e) {
            const Entry& en = entries[e];
            if (en.next < 0) {
                next.push_back(*en.beam);
                continue;
            }
            Beam child;
            child.items = en.beam->items;
            child.ids = en.beam->ids;
            const auto parent = static_cast<std::size_t>(en.beam - pool.data());
            if (vocab.is_grid(en.next))
                child.items.emplace_back(refine_constant(step_logits[parent], vocab, en.next));
            else
                child.items.emplace_back(TokenId{en.next});
            child.ids.push_back(en.next);
            child.score = en.score;
            child.rank = en.rank;
            child.finished = en.finished;
            next.push_back(std::move(child));
        }
        pool = std::move(next);
    }

    if (pool.empty()) throw NoCandidateError("beam search: no sequence reached EOS within max_length");
    result.candidates.reserve(pool.size());
    for (Beam& b : pool) result.candidates.push_back({std::move(b.items), std::move(b.ids), b.score, b.rank});
    return result;
}

std::vector<int> greedy_decode(Scorer& scorer, const Trajectory& traj, const Vocabulary& vocab, int max_length) {
    TokenSeq items{TokenId{vocab.bos()}};
    std::vector<int> ids{vocab.bos()};
    while (static_cast<int>(ids.size()) < max_length) {
        const std::vector<double> logits = checked_logits(scorer, traj, items, vocab.size());
        int best = -1;
        for (int id = 0; id < vocab.size(); ++id)
            if (!excluded(id, vocab) && (best < 0 || logits[static_cast<std::size_t>(id)] > logits[static_cast<std::size_t>(best)]))
                best = id;
        ids.push_back(best);
        if (vocab.is_grid(best))
            items.emplace_back(refine_constant(logits, vocab, best));
        else
            items.emplace_back(TokenId{best});
        if (best == vocab.eos()) break;
    }
    return ids;
}

// ---------------------------------------------------------------- top-k

TopKResult top_k_evaluate(const std::vector<Candidate>& candidates, const Expr& gt, const SeriesRef& trajectory,
                          const std::vector<int>& ks, const MetricsConfig& cfg, const Vocabulary& vocab) {
    int deepest = 0;
    for (int k : ks) {
        if (k < 1) throw std::invalid_argument("top-k values must be >= 1");
        deepest = std::max(deepest, k);
    }
    const std::size_t scored = std::min(candidates.size(), static_cast<std::size_t>(deepest));
    std::vector<MetricsReport> reports;
    reports.reserve(scored);
    for (std::size_t c = 0; c < scored; ++c) {
        try {
            const Simplified s = simplify(detokenize(candidates[c].items, vocab));
            reports.push_back(s.valid ? score(gt, s.expr, trajectory, cfg) : MetricsReport::failing(complexity(gt)));
        } catch (const DetokenizeError&) {
            reports.push_back(MetricsReport::failing(complexity(gt)));
        }
    }

    TopKResult out{ks, {}};
    for (int k : ks) {
        MetricsReport merged = MetricsReport::failing(complexity(gt));
        if (!reports.empty()) merged.complexity_pred = reports.front().complexity_pred;
        for (std::size_t c = 0; c < std::min(reports.size(), static_cast<std::size_t>(k)); ++c) {
            const MetricsReport& r = reports[c];
            merged.allclose = merged.allclose || r.allclose;
            merged.r2_pass = merged.r2_pass || r.r2_pass;
            merged.skeleton_match = merged.skeleton_match || r.skeleton_match;
            merged.skeleton_and_allclose = merged.skeleton_and_allclose || r.skeleton_and_allclose;
            merged.skeleton_and_r2 = merged.skeleton_and_r2 || r.skeleton_and_r2;
            if (r.r_squared > merged.r_squared) merged.r_squared = r.r_squared;
        }
        out.at_k.push_back(merged);
    }
    return out;
}

} // namespace symode
