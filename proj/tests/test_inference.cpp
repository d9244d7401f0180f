#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <thread>

#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include "fake_peer_logits.hpp"
#include "support.hpp"
#include "symode/inference.hpp"
#include "symode/simplify.hpp"

using namespace symode;

namespace {

const Vocabulary kVocab = Vocabulary::standard();

std::string peer(const std::string& args) { return std::string("exec:") + SYMODE_FAKE_PEER + " " + args; }

// Deterministic pseudo-random logits keyed on the prefix ids.
class HashScorer final : public Scorer {
public:
    explicit HashScorer(int v) : v_(v) {}
    int vocab_size() const override { return v_; }
    std::vector<double> logits(const Trajectory&, const TokenSeq& prefix) override {
        std::uint64_t h = 1469598103934665603ull;
        for (const auto& item : prefix) {
            const auto* t = std::get_if<TokenId>(&item);
            h = (h ^ static_cast<std::uint64_t>(t ? t->id : 1000 + std::get<TwoHot>(item).i)) * 1099511628211ull;
        }
        std::vector<double> out(static_cast<std::size_t>(v_));
        std::mt19937_64 rng(h);
        for (auto& x : out) x = std::normal_distribution<double>(0.0, 2.0)(rng);
        return out;
    }

private:
    int v_;
};

class UniformScorer final : public Scorer {
public:
    explicit UniformScorer(int v) : v_(v) {}
    int vocab_size() const override { return v_; }
    std::vector<double> logits(const Trajectory&, const TokenSeq&) override { return std::vector<double>(v_, 0.0); }

private:
    int v_;
};

std::vector<int> ids_of(const TokenSeq& seq, const Vocabulary& vocab) {
    std::vector<int> ids;
    for (const auto& item : seq) {
        if (const auto* t = std::get_if<TokenId>(&item))
            ids.push_back(t->id);
        else
            ids.push_back(vocab.grid_id(std::get<TwoHot>(item).i));
    }
    return ids;
}

// Id a confident decoder picks for each item: the heavier grid point of a constant.
std::vector<int> preferred_ids(const TokenSeq& seq, const Vocabulary& vocab) {
    std::vector<int> ids;
    for (const auto& item : seq) {
        if (const auto* t = std::get_if<TokenId>(&item)) {
            ids.push_back(t->id);
        } else {
            const auto& c = std::get<TwoHot>(item);
            ids.push_back(vocab.grid_id(c.alpha >= c.beta ? c.i : c.i + 1));
        }
    }
    return ids;
}

Trajectory no_trajectory() { return {"test#0", TrajectoryTokens(0, 2)}; }

} // namespace

TEST_CASE("wire frames are byte exact") {
    const ScorerRequest req{"corpus.jsonl#3", {TokenId{1}, TokenId{6}, TwoHot{11, 0.36, 0.64}, TokenId{3}}};
    const std::string frame = encode_request(req);
    CHECK(frame == "{\"prefix\":[{\"tok\":1},{\"tok\":6},{\"const\":{\"alpha\":0.36,\"beta\":0.64,\"i\":11}},"
                   "{\"tok\":3}],\"traj_id\":\"corpus.jsonl#3\",\"v\":1}\n");
    const ScorerRequest back = decode_request(frame);
    CHECK(back.traj_id == req.traj_id);
    CHECK(back.prefix == req.prefix);
    CHECK(encode_response({0.5, -1.0, 2.0}) == "{\"logits\":[0.5,-1.0,2.0],\"v\":1}\n");
    CHECK(decode_response(encode_response({0.5, -1.0, 2.0}), 3) == std::vector<double>{0.5, -1.0, 2.0});
    CHECK(encode_error("bad") == "{\"error\":\"bad\",\"v\":1}\n");

    // Doubles survive the text form bit for bit.
    std::mt19937_64 rng(3);
    std::vector<double> xs(50);
    for (auto& x : xs) x = std::normal_distribution<double>(0, 1e3)(rng);
    CHECK(decode_response(encode_response(xs), 50) == xs);
}

TEST_CASE("wire errors") {
    auto kind_of = [](const std::function<void()>& f) {
        try {
            f();
        } catch (const ScorerError& e) {
            return static_cast<int>(e.kind());
        }
        return -1;
    };
    const int version = static_cast<int>(ScorerError::Kind::Version);
    const int malformed = static_cast<int>(ScorerError::Kind::Malformed);
    const int peer_error = static_cast<int>(ScorerError::Kind::Peer);
    CHECK(kind_of([] { decode_response("{\"logits\":[1],\"v\":2}", 1); }) == version);
    CHECK(kind_of([] { decode_request("{\"prefix\":[],\"traj_id\":\"a\",\"v\":0}"); }) == version);
    CHECK(kind_of([] { decode_response("{\"logits\":[1]}", 1); }) == malformed);
    CHECK(kind_of([] { decode_response("{\"logits\":[1,2],\"v\":1}", 3); }) == malformed);
    CHECK(kind_of([] { decode_response("{\"logits\":[1,\"x\"],\"v\":1}", 2); }) == malformed);
    CHECK(kind_of([] { decode_response("[1,2]", 2); }) == malformed);
    CHECK(kind_of([] { decode_response("not json", 2); }) == malformed);
    CHECK(kind_of([] { decode_response("{\"error\":\"boom\",\"v\":1}", 2); }) == peer_error);
    CHECK(kind_of([] { decode_request("{\"prefix\":[{\"bogus\":1}],\"traj_id\":\"a\",\"v\":1}"); }) == malformed);
    CHECK(kind_of([] { decode_request("{\"prefix\":[{\"const\":{\"i\":1}}],\"traj_id\":\"a\",\"v\":1}"); }) == malformed);
    CHECK(kind_of([] { decode_request("{\"prefix\":[],\"v\":1}"); }) == malformed);
}

TEST_CASE("beam config") {
    BeamConfig cfg;
    CHECK(cfg.width == 1536);
    CHECK(cfg.max_length == 64);
    CHECK(cfg.length_penalty == 0.0);
    CHECK(cfg.top_k == std::vector<int>{1, 10, 100, 1536});
    CHECK(cfg.effective_width(36) == 1536);
    CHECK(cfg.effective_width(1000) == 256);
    cfg.width = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.max_length = 2;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.top_k = {0};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("oracle scorer leads beam search to its target") {
    BeamConfig cfg;
    cfg.width = 32;
    int checked = 0;
    for (const Expr& e : testing::sampled_expressions(300, 404)) {
        TokenSeq target;
        try {
            target = tokenize_expr(e, kVocab);
        } catch (const ConstantOutOfRange&) {
            continue;
        }
        OracleScorer oracle(target, kVocab);
        const BeamResult r = beam_search(oracle, no_trajectory(), kVocab, cfg);
        REQUIRE(!r.candidates.empty());
        const Candidate& top = r.candidates[0];
        REQUIRE(top.items.size() == top.ids.size());
        for (std::size_t k = 0; k < top.items.size(); ++k)
            if (const auto* c = std::get_if<TwoHot>(&top.items[k]))
                CHECK((top.ids[k] == kVocab.grid_id(c->i) || top.ids[k] == kVocab.grid_id(c->i + 1)));
        CHECK(top.ids == preferred_ids(target, kVocab));
        const Expr decoded = detokenize(r.candidates[0].items, kVocab);
        CHECK_MESSAGE(skeletonize(simplify(decoded).expr) == skeletonize(e), to_prefix_string(e));
        for (std::size_t c = 1; c < r.candidates.size(); ++c)
            REQUIRE(r.candidates[c - 1].rank_score >= r.candidates[c].rank_score);
        const std::uint64_t bound = static_cast<std::uint64_t>(cfg.width) * kVocab.size() * cfg.max_length;
        CHECK(r.expansions <= bound);
        ++checked;
    }
    CHECK(checked > 250);
}

TEST_CASE("oracle top-1 reproduces constants to the last bits") {
    BeamConfig cfg;
    cfg.width = 4;
    int constants = 0, exact = 0;
    for (const Expr& e : testing::sampled_expressions(2000, 505)) {
        TokenSeq target;
        try {
            target = tokenize_expr(e, kVocab);
        } catch (const ConstantOutOfRange&) {
            continue;
        }
        OracleScorer oracle(target, kVocab);
        const Candidate top = beam_search(oracle, no_trajectory(), kVocab, cfg).candidates.at(0);
        REQUIRE(top.items.size() == target.size());
        for (std::size_t k = 0; k < target.size(); ++k) {
            if (const auto* want = std::get_if<TwoHot>(&target[k])) {
                ++constants;
                const double got = std::get<TwoHot>(top.items[k]).value(kVocab.grid());
                const double expected = want->value(kVocab.grid());
                exact += got == expected;
                const auto ulps = std::llabs(std::bit_cast<std::int64_t>(got) - std::bit_cast<std::int64_t>(expected));
                CHECK(ulps <= 16);
            }
        }
    }
    CHECK(constants > 1000);
    // Exactness is limited by exp granularity at large |log-odds| only.
    CHECK(exact >= 0.9 * constants); // 94% observed on this draw
}

TEST_CASE("oracle top-1 scores all-pass") {
    BeamConfig cfg;
    cfg.width = 8;
    MetricsConfig mcfg;
    int checked = 0;
    Rng rng = make_stream(5, 5);
    for (const Expr& e : testing::sampled_expressions(200, 606)) {
        const Solution sol = integrate(e, std::uniform_real_distribution<double>(-5, 5)(rng), SolveConfig{});
        if (!sol.ok() || !qc_check(sol, e, 1.0)) continue;
        TokenSeq target;
        try {
            target = tokenize_expr(e, kVocab);
        } catch (const ConstantOutOfRange&) {
            continue;
        }
        OracleScorer oracle(target, kVocab);
        const BeamResult r = beam_search(oracle, no_trajectory(), kVocab, cfg);
        const TopKResult top = top_k_evaluate(r.candidates, e, sol.y, {1}, mcfg, kVocab);
        const MetricsReport& m = top.at_k[0];
        CHECK_MESSAGE((m.allclose && m.r2_pass && m.skeleton_match && m.skeleton_and_allclose && m.skeleton_and_r2),
                      to_prefix_string(e));
        ++checked;
    }
    CHECK(checked > 50);
}

TEST_CASE("width one is greedy decoding") {
    HashScorer scorer(kVocab.size());
    BeamConfig cfg;
    cfg.width = 1;
    for (int max_length : {3, 5, 12, 40}) {
        cfg.max_length = max_length;
        const BeamResult r = beam_search(scorer, no_trajectory(), kVocab, cfg);
        REQUIRE(r.candidates.size() == 1);
        std::vector<int> greedy = greedy_decode(scorer, no_trajectory(), kVocab, max_length);
        // At the length limit beam search may only close with EOS.
        if (greedy.back() != kVocab.eos()) greedy.back() = kVocab.eos();
        CHECK(r.candidates[0].ids == greedy);
    }
}

TEST_CASE("uniform scorer matches exhaustive enumeration") {
    const Vocabulary toy({"BOS", "EOS", "y", "neg"}, GridSpec{-1.0, 1.0, 2});
    REQUIRE(toy.size() == 6);
    UniformScorer scorer(toy.size());
    const int max_length = 4;
    // Every BOS-led, EOS-terminated sequence of length <= 4 over the non-BOS ids.
    struct Seq {
        std::vector<int> ids;
        double score;
    };
    std::vector<Seq> all;
    const double step = -std::log(6.0);
    std::vector<int> body_ids;
    for (int id = 0; id < toy.size(); ++id)
        if (id != toy.bos() && id != toy.eos()) body_ids.push_back(id);
    std::function<void(std::vector<int>)> walk = [&](std::vector<int> prefix) {
        std::vector<int> done = prefix;
        done.push_back(toy.eos());
        all.push_back({done, step * static_cast<double>(done.size() - 1)});
        if (static_cast<int>(prefix.size()) + 1 >= max_length) return;
        for (int id : body_ids) {
            auto next = prefix;
            next.push_back(id);
            walk(next);
        }
    };
    walk({toy.bos()});
    CHECK(all.size() == 1 + 4 + 16);
    std::sort(all.begin(), all.end(), [](const Seq& a, const Seq& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.ids.size() != b.ids.size()) return a.ids.size() < b.ids.size();
        return a.ids < b.ids;
    });
    BeamConfig cfg;
    cfg.max_length = max_length;
    for (int width = 1; width <= static_cast<int>(all.size()) + 3; ++width) {
        cfg.width = width;
        const BeamResult r = beam_search(scorer, no_trajectory(), toy, cfg);
        const std::size_t expect = std::min<std::size_t>(width, all.size());
        REQUIRE(r.candidates.size() == expect);
        for (std::size_t c = 0; c < expect; ++c) {
            CHECK(r.candidates[c].ids == all[c].ids);
            CHECK(r.candidates[c].score == doctest::Approx(all[c].score).epsilon(1e-14));
        }
    }
}

TEST_CASE("beam search is deterministic and honors length normalization") {
    HashScorer scorer(kVocab.size());
    BeamConfig cfg;
    cfg.width = 64;
    cfg.max_length = 10;
    const BeamResult a = beam_search(scorer, no_trajectory(), kVocab, cfg);
    const BeamResult b = beam_search(scorer, no_trajectory(), kVocab, cfg);
    REQUIRE(a.candidates.size() == b.candidates.size());
    for (std::size_t c = 0; c < a.candidates.size(); ++c) {
        CHECK(a.candidates[c].ids == b.candidates[c].ids);
        CHECK(a.candidates[c].items == b.candidates[c].items);
        CHECK(a.candidates[c].score == b.candidates[c].score);
    }
    cfg.length_penalty = 1.0;
    const BeamResult n = beam_search(scorer, no_trajectory(), kVocab, cfg);
    for (const Candidate& c : n.candidates)
        CHECK(c.rank_score == doctest::Approx(c.score / static_cast<double>(c.ids.size())));
    for (std::size_t c = 1; c < n.candidates.size(); ++c) CHECK(n.candidates[c - 1].rank_score >= n.candidates[c].rank_score);
}

TEST_CASE("constants are refined from the step's logits") {
    // BOS then grid x_12 (value 1) and x_13 (value 2) carrying 0.36 / 0.64.
    const TokenSeq target{TokenId{kVocab.bos()}, TwoHot{11, 0.36, 0.64}, TokenId{kVocab.eos()}};
    OracleScorer oracle(target, kVocab);
    BeamConfig cfg;
    cfg.width = 4;
    const BeamResult r = beam_search(oracle, no_trajectory(), kVocab, cfg);
    const auto& c = std::get<TwoHot>(r.candidates[0].items[1]);
    CHECK(c.i == 11);
    CHECK(c.alpha == doctest::Approx(0.36).epsilon(1e-12));
    CHECK(c.beta == doctest::Approx(0.64).epsilon(1e-12));
    CHECK(r.candidates[0].ids[1] == kVocab.grid_id(12));
    CHECK(r.candidates[0].score == doctest::Approx(std::log(0.64)).epsilon(1e-9));
    // The runner-up picks the other grid point of the same pair.
    CHECK(r.candidates[1].ids[1] == kVocab.grid_id(11));
    CHECK(r.candidates[1].score == doctest::Approx(std::log(0.36)).epsilon(1e-9));
    CHECK(std::get<TwoHot>(r.candidates[1].items[1]) == c);
}

TEST_CASE("top-k any-of semantics") {
    const Expr gt = simplify(parse_infix("0.1*y")).expr;
    const Solution sol = integrate(gt, 9.0, SolveConfig{});
    MetricsConfig mcfg;
    std::vector<Candidate> cands;
    auto add = [&](const TokenSeq& items) { cands.push_back({items, ids_of(items, kVocab), 0.0, 0.0}); };
    add(tokenize_expr(simplify(parse_infix("y**2")).expr, kVocab));
    add({TokenId{kVocab.bos()}, TokenId{kVocab.id_of(Op::Add)}, TokenId{kVocab.eos()}}); // malformed
    add(tokenize_expr(gt, kVocab));
    add(tokenize_expr(simplify(parse_infix("0.3*y")).expr, kVocab));
    const TopKResult r = top_k_evaluate(cands, gt, sol.y, {1, 2, 3, 4, 10}, mcfg, kVocab);
    REQUIRE(r.at_k.size() == 5);
    CHECK_FALSE(r.at_k[0].skeleton_match);
    CHECK_FALSE(r.at_k[1].skeleton_match);
    CHECK_FALSE(r.at_k[1].allclose);
    for (std::size_t j = 2; j < 5; ++j) {
        CHECK(r.at_k[j].skeleton_match);
        CHECK(r.at_k[j].allclose);
        CHECK(r.at_k[j].skeleton_and_r2);
        CHECK(r.at_k[j].r_squared == 1.0);
    }
    CHECK(r.at_k[0].complexity_pred == 3);
    CHECK(r.at_k[0].complexity_gt == 3);
    CHECK_THROWS_AS(top_k_evaluate(cands, gt, sol.y, {0}, mcfg, kVocab), std::invalid_argument);
    const TopKResult none = top_k_evaluate({}, gt, sol.y, {1}, mcfg, kVocab);
    CHECK_FALSE(none.at_k[0].allclose);
}

TEST_CASE("top-k pass rates never decrease with k") {
    const auto pool = testing::sampled_expressions(60, 123);
    MetricsConfig mcfg;
    std::mt19937_64 rng(17);
    const std::vector<int> ks{1, 2, 3, 5, 8};
    std::vector<std::vector<MetricsReport>> per_k(ks.size());
    for (std::size_t n = 0; n < 40; ++n) {
        const Expr& gt = pool[n];
        const Solution sol = integrate(gt, 1.5, SolveConfig{});
        if (!sol.ok()) continue;
        std::vector<Candidate> cands;
        for (int c = 0; c < 8; ++c) {
            const Expr& pick = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
            try {
                const TokenSeq items = tokenize_expr(c == 4 && n % 3 == 0 ? gt : pick, kVocab);
                cands.push_back({items, ids_of(items, kVocab), 0.0, 0.0});
            } catch (const ConstantOutOfRange&) {
            }
        }
        const TopKResult r = top_k_evaluate(cands, gt, sol.y, ks, mcfg, kVocab);
        for (std::size_t j = 0; j < ks.size(); ++j) per_k[j].push_back(r.at_k[j]);
        for (std::size_t j = 1; j < ks.size(); ++j) {
            CHECK(r.at_k[j].allclose >= r.at_k[j - 1].allclose);
            CHECK(r.at_k[j].r2_pass >= r.at_k[j - 1].r2_pass);
            CHECK(r.at_k[j].skeleton_match >= r.at_k[j - 1].skeleton_match);
            CHECK(r.at_k[j].skeleton_and_allclose >= r.at_k[j - 1].skeleton_and_allclose);
            CHECK(r.at_k[j].skeleton_and_r2 >= r.at_k[j - 1].skeleton_and_r2);
        }
    }
    auto rate = [](const std::vector<MetricsReport>& rs) {
        return std::count_if(rs.begin(), rs.end(), [](const MetricsReport& m) { return m.skeleton_match; });
    };
    for (std::size_t j = 1; j < ks.size(); ++j) CHECK(rate(per_k[j]) >= rate(per_k[j - 1]));
    CHECK(rate(per_k.back()) > 0);
}

TEST_CASE("remote scorer is transparent") {
    const int v = kVocab.size();
    RemoteScorer remote(peer("constant " + std::to_string(v)), v);
    ConstantScorer local(testing::fake_peer_logits(v));
    BeamConfig cfg;
    cfg.width = 16;
    cfg.max_length = 8;
    const BeamResult a = beam_search(remote, no_trajectory(), kVocab, cfg);
    const BeamResult b = beam_search(local, no_trajectory(), kVocab, cfg);
    REQUIRE(a.candidates.size() == b.candidates.size());
    for (std::size_t c = 0; c < a.candidates.size(); ++c) {
        CHECK(a.candidates[c].items == b.candidates[c].items);
        CHECK(a.candidates[c].score == b.candidates[c].score);
    }

    // Informational loopback latency.
    std::vector<double> ms;
    const TokenSeq prefix{TokenId{kVocab.bos()}, TokenId{3}};
    for (int i = 0; i < 1000; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        remote.logits(no_trajectory(), prefix);
        ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    std::nth_element(ms.begin(), ms.begin() + 500, ms.end());
    MESSAGE("median round trip over exec transport: " << ms[500] << " ms");
}

TEST_CASE("remote scorer failures surface as scorer errors") {
    const int v = kVocab.size();
    const std::string vs = std::to_string(v);
    auto kind_during_search = [&](const std::string& args) {
        RemoteScorer remote(peer(args), v);
        BeamConfig cfg;
        cfg.width = 16;
        cfg.max_length = 8;
        try {
            beam_search(remote, no_trajectory(), kVocab, cfg);
        } catch (const ScorerError& e) {
            return static_cast<int>(e.kind());
        }
        return -1;
    };
    CHECK(kind_during_search("close-after " + vs + " 5") == static_cast<int>(ScorerError::Kind::Transport));
    CHECK(kind_during_search("version " + vs) == static_cast<int>(ScorerError::Kind::Version));
    CHECK(kind_during_search("short " + vs) == static_cast<int>(ScorerError::Kind::Malformed));
    CHECK(kind_during_search("garbage " + vs) == static_cast<int>(ScorerError::Kind::Malformed));
    CHECK(kind_during_search("error " + vs) == static_cast<int>(ScorerError::Kind::Peer));

    RemoteScorer broken(peer("close-after " + vs + " 0"), v);
    CHECK_THROWS_AS(broken.logits(no_trajectory(), {TokenId{1}}), ScorerError);
    CHECK_THROWS_AS(broken.logits(no_trajectory(), {TokenId{1}}), ScorerError);

    CHECK_THROWS_AS(RemoteScorer("tcp:localhost:1", v), ScorerError);
    CHECK_THROWS_AS(RemoteScorer("unix:/nonexistent/dir/sock", v), ScorerError);

    RemoteScorer slow("exec:sleep 5", v, std::chrono::milliseconds(200));
    CHECK_THROWS_AS(slow.logits(no_trajectory(), {TokenId{1}}), ScorerError);
}

TEST_CASE("remote scorer over a unix socket") {
    const int v = kVocab.size();
    const std::filesystem::path path =
        std::filesystem::temp_directory_path() / ("symode_scorer_" + std::to_string(::getpid()) + ".sock");
    std::filesystem::remove(path);
    const int listener = ::socket(AF_UNIX, SOCK_STREAM, 0);
    REQUIRE(listener >= 0);
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    std::strncpy(addr.sun_path, path.c_str(), sizeof(addr.sun_path) - 1);
    REQUIRE(::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0);
    REQUIRE(::listen(listener, 1) == 0);
    std::atomic<int> served{0};
    std::thread server([&] {
        const int conn = ::accept(listener, nullptr, nullptr);
        std::string buf;
        char chunk[4096];
        while (true) {
            const ssize_t n = ::recv(conn, chunk, sizeof(chunk), 0);
            if (n <= 0) break;
            buf.append(chunk, static_cast<std::size_t>(n));
            std::size_t nl;
            while ((nl = buf.find('\n')) != std::string::npos) {
                const ScorerRequest req = decode_request(buf.substr(0, nl));
                buf.erase(0, nl + 1);
                std::vector<double> logits = testing::fake_peer_logits(v);
                logits[0] = static_cast<double>(req.prefix.size());
                const std::string out = encode_response(logits);
                ::send(conn, out.data(), out.size(), MSG_NOSIGNAL);
                ++served;
            }
        }
        ::close(conn);
    });
    {
        RemoteScorer remote("unix:" + path.string(), v);
        const auto l = remote.logits({"x#1", TrajectoryTokens(0, 2)}, {TokenId{1}, TokenId{4}});
        CHECK(l[0] == 2.0);
        CHECK(l[1] == testing::fake_peer_logits(v)[1]);
    }
    server.join();
    ::close(listener);
    std::filesystem::remove(path);
    CHECK(served == 1);
}
