#include "symode/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <exception>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include "symode/simplify.hpp"

namespace symode {

using nlohmann::json;

CorpusFormatError::CorpusFormatError(std::size_t line, const std::string& message)
    : std::runtime_error("corpus line " + std::to_string(line) + ": " + message), line_(line) {}

// ---------------------------------------------------------------- encoding

std::string encode_doubles_base64(const Eigen::VectorXd& y) {
    std::string bytes(static_cast<std::size_t>(y.size()) * 8, '\0');
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const std::uint64_t bits = std::bit_cast<std::uint64_t>(y[i]);
        for (int b = 0; b < 8; ++b) bytes[static_cast<std::size_t>(i) * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    }
    std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

Eigen::VectorXd decode_doubles_base64(std::string_view text) {
    if (text.size() % 4 != 0) throw std::invalid_argument("base64 length must be a multiple of 4");
    std::string bytes(text.size() / 4 * 3 + 1, '\0');
    const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(bytes.data()),
                                  reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
    if (n < 0) throw std::invalid_argument("invalid base64");
    // EVP_DecodeBlock keeps the zero bytes that padding stands for.
    std::size_t len = static_cast<std::size_t>(n);
    if (!text.empty() && text.back() == '=') --len;
    if (text.size() >= 2 && text[text.size() - 2] == '=') --len;
    if (len % 8 != 0) throw std::invalid_argument("base64 payload is not a whole number of doubles");
    Eigen::VectorXd y(static_cast<Eigen::Index>(len / 8));
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[static_cast<std::size_t>(i) * 8 + b]))
                    << (8 * b);
        y[i] = std::bit_cast<double>(bits);
    }
    return y;
}

json record_to_json(const CorpusRecord& r, YEncoding enc) {
    json j{{"skeleton", r.skeleton},
           {"expression", r.expression},
           {"constants", r.constants},
           {"y0", r.y0},
           {"grid", {{"T", r.T}, {"n", r.n_grid}}},
           {"qc", r.qc},
           {"provenance", {{"seed", r.provenance.seed}, {"stream", r.provenance.stream}, {"index", r.provenance.index}}}};
    if (enc == YEncoding::Base64)
        j["y"] = encode_doubles_base64(r.y);
    else
        j["y"] = std::vector<double>(r.y.data(), r.y.data() + r.y.size());
    if (!r.source.empty()) j["source"] = r.source;
    return j;
}

CorpusRecord record_from_json(const json& j) {
    if (!j.is_object()) throw std::invalid_argument("record must be a JSON object");
    CorpusRecord r;
    r.skeleton = j.at("skeleton").get<std::string>();
    r.expression = j.at("expression").get<std::string>();
    r.constants = j.at("constants").get<std::vector<double>>();
    r.y0 = j.at("y0").get<double>();
    r.T = j.at("grid").at("T").get<double>();
    r.n_grid = j.at("grid").at("n").get<int>();
    r.qc = j.at("qc").get<std::string>();
    const json& p = j.at("provenance");
    r.provenance = {p.at("seed").get<std::uint64_t>(), p.at("stream").get<std::uint64_t>(),
                    p.at("index").get<std::uint64_t>()};
    const json& y = j.at("y");
    if (y.is_string()) {
        r.y = decode_doubles_base64(y.get<std::string>());
    } else if (y.is_array()) {
        const auto v = y.get<std::vector<double>>();
        r.y = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    } else {
        throw std::invalid_argument("y must be a base64 string or a number array");
    }
    if (const auto s = j.find("source"); s != j.end()) r.source = s->get<std::string>();
    return r;
}

json header_to_json(const CorpusHeader& h) {
    return {{"format", "symode-corpus"},
            {"version", CorpusHeader::kVersion},
            {"kind", h.kind},
            {"encoding", h.encoding == YEncoding::Base64 ? "base64" : "plain"},
            {"config", h.config}};
}

CorpusHeader header_from_json(const json& j) {
    if (!j.is_object() || j.value("format", "") != "symode-corpus")
        throw std::invalid_argument("missing symode-corpus header");
    if (j.at("version").get<int>() != CorpusHeader::kVersion)
        throw std::invalid_argument("unsupported corpus version " + j.at("version").dump());
    CorpusHeader h;
    h.kind = j.at("kind").get<std::string>();
    const std::string enc = j.at("encoding").get<std::string>();
    if (enc != "base64" && enc != "plain") throw std::invalid_argument("unknown y encoding '" + enc + "'");
    h.encoding = enc == "base64" ? YEncoding::Base64 : YEncoding::Plain;
    h.config = j.value("config", json::object());
    return h;
}

CorpusWriter::CorpusWriter(std::ostream& out, CorpusHeader header) : out_(out), header_(std::move(header)) {
    out_ << header_to_json(header_).dump() << '\n';
}

void CorpusWriter::write(const CorpusRecord& r) {
    out_ << record_to_json(r, header_.encoding).dump() << '\n';
    ++written_;
}

Corpus read_corpus(std::istream& in) {
    Corpus corpus;
    std::string line;
    std::size_t number = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            if (!have_header) {
                corpus.header = header_from_json(j);
                have_header = true;
            } else {
                corpus.records.push_back(record_from_json(j));
            }
        } catch (const std::exception& e) {
            throw CorpusFormatError(number, e.what());
        }
    }
    if (!have_header) throw CorpusFormatError(number, "empty file: header line missing");
    return corpus;
}

Corpus read_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus " + path.string());
    return read_corpus(in);
}

// ---------------------------------------------------------------- records

std::optional<std::string> validate_record(const CorpusRecord& r, double qc_epsilon) {
    Expr e;
    try {
        e = parse_prefix(r.expression);
    } catch (const ParseError& err) {
        return std::string("expression does not parse: ") + err.what();
    }
    const Simplified s = simplify(e);
    if (!s.usable() || !(s.expr == e)) return "expression is not in canonical form";
    if (skeletonize(e).key() != r.skeleton) return "expression does not skeletonize to the stored skeleton";
    const auto leaves = constant_leaves(e);
    if (leaves.size() != r.constants.size()) return "constant list length differs from the expression";
    for (std::size_t k = 0; k < leaves.size(); ++k)
        if (leaves[k].value() != r.constants[k]) return "constant list differs from the expression";
    if (r.y.size() != r.n_grid || r.n_grid < 2) return "y length differs from the grid size";
    if (!r.y.allFinite()) return "y holds non-finite values";
    if (r.y[0] != r.y0) return "y does not start at y0";
    if (r.qc != "passed") return "qc status is '" + r.qc + "'";
    Solution sol;
    sol.t = time_grid(r.T, r.n_grid);
    sol.y = r.y;
    sol.y0 = r.y0;
    if (!qc_check(sol, e, qc_epsilon)) return "finite-difference check fails";
    return std::nullopt;
}

SolveOutcome solve_record(const Expr& f, double y0, const SolveConfig& cfg, Provenance prov) {
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                              std::chrono::duration<double>(cfg.timeout_seconds));
    Solution sol = integrate(f, y0, cfg, deadline);
    if (!sol.ok()) return {std::nullopt, sol.status, sol.detail};
    if (!qc_check(sol, f, cfg.qc_epsilon)) return {std::nullopt, SolveStatus::QcRejected, "finite-difference check"};
    CorpusRecord r;
    r.skeleton = skeletonize(f).key();
    r.expression = to_prefix_string(f);
    for (const Expr& c : constant_leaves(f)) r.constants.push_back(c.value());
    r.y0 = y0;
    r.T = cfg.T;
    r.n_grid = cfg.n_grid;
    r.y = std::move(sol.y);
    r.provenance = prov;
    return {std::move(r), SolveStatus::Ok, {}};
}

// ---------------------------------------------------------------- generation

void CorpusJob::validate() const {
    gen.validate();
    solve.validate();
    auto fail = [](const std::string& what) { throw std::invalid_argument("CorpusJob: " + what); };
    if (target_skeletons < 1) fail("target skeleton count must be >= 1");
    if (workers < 1) fail("workers must be >= 1");
    if (chunk < 1) fail("chunk must be >= 1");
    if (max_sample_attempts < 1) fail("max_sample_attempts must be >= 1");
}

json GenerationReport::to_json() const {
    return {{"tasks", tasks},
            {"sample_rejected", sample_rejected},
            {"tasks_exhausted", tasks_exhausted},
            {"duplicates", duplicates},
            {"skeletons", skeletons},
            {"skeletons_unsolved", skeletons_unsolved},
            {"resample_exhausted", resample_exhausted},
            {"constant_sets", constant_sets},
            {"solves", solves},
            {"solver_failed", solver_failed},
            {"blowup", blowup},
            {"qc_rejected", qc_rejected},
            {"records", records},
            {"failure_rate", failure_rate()}};
}

namespace {

// Runs f(0..n-1) on up to `workers` threads; rethrows the first exception.
template <class F>
void parallel_for(std::size_t n, int workers, F&& f) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                f(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const auto count = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    for (std::size_t w = 0; w < count; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

enum : std::uint64_t { kSaltSample = 0, kSaltSolve = 1, kSaltTestset = 2, kSaltFreshSkeleton = 3, kSaltClassic = 4 };

bool constants_in_range(const Expr& e, const GenerationConfig& gen) {
    const double lo = std::min<double>(gen.int_min, gen.real_min);
    const double hi = std::max<double>(gen.int_max, gen.real_max);
    for (const Expr& c : constant_leaves(e))
        if (c.value() == 0.0 || c.value() < lo || c.value() > hi) return false;
    return true;
}

struct TaskOutput {
    std::optional<Expr> expr;
    std::string key;
    std::uint64_t rejected = 0;
    bool accepted = false;
    std::vector<CorpusRecord> records;
    GenerationReport counts; // solve-stage counters only
};

void solve_task(std::uint64_t task, const CorpusJob& job, TaskOutput& out) {
    Rng rng = make_stream(job.seed, task, kSaltSolve);
    const Expr& e = *out.expr;
    const Skeleton skeleton = skeletonize(e);
    std::vector<Expr> sets{e};
    const int attempts = 4 * job.gen.n_const;
    for (int a = 0; a < attempts && static_cast<int>(sets.size()) < job.gen.n_const; ++a) {
        Expr candidate;
        try {
            candidate = resample_constants(skeleton, job.gen, rng);
        } catch (const ResampleExhausted&) {
            ++out.counts.resample_exhausted;
            break;
        }
        if (!constants_in_range(candidate, job.gen)) continue;
        if (std::none_of(sets.begin(), sets.end(), [&](const Expr& s) { return same_value_tree(s, candidate); }))
            sets.push_back(std::move(candidate));
    }
    out.counts.constant_sets = sets.size();
    std::uint64_t index = 0;
    for (const Expr& f : sets) {
        for (double y0 : sample_initial_values(job.solve, rng)) {
            ++out.counts.solves;
            SolveOutcome o = solve_record(f, y0, job.solve, {job.seed, task, index});
            switch (o.status) {
            case SolveStatus::Ok:
                out.records.push_back(std::move(*o.record));
                ++index;
                break;
            case SolveStatus::SolverFailed: ++out.counts.solver_failed; break;
            case SolveStatus::Blowup: ++out.counts.blowup; break;
            case SolveStatus::QcRejected: ++out.counts.qc_rejected; break;
            }
        }
    }
}

} // namespace

GenerationReport generate_corpus(const CorpusJob& job, const RecordSink& sink) {
    job.validate();
    GenerationReport report;
    std::set<std::string> seen = job.excluded_skeletons;
    const std::uint64_t max_tasks = 1000ull * static_cast<std::uint64_t>(job.target_skeletons) + 100000ull;
    std::uint64_t first = 0;
    bool done = false;
    while (!done && first < max_tasks) {
        // Output depends only on task order, so rounds shrink to what is still missing.
        const std::uint64_t missing = static_cast<std::uint64_t>(job.target_skeletons) - report.skeletons;
        const std::uint64_t round = std::min<std::uint64_t>(
            static_cast<std::uint64_t>(job.chunk), std::max<std::uint64_t>(missing, static_cast<std::uint64_t>(job.workers)));
        const auto n = static_cast<std::size_t>(std::min<std::uint64_t>(round, max_tasks - first));
        std::vector<TaskOutput> tasks(n);
        parallel_for(n, job.workers, [&](std::size_t i) {
            Rng rng = make_stream(job.seed, first + i, kSaltSample);
            for (int a = 0; a < job.max_sample_attempts; ++a) {
                auto e = sample_expression(job.gen, rng);
                if (e && constants_in_range(*e, job.gen)) {
                    tasks[i].key = skeletonize(*e).key();
                    tasks[i].expr = std::move(e);
                    return;
                }
                ++tasks[i].rejected;
            }
        });
        for (auto& t : tasks) {
            if (!t.expr) continue;
            t.accepted = seen.insert(t.key).second;
        }
        parallel_for(n, job.workers, [&](std::size_t i) {
            if (tasks[i].accepted) solve_task(first + i, job, tasks[i]);
        });
        for (std::size_t i = 0; i < n && !done; ++i) {
            TaskOutput& t = tasks[i];
            ++report.tasks;
            report.sample_rejected += t.rejected;
            if (!t.expr) {
                ++report.tasks_exhausted;
                continue;
            }
            if (!t.accepted) {
                ++report.duplicates;
                continue;
            }
            report.resample_exhausted += t.counts.resample_exhausted;
            report.constant_sets += t.counts.constant_sets;
            report.solves += t.counts.solves;
            report.solver_failed += t.counts.solver_failed;
            report.blowup += t.counts.blowup;
            report.qc_rejected += t.counts.qc_rejected;
            if (t.records.empty()) {
                ++report.skeletons_unsolved;
                continue;
            }
            ++report.skeletons;
            for (const CorpusRecord& r : t.records) {
                sink(r);
                ++report.records;
                if (job.max_records && report.records >= job.max_records) {
                    done = true;
                    break;
                }
            }
            if (report.skeletons >= static_cast<std::uint64_t>(job.target_skeletons)) done = true;
        }
        first += n;
    }
    return report;
}

std::vector<CorpusRecord> generate_corpus(const CorpusJob& job, GenerationReport* report) {
    std::vector<CorpusRecord> out;
    const GenerationReport r = generate_corpus(job, [&](const CorpusRecord& rec) { out.push_back(rec); });
    if (report) *report = r;
    return out;
}

std::set<std::string> skeleton_registry(const std::vector<CorpusRecord>& records) {
    std::set<std::string> keys;
    for (const auto& r : records) keys.insert(r.skeleton);
    return keys;
}

void write_registry(std::ostream& out, const std::set<std::string>& keys) {
    for (const auto& k : keys) out << k << '\n';
}

std::set<std::string> read_registry(std::istream& in) {
    std::set<std::string> keys;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) keys.insert(line);
    return keys;
}

// ---------------------------------------------------------------- test sets

std::string_view testset_kind_name(TestsetKind k) noexcept {
    switch (k) {
    case TestsetKind::Iv: return "iv";
    case TestsetKind::Constants: return "constants";
    case TestsetKind::Skeletons: return "skeletons";
    case TestsetKind::IvSubsample: return "iv-subsample";
    case TestsetKind::Textbook: return "textbook";
    case TestsetKind::Classic: return "classic";
    }
    return "?";
}

std::optional<TestsetKind> testset_kind_from_name(std::string_view name) noexcept {
    for (auto k : {TestsetKind::Iv, TestsetKind::Constants, TestsetKind::Skeletons, TestsetKind::IvSubsample,
                   TestsetKind::Textbook, TestsetKind::Classic})
        if (testset_kind_name(k) == name) return k;
    return std::nullopt;
}

void TestsetSpec::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("TestsetSpec: " + what); };
    if (per_operator_cap < 1) fail("per-operator cap must be >= 1");
    if (per_complexity_cap < 1) fail("per-complexity cap must be >= 1");
    if (kind == TestsetKind::Skeletons && size == 0) fail("kind skeletons needs a size");
}

std::vector<CorpusRecord> benchmark_records(const std::vector<BenchmarkOde>& rows, const std::string& source,
                                            const SolveConfig& solve, std::vector<std::string>* failed, Rng* redraw,
                                            int max_draws) {
    std::vector<CorpusRecord> out;
    std::uniform_real_distribution<double> y0_dist(solve.y0_min, solve.y0_max);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        SolveOutcome o = solve_record(rows[i].f, rows[i].y0, solve, {0, i, 0});
        for (int d = 0; redraw && !o.record && d < max_draws; ++d)
            o = solve_record(rows[i].f, y0_dist(*redraw), solve, {0, i, 0});
        if (!o.record) {
            if (failed) failed->push_back(rows[i].name + ": " + std::string(status_name(o.status)));
            continue;
        }
        o.record->source = source + ":" + rows[i].name;
        out.push_back(std::move(*o.record));
    }
    return out;
}

namespace {

double fresh_y0(const SolveConfig& solve, const std::set<double>& used, Rng& rng) {
    std::uniform_real_distribution<double> dist(solve.y0_min, solve.y0_max);
    while (true) {
        const double y0 = dist(rng);
        if (y0 != solve.y0_min && !used.count(y0)) return y0;
    }
}

struct Selection {
    const TestsetSpec& spec;
    std::map<std::size_t, std::size_t> per_ops;
    std::set<std::string> skeletons;
    std::vector<CorpusRecord> out;
    std::size_t rejections = 0;

    bool full() const { return spec.size && out.size() >= spec.size; }
    bool admits(const std::string& key, std::size_t ops) const {
        if (skeletons.count(key)) return false;
        const auto it = per_ops.find(ops);
        return it == per_ops.end() || it->second < spec.per_operator_cap;
    }
    void take(CorpusRecord r, std::size_t ops, std::uint64_t seed) {
        skeletons.insert(r.skeleton);
        ++per_ops[ops];
        r.provenance = {seed, out.size(), 0};
        out.push_back(std::move(r));
    }
    bool reject() { return ++rejections > spec.max_rejections; }
    void finish(std::string_view kind) const {
        if (spec.size && out.size() < spec.size)
            throw InsufficientSupply("testset " + std::string(kind) + ": built " + std::to_string(out.size()) +
                                     " of " + std::to_string(spec.size) + " records after " +
                                     std::to_string(rejections) + " rejections");
    }
};

std::vector<CorpusRecord> resampled_testset(const Corpus& corpus, const TestsetSpec& spec, const GenerationConfig& gen,
                                            const SolveConfig& solve, std::uint64_t seed) {
    const bool new_constants = spec.kind == TestsetKind::Constants;
    std::map<std::string, std::set<double>> used_y0;
    std::map<std::string, std::set<std::vector<double>>> used_constants;
    for (const auto& r : corpus.records) {
        used_y0[r.skeleton].insert(r.y0);
        used_constants[r.skeleton].insert(r.constants);
    }
    std::vector<std::size_t> order(corpus.records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = make_stream(seed, 0, kSaltTestset);
    std::shuffle(order.begin(), order.end(), rng);

    Selection sel{spec, {}, {}, {}, 0};
    for (std::size_t idx : order) {
        if (sel.full()) break;
        const CorpusRecord& src = corpus.records[idx];
        Expr f = src.expr();
        const std::size_t ops = operator_count(f);
        if (!sel.admits(src.skeleton, ops)) continue;
        if (new_constants) {
            std::optional<Expr> fresh;
            for (int attempt = 0; attempt < 10 && !fresh; ++attempt) {
                Expr c;
                try {
                    c = resample_constants(skeletonize(f), gen, rng);
                } catch (const ResampleExhausted&) {
                    break;
                }
                std::vector<double> values;
                for (const Expr& leaf : constant_leaves(c)) values.push_back(leaf.value());
                if (constants_in_range(c, gen) && !used_constants[src.skeleton].count(values)) fresh = std::move(c);
            }
            if (!fresh) {
                if (sel.reject()) break;
                continue;
            }
            f = std::move(*fresh);
        }
        SolveOutcome o = solve_record(f, fresh_y0(solve, used_y0[src.skeleton], rng), solve, {});
        if (!o.record) {
            if (sel.reject()) break;
            continue;
        }
        sel.take(std::move(*o.record), ops, seed);
    }
    sel.finish(testset_kind_name(spec.kind));
    return std::move(sel.out);
}

std::vector<CorpusRecord> fresh_skeleton_testset(const Corpus& corpus, const TestsetSpec& spec,
                                                 const GenerationConfig& gen, const SolveConfig& solve,
                                                 std::uint64_t seed) {
    std::set<std::string> excluded = spec.registry;
    for (const auto& r : corpus.records) excluded.insert(r.skeleton);
    Selection sel{spec, {}, {}, {}, 0};
    const std::uint64_t max_tasks = 100 * (spec.max_rejections + spec.size);
    for (std::uint64_t task = 0; !sel.full() && task < max_tasks; ++task) {
        Rng rng = make_stream(seed, task, kSaltFreshSkeleton);
        auto e = sample_expression(gen, rng);
        if (!e || !constants_in_range(*e, gen)) continue;
        const std::string key = skeletonize(*e).key();
        const std::size_t ops = operator_count(*e);
        if (excluded.count(key) || !sel.admits(key, ops)) {
            if (sel.reject()) break;
            continue;
        }
        const double y0 = fresh_y0(solve, {}, rng);
        SolveOutcome o = solve_record(*e, y0, solve, {});
        if (!o.record) {
            if (sel.reject()) break;
            continue;
        }
        sel.take(std::move(*o.record), ops, seed);
    }
    sel.finish(testset_kind_name(spec.kind));
    return std::move(sel.out);
}

std::vector<CorpusRecord> subsample_testset(const Corpus& corpus, const TestsetSpec& spec, std::uint64_t seed) {
    std::map<std::size_t, std::vector<std::size_t>> by_complexity;
    for (std::size_t i = 0; i < corpus.records.size(); ++i)
        by_complexity[complexity(corpus.records[i].expr())].push_back(i);
    Rng rng = make_stream(seed, 0, kSaltTestset);
    std::vector<CorpusRecord> out;
    std::set<std::string> skeletons;
    for (auto& [c, indices] : by_complexity) {
        std::shuffle(indices.begin(), indices.end(), rng);
        std::size_t taken = 0;
        for (std::size_t i : indices) {
            if (taken == spec.per_complexity_cap) break;
            if (!skeletons.insert(corpus.records[i].skeleton).second) continue;
            out.push_back(corpus.records[i]);
            ++taken;
        }
    }
    if (spec.size && out.size() < spec.size)
        throw InsufficientSupply("testset iv-subsample: only " + std::to_string(out.size()) + " records available");
    if (spec.size) out.resize(spec.size);
    return out;
}

} // namespace

std::vector<CorpusRecord> build_testset(const Corpus& corpus, const TestsetSpec& spec, const GenerationConfig& gen,
                                        const SolveConfig& solve, std::uint64_t seed,
                                        const std::optional<std::filesystem::path>& classic_file) {
    spec.validate();
    gen.validate();
    solve.validate();
    switch (spec.kind) {
    case TestsetKind::Iv:
    case TestsetKind::Constants: return resampled_testset(corpus, spec, gen, solve, seed);
    case TestsetKind::Skeletons: return fresh_skeleton_testset(corpus, spec, gen, solve, seed);
    case TestsetKind::IvSubsample: return subsample_testset(corpus, spec, seed);
    case TestsetKind::Textbook: return benchmark_records(load_textbook(), "textbook", solve);
    case TestsetKind::Classic: {
        Rng rng = make_stream(seed, 0, kSaltClassic);
        const auto rows = classic_file ? load_classic(*classic_file, solve, rng) : load_classic(nullptr, solve, rng);
        return benchmark_records(rows, "classic", solve, nullptr, &rng);
    }
    }
    throw std::invalid_argument("unknown test set kind");
}

// ---------------------------------------------------------------- statistics

namespace {

constexpr std::array<Op, 11> kCountedOps = {Op::Add, Op::Sub, Op::Mul, Op::Div,  Op::Pow, Op::Sin,
                                            Op::Cos, Op::Exp, Op::Sqrt, Op::Log, Op::Neg};

void count_ops(const Expr& e, std::map<Op, std::uint64_t>& counts) {
    if (is_operator(e.op())) ++counts[e.op()];
    for (const Expr& c : e.children()) count_ops(c, counts);
}

} // namespace

CorpusStats corpus_stats(const std::vector<CorpusRecord>& records) {
    std::map<Op, std::uint64_t> ops;
    std::map<std::size_t, std::uint64_t> sizes;
    for (const auto& r : records) {
        const Expr e = r.expr();
        count_ops(e, ops);
        ++sizes[complexity(e)];
    }
    CorpusStats s;
    for (Op op : kCountedOps)
        if (ops[op]) s.operators.emplace_back(std::string(op_name(op)), ops[op]);
    s.complexity.assign(sizes.begin(), sizes.end());
    return s;
}

std::string CorpusStats::operators_csv() const {
    std::ostringstream out;
    out << "operator,count\n";
    for (const auto& [name, n] : operators) out << name << ',' << n << '\n';
    return out.str();
}

std::string CorpusStats::complexity_csv() const {
    std::ostringstream out;
    out << "complexity,count\n";
    for (const auto& [c, n] : complexity) out << c << ',' << n << '\n';
    return out.str();
}

} // namespace symode
