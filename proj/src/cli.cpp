#include "symode/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "symode/codec.hpp"
#include "symode/dataset.hpp"
#include "symode/inference.hpp"
#include "symode/metrics.hpp"
#include "symode/simplify.hpp"

namespace symode::cli {

namespace {

using nlohmann::json;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Settings {
    GenerationConfig gen;
    SolveConfig solve;
    MetricsConfig metrics;
    BeamConfig beam;
    std::vector<double> binary_weights{0.2, 0.2, 0.2, 0.2, 0.2};
    std::vector<double> unary_weights{0.2, 0.2, 0.2, 0.2, 0.2};
    std::uint64_t seed = 0;
    int workers = 1;
    std::string log_level = "info";

    // Moves the vector-valued flags into the configs and validates everything.
    void finalize() {
        if (binary_weights.size() != 5 || unary_weights.size() != 5)
            throw UsageError("operator weight lists need exactly 5 entries");
        std::copy(binary_weights.begin(), binary_weights.end(), gen.binary_weights.begin());
        std::copy(unary_weights.begin(), unary_weights.end(), gen.unary_weights.begin());
        try {
            gen.validate();
            solve.validate();
            metrics.validate();
            beam.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        if (workers < 1) throw UsageError("--workers must be >= 1");
    }

    json to_json() const {
        return {{"generation",
                 {{"max_ops", gen.max_internal_nodes},
                  {"binary_weights", gen.binary_weights},
                  {"unary_weights", gen.unary_weights},
                  {"p_sym", gen.p_symbol},
                  {"p_int", gen.p_integer},
                  {"int_min", gen.int_min},
                  {"int_max", gen.int_max},
                  {"real_min", gen.real_min},
                  {"real_max", gen.real_max},
                  {"n_const", gen.n_const}}},
                {"solve",
                 {{"T", solve.T},
                  {"n_grid", solve.n_grid},
                  {"n_iv", solve.n_iv},
                  {"y0_min", solve.y0_min},
                  {"y0_max", solve.y0_max},
                  {"rtol", solve.rtol},
                  {"atol", solve.atol},
                  {"blowup", solve.blowup},
                  {"max_steps", solve.max_steps},
                  {"max_step", solve.max_step},
                  {"qc_epsilon", solve.qc_epsilon},
                  {"timeout", solve.timeout_seconds}}},
                {"metrics",
                 {{"n_eval", metrics.n_eval},
                  {"allclose_atol", metrics.atol},
                  {"allclose_rtol", metrics.rtol},
                  {"r2_threshold", metrics.r2_threshold}}},
                {"beam",
                 {{"width", beam.width},
                  {"max_length", beam.max_length},
                  {"length_penalty", beam.length_penalty},
                  {"top_k", beam.top_k}}},
                {"seed", seed}};
    }
};

void add_config_options(CLI::App& app, Settings& s) {
    const std::string gen = "Generation", sol = "Solver", met = "Metrics", beam = "Beam search", run = "Run";
    app.add_option("--max-ops", s.gen.max_internal_nodes, "max internal nodes per tree (K)")->group(gen);
    app.add_option("--binary-weights", s.binary_weights, "weights of add,sub,mul,div,pow")->delimiter(',')->group(gen);
    app.add_option("--unary-weights", s.unary_weights, "weights of sin,cos,exp,sqrt,log")->delimiter(',')->group(gen);
    app.add_option("--p-sym", s.gen.p_symbol, "probability a leaf is y")->group(gen);
    app.add_option("--p-int", s.gen.p_integer, "probability a constant is an integer")->group(gen);
    app.add_option("--int-min", s.gen.int_min, "smallest integer constant")->group(gen);
    app.add_option("--int-max", s.gen.int_max, "largest integer constant")->group(gen);
    app.add_option("--real-min", s.gen.real_min, "lower end of real constants (open)")->group(gen);
    app.add_option("--real-max", s.gen.real_max, "upper end of real constants (open)")->group(gen);
    app.add_option("--n-const", s.gen.n_const, "constant sets per skeleton")->group(gen);

    app.add_option("--T", s.solve.T, "time horizon")->group(sol);
    app.add_option("--n-grid", s.solve.n_grid, "time grid points")->group(sol);
    app.add_option("--n-iv", s.solve.n_iv, "initial values per ODE")->group(sol);
    app.add_option("--y0-min", s.solve.y0_min, "lower end of initial values (open)")->group(sol);
    app.add_option("--y0-max", s.solve.y0_max, "upper end of initial values (open)")->group(sol);
    app.add_option("--rtol", s.solve.rtol, "solver relative tolerance")->group(sol);
    app.add_option("--atol", s.solve.atol, "solver absolute tolerance")->group(sol);
    app.add_option("--blowup", s.solve.blowup, "abort when |y| exceeds this")->group(sol);
    app.add_option("--max-steps", s.solve.max_steps, "solver step cap")->group(sol);
    app.add_option("--max-step", s.solve.max_step, "largest solver step")->group(sol);
    app.add_option("--qc-epsilon", s.solve.qc_epsilon, "finite-difference QC threshold")->group(sol);
    app.add_option("--timeout", s.solve.timeout_seconds, "wall-clock seconds per ODE")->group(sol);

    app.add_option("--n-eval", s.metrics.n_eval, "evaluation points over the solution range")->group(met);
    app.add_option("--allclose-atol", s.metrics.atol, "allclose absolute tolerance")->group(met);
    app.add_option("--allclose-rtol", s.metrics.rtol, "allclose relative tolerance")->group(met);
    app.add_option("--r2-threshold", s.metrics.r2_threshold, "R^2 pass threshold")->group(met);

    app.add_option("--beam-width", s.beam.width, "beam width")->group(beam);
    app.add_option("--max-length", s.beam.max_length, "max decoded items incl. BOS and EOS")->group(beam);
    app.add_option("--length-penalty", s.beam.length_penalty, "rank by score/length^p; 0 disables")->group(beam);
    app.add_option("--top-k", s.beam.top_k, "k values to report")->delimiter(',')->group(beam);

    app.add_option("--seed", s.seed, "master seed")->group(run);
    app.add_option("--workers", s.workers, "worker threads for generation")->group(run);
    app.add_option("--log-level", s.log_level, "trace, debug, info, warn, error")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}))
        ->group(run);
}

// Output stream for `path`, stdout when empty or "-".
class Output {
public:
    explicit Output(const std::string& path) {
        if (path.empty() || path == "-") return;
        file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
        if (!*file_) throw std::runtime_error("cannot write " + path);
    }
    std::ostream& stream() { return file_ ? *file_ : std::cout; }
    void close() {
        stream().flush();
        if (!stream()) throw std::runtime_error("write failed");
    }

private:
    std::unique_ptr<std::ofstream> file_;
};

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return in;
}

// Prefix first, infix as fallback; the result is canonical.
Expr parse_expression(const std::string& text) {
    Expr e;
    try {
        e = parse_prefix(text);
    } catch (const ParseError&) {
        try {
            e = parse_infix(text);
        } catch (const ParseError& err) {
            throw std::runtime_error("cannot parse '" + text + "' as prefix or infix: " + err.what());
        }
    }
    const Simplified s = simplify(e);
    if (!s.valid) throw std::runtime_error("expression '" + text + "' folds to an invalid value");
    return s.expr;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in = open_input(path);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);)
        if (!line.empty() && line[0] != '#') out.push_back(line);
    return out;
}

// One expression per line: bare text, or a JSON object with "prefix" or
// "expression" (decode/encode output). Artifact headers are skipped.
std::vector<std::string> read_expression_lines(const std::string& path) {
    std::vector<std::string> out;
    for (auto& line : read_lines(path)) {
        if (line.front() != '{') {
            out.push_back(std::move(line));
            continue;
        }
        const json j = json::parse(line);
        if (j.contains("format")) continue;
        out.push_back(j.contains("prefix") ? j.at("prefix").get<std::string>() : j.at("expression").get<std::string>());
    }
    return out;
}

bool looks_like_corpus(const std::string& path) {
    std::ifstream in = open_input(path);
    std::string first;
    std::getline(in, first);
    const json j = json::parse(first, nullptr, false);
    return j.is_object() && j.value("format", "") == "symode-corpus";
}

json effective_config(const Settings& s, json command) {
    json config = s.to_json();
    config["command"] = std::move(command);
    return config;
}

// First line of every non-corpus JSONL artifact.
void write_artifact_header(std::ostream& out, const std::string& format, const Settings& s, json command) {
    out << json{{"config", effective_config(s, std::move(command))}, {"format", format}, {"version", 1}}.dump() << '\n';
}

bool is_artifact_header(const json& j) { return j.is_object() && j.contains("format"); }

// CSV has no header slot, so the effective config goes to "<path>.config.json".
void write_csv(const std::string& path, const std::string& text, const Settings& s, json command) {
    Output csv(path);
    csv.stream() << text;
    csv.close();
    if (path.empty() || path == "-") return;
    Output side(path + ".config.json");
    side.stream() << effective_config(s, std::move(command)).dump(2) << '\n';
    side.close();
}

CorpusHeader make_header(const std::string& kind, const Settings& s, bool plain, json extra) {
    return {kind, plain ? YEncoding::Plain : YEncoding::Base64, effective_config(s, std::move(extra))};
}

void write_records(const std::string& path, const CorpusHeader& header, const std::vector<CorpusRecord>& records) {
    Output out(path);
    CorpusWriter writer(out.stream(), header);
    for (const auto& r : records) writer.write(r);
    out.close();
}

std::string csv_with_k(const std::vector<int>& ks, const std::vector<std::vector<MetricsReport>>& per_k) {
    std::string out;
    for (std::size_t j = 0; j < ks.size(); ++j) {
        std::istringstream table(aggregate_csv(per_k[j]));
        std::string line;
        std::getline(table, line);
        if (j == 0) out += "k," + line + "\n";
        while (std::getline(table, line)) out += std::to_string(ks[j]) + "," + line + "\n";
    }
    if (ks.empty()) out = "k,complexity,count,allclose,r2,skeleton,skeleton_and_allclose,skeleton_and_r2\n";
    return out;
}

} // namespace

int run(int argc, const char* const* argv) {
    auto sink = std::make_shared<spdlog::sinks::stderr_sink_st>();
    spdlog::logger log("symode", sink);
    log.set_pattern("%Y-%m-%dT%H:%M:%S.%e %l %v");

    CLI::App app{"Synthetic ODE corpus generation, tokenization and symbolic-recovery evaluation"};
    app.option_defaults()->always_capture_default();
    app.set_config("--config", "", "key = value file; command-line flags override it");
    app.require_subcommand(1);
    app.fallthrough();
    Settings s;
    add_config_options(app, s);
    std::function<int()> action;

    // generate
    auto* gen = app.add_subcommand("generate", "generate a corpus of solved ODEs");
    struct {
        int skeletons = 10000;
        std::size_t max_records = 0;
        std::string out, registry_out, exclude, report;
        bool plain = false;
    } g;
    gen->add_option("--skeletons", g.skeletons, "skeletons with at least one stored record");
    gen->add_option("--max-records", g.max_records, "stop after this many records (0: no cap)");
    gen->add_option("--out", g.out, "corpus JSONL path")->required();
    gen->add_flag("--plain", g.plain, "write y as decimal arrays instead of base64");
    gen->add_option("--registry-out", g.registry_out, "write the sorted skeleton registry here");
    gen->add_option("--exclude-registry", g.exclude, "never emit skeletons listed in this registry");
    gen->add_option("--report", g.report, "write the generation report JSON here");
    gen->callback([&] {
        action = [&] {
            CorpusJob job;
            job.gen = s.gen;
            job.solve = s.solve;
            job.seed = s.seed;
            job.target_skeletons = g.skeletons;
            job.max_records = g.max_records;
            job.workers = s.workers;
            if (!g.exclude.empty()) {
                std::ifstream in = open_input(g.exclude);
                job.excluded_skeletons = read_registry(in);
            }
            const CorpusHeader header = make_header(
                "corpus", s, g.plain, {{"name", "generate"}, {"skeletons", g.skeletons}, {"max_records", g.max_records}});
            Output out(g.out);
            CorpusWriter writer(out.stream(), header);
            std::set<std::string> keys;
            log.info("generate start seed={} skeletons={} workers={}", s.seed, g.skeletons, s.workers);
            const GenerationReport report = generate_corpus(job, [&](const CorpusRecord& r) {
                writer.write(r);
                keys.insert(r.skeleton);
            });
            out.close();
            log.info("generate done {}", report.to_json().dump());
            if (!g.registry_out.empty()) {
                Output reg(g.registry_out);
                write_registry(reg.stream(), keys);
                reg.close();
            }
            if (!g.report.empty()) {
                Output rep(g.report);
                rep.stream() << report.to_json().dump(2) << '\n';
                rep.close();
            }
            const bool reached = report.skeletons >= static_cast<std::uint64_t>(g.skeletons) ||
                                 (g.max_records && report.records >= g.max_records);
            if (!reached) {
                log.error("stopped after {} tasks with {} of {} skeletons", report.tasks, report.skeletons, g.skeletons);
                return 1;
            }
            return 0;
        };
    });

    // testset
    auto* ts = app.add_subcommand("testset", "build a test set");
    struct {
        std::string kind = "iv", corpus, out, registry, classic_file;
        std::size_t size = 0, per_op_cap = 0, per_complexity_cap = 10, max_rejections = 10000;
        bool plain = false;
    } t;
    ts->add_option("--kind", t.kind, "iv, constants, skeletons, iv-subsample, textbook, classic")
        ->check(CLI::IsMember({"iv", "constants", "skeletons", "iv-subsample", "textbook", "classic"}));
    ts->add_option("--corpus", t.corpus, "source corpus (iv, constants, skeletons, iv-subsample)");
    ts->add_option("--out", t.out, "test-set JSONL path (stdout if omitted)");
    ts->add_option("--size", t.size, "required size; 0 takes what the caps allow");
    ts->add_option("--per-op-cap", t.per_op_cap, "records per operator count (0: 2000, constants 1000)");
    ts->add_option("--per-complexity-cap", t.per_complexity_cap, "records per complexity for iv-subsample");
    ts->add_option("--max-rejections", t.max_rejections, "failed draws before giving up");
    ts->add_option("--registry", t.registry, "held-out skeleton registry to exclude (skeletons)");
    ts->add_option("--classic-file", t.classic_file, "extra classic functions, one prefix expression per line");
    ts->add_flag("--plain", t.plain, "write y as decimal arrays");
    ts->callback([&] {
        action = [&] {
            TestsetSpec spec;
            spec.kind = *testset_kind_from_name(t.kind);
            spec.size = t.size;
            spec.per_operator_cap = t.per_op_cap ? t.per_op_cap : (spec.kind == TestsetKind::Constants ? 1000 : 2000);
            spec.per_complexity_cap = t.per_complexity_cap;
            spec.max_rejections = t.max_rejections;
            if (!t.registry.empty()) {
                std::ifstream in = open_input(t.registry);
                spec.registry = read_registry(in);
            }
            if (spec.kind == TestsetKind::Skeletons && spec.size == 0) spec.size = 100;
            const bool needs_corpus = spec.kind != TestsetKind::Textbook && spec.kind != TestsetKind::Classic;
            if (needs_corpus && t.corpus.empty()) throw UsageError("--corpus is required for kind " + t.kind);
            const Corpus corpus = needs_corpus ? read_corpus(std::filesystem::path(t.corpus)) : Corpus{};
            std::optional<std::filesystem::path> classic;
            if (!t.classic_file.empty()) classic = t.classic_file;
            const auto records = build_testset(corpus, spec, s.gen, s.solve, s.seed, classic);
            write_records(t.out,
                          make_header("testset-" + t.kind, s, t.plain,
                                      {{"name", "testset"},
                                       {"kind", t.kind},
                                       {"corpus", t.corpus},
                                       {"size", spec.size},
                                       {"per_op_cap", spec.per_operator_cap},
                                       {"per_complexity_cap", spec.per_complexity_cap}}),
                          records);
            log.info("testset kind={} records={}", t.kind, records.size());
            return 0;
        };
    });

    // solve
    auto* sv = app.add_subcommand("solve", "solve one ODE and write it as a record");
    struct {
        std::string expr, out;
        double y0 = 0.0;
        bool plain = false;
    } so;
    sv->add_option("--expr", so.expr, "f(y), prefix or infix")->required();
    sv->add_option("--y0", so.y0, "initial value")->required();
    sv->add_option("--out", so.out, "record JSONL path (stdout if omitted)");
    sv->add_flag("--plain", so.plain, "write y as a decimal array");
    sv->callback([&] {
        action = [&] {
            const Expr f = parse_expression(so.expr);
            SolveOutcome o = solve_record(f, so.y0, s.solve, {s.seed, 0, 0});
            if (!o.record) {
                log.error("solve failed status={} detail={}", status_name(o.status), o.detail);
                return 1;
            }
            write_records(so.out, make_header("solve", s, so.plain, {{"name", "solve"}, {"expr", so.expr}, {"y0", so.y0}}),
                          {*o.record});
            return 0;
        };
    });

    // qc
    auto* qc = app.add_subcommand("qc", "re-validate every record of a corpus");
    std::string qc_corpus;
    qc->add_option("--corpus", qc_corpus, "corpus JSONL")->required();
    qc->callback([&] {
        action = [&] {
            const Corpus c = read_corpus(std::filesystem::path(qc_corpus));
            std::size_t failed = 0;
            for (std::size_t i = 0; i < c.records.size(); ++i) {
                if (const auto problem = validate_record(c.records[i], s.solve.qc_epsilon)) {
                    ++failed;
                    log.error("record {} ({}): {}", i, c.records[i].expression, *problem);
                }
            }
            std::cout << json{{"records", c.records.size()}, {"passed", c.records.size() - failed}, {"failed", failed}}.dump()
                      << '\n';
            return failed ? 1 : 0;
        };
    });

    // encode
    auto* enc = app.add_subcommand("encode", "tokenize expressions");
    struct {
        std::vector<std::string> exprs;
        std::string corpus, out, vocab_out;
    } en;
    enc->add_option("--expr", en.exprs, "expressions, prefix or infix");
    enc->add_option("--corpus", en.corpus, "tokenize every record of this corpus");
    enc->add_option("--out", en.out, "JSONL of {expression, items} (stdout if omitted)");
    enc->add_option("--vocab-out", en.vocab_out, "write the vocabulary JSON here");
    enc->callback([&] {
        action = [&] {
            const Vocabulary vocab = Vocabulary::standard();
            if (!en.vocab_out.empty()) {
                Output v(en.vocab_out);
                v.stream() << vocab.to_json().dump(2) << '\n';
                v.close();
            }
            std::vector<Expr> exprs;
            for (const auto& text : en.exprs) exprs.push_back(parse_expression(text));
            if (!en.corpus.empty())
                for (const auto& r : read_corpus(std::filesystem::path(en.corpus)).records) exprs.push_back(r.expr());
            if (exprs.empty() && en.vocab_out.empty()) throw UsageError("give --expr, --corpus or --vocab-out");
            Output out(en.out);
            write_artifact_header(out.stream(), "symode-encode", s,
                                  {{"name", "encode"}, {"expr", en.exprs}, {"corpus", en.corpus}});
            for (const Expr& e : exprs) {
                json items = json::array();
                for (const auto& item : tokenize_expr(e, vocab)) items.push_back(item_to_json(item));
                out.stream() << json{{"expression", to_prefix_string(e)}, {"items", items}}.dump() << '\n';
            }
            out.close();
            return 0;
        };
    });

    // decode
    auto* dec = app.add_subcommand("decode", "detokenize item sequences");
    struct {
        std::string items, in, out;
    } de;
    dec->add_option("--items", de.items, "one JSON item array, e.g. '[{\"tok\":1},{\"tok\":3},{\"tok\":2}]'");
    dec->add_option("--in", de.in, "JSONL with an \"items\" array (or a bare array) per line");
    dec->add_option("--out", de.out, "JSONL of {prefix, infix} (stdout if omitted)");
    dec->callback([&] {
        action = [&] {
            const Vocabulary vocab = Vocabulary::standard();
            std::vector<std::string> lines;
            if (!de.items.empty()) lines.push_back(de.items);
            if (!de.in.empty())
                for (auto& l : read_lines(de.in)) lines.push_back(std::move(l));
            if (lines.empty()) throw UsageError("give --items or --in");
            Output out(de.out);
            write_artifact_header(out.stream(), "symode-decode", s, {{"name", "decode"}, {"in", de.in}});
            for (const auto& line : lines) {
                json j = json::parse(line);
                if (is_artifact_header(j)) continue;
                if (j.is_object()) j = j.at("items");
                TokenSeq seq;
                for (const auto& item : j) seq.push_back(item_from_json(item));
                const Expr e = detokenize(seq, vocab);
                out.stream() << json{{"prefix", to_prefix_string(e)}, {"infix", to_infix(e)}}.dump() << '\n';
            }
            out.close();
            return 0;
        };
    });

    // infer
    auto* inf = app.add_subcommand("infer", "beam-search every record of a corpus and score the candidates");
    struct {
        std::string corpus, scorer = "oracle", out, csv;
        std::size_t limit = 0;
    } in;
    inf->add_option("--corpus", in.corpus, "corpus or test-set JSONL")->required();
    inf->add_option("--scorer", in.scorer, "oracle, exec:<command> or unix:<socket path>");
    inf->add_option("--limit", in.limit, "only the first N records (0: all)");
    inf->add_option("--out", in.out, "per-record results JSONL (stdout if omitted)");
    inf->add_option("--csv", in.csv, "aggregate CSV per k and complexity");
    inf->callback([&] {
        action = [&] {
            const Vocabulary vocab = Vocabulary::standard();
            const Corpus corpus = read_corpus(std::filesystem::path(in.corpus));
            std::unique_ptr<RemoteScorer> remote;
            if (in.scorer != "oracle") remote = std::make_unique<RemoteScorer>(in.scorer, vocab.size());
            const std::size_t n = in.limit ? std::min(in.limit, corpus.records.size()) : corpus.records.size();
            std::vector<std::vector<MetricsReport>> per_k(s.beam.top_k.size());
            Output out(in.out);
            const json command = {{"name", "infer"}, {"corpus", in.corpus}, {"scorer", in.scorer}, {"limit", in.limit}};
            write_artifact_header(out.stream(), "symode-infer", s, command);
            log.info("infer start records={} scorer={} width={}", n, in.scorer, s.beam.effective_width(vocab.size()));
            for (std::size_t i = 0; i < n; ++i) {
                const CorpusRecord& r = corpus.records[i];
                const Expr gt = r.expr();
                const Trajectory traj{in.corpus + "#" + std::to_string(i), encode_trajectory(time_grid(r.T, r.n_grid), r.y)};
                std::vector<Candidate> candidates;
                json top1 = nullptr;
                try {
                    if (remote) {
                        candidates = beam_search(*remote, traj, vocab, s.beam).candidates;
                    } else {
                        OracleScorer oracle(tokenize_expr(gt, vocab), vocab);
                        candidates = beam_search(oracle, traj, vocab, s.beam).candidates;
                    }
                } catch (const ConstantOutOfRange& e) {
                    log.warn("record {}: target not encodable: {}", i, e.what());
                } catch (const NoCandidateError& e) {
                    log.warn("record {}: {}", i, e.what());
                }
                if (!candidates.empty()) {
                    try {
                        top1 = to_prefix_string(detokenize(candidates.front().items, vocab));
                    } catch (const DetokenizeError&) {
                    }
                }
                const TopKResult res = top_k_evaluate(candidates, gt, r.y, s.beam.top_k, s.metrics, vocab);
                json at_k = json::array();
                for (std::size_t j = 0; j < res.ks.size(); ++j) {
                    per_k[j].push_back(res.at_k[j]);
                    at_k.push_back({{"k", res.ks[j]}, {"report", res.at_k[j].to_json()}});
                }
                out.stream() << json{{"traj_id", traj.id}, {"gt", r.expression}, {"top1", top1}, {"at_k", at_k}}.dump()
                             << '\n';
            }
            out.close();
            for (std::size_t j = 0; j < s.beam.top_k.size(); ++j) {
                const auto& rs = per_k[j];
                const auto count = [&](auto field) {
                    return std::count_if(rs.begin(), rs.end(), [&](const MetricsReport& m) { return m.*field; });
                };
                log.info("infer k={} records={} skeleton={} allclose={} r2={}", s.beam.top_k[j], rs.size(),
                         count(&MetricsReport::skeleton_match), count(&MetricsReport::allclose),
                         count(&MetricsReport::r2_pass));
            }
            if (!in.csv.empty()) write_csv(in.csv, csv_with_k(s.beam.top_k, per_k), s, command);
            return 0;
        };
    });

    // score
    auto* sc = app.add_subcommand("score", "score predicted expressions against ground truth");
    struct {
        std::string gt, pred, out, csv;
        double y0 = 1.0;
    } scr;
    sc->add_option("--gt", scr.gt, "ground-truth corpus JSONL, or one expression per line")->required();
    sc->add_option("--pred", scr.pred, "one predicted expression per line, or decode output")->required();
    sc->add_option("--y0", scr.y0, "initial value when --gt holds bare expressions");
    sc->add_option("--out", scr.out, "per-pair report JSONL (stdout if omitted)");
    sc->add_option("--csv", scr.csv, "aggregate CSV");
    sc->callback([&] {
        action = [&] {
            std::vector<std::pair<Expr, Eigen::VectorXd>> truth;
            if (looks_like_corpus(scr.gt)) {
                for (const auto& r : read_corpus(std::filesystem::path(scr.gt)).records) truth.emplace_back(r.expr(), r.y);
            } else {
                for (const auto& line : read_expression_lines(scr.gt)) {
                    const Expr f = parse_expression(line);
                    const Solution sol = integrate(f, scr.y0, s.solve);
                    if (!sol.ok())
                        throw std::runtime_error("ground truth '" + line + "' does not solve from y0: " + sol.detail);
                    truth.emplace_back(f, sol.y);
                }
            }
            const auto preds = read_expression_lines(scr.pred);
            if (preds.size() != truth.size())
                throw std::runtime_error("--gt has " + std::to_string(truth.size()) + " entries but --pred has " +
                                         std::to_string(preds.size()));
            std::vector<MetricsReport> reports;
            const json command = {{"name", "score"}, {"gt", scr.gt}, {"pred", scr.pred}, {"y0", scr.y0}};
            Output out(scr.out);
            write_artifact_header(out.stream(), "symode-score", s, command);
            for (std::size_t i = 0; i < preds.size(); ++i) {
                MetricsReport m = MetricsReport::failing(complexity(truth[i].first));
                try {
                    m = score(truth[i].first, parse_expression(preds[i]), truth[i].second, s.metrics);
                } catch (const std::runtime_error& e) {
                    log.warn("prediction {}: {}", i, e.what());
                }
                reports.push_back(m);
                out.stream() << m.to_json().dump() << '\n';
            }
            out.close();
            if (!scr.csv.empty()) write_csv(scr.csv, aggregate_csv(reports), s, command);
            const auto passed = std::count_if(reports.begin(), reports.end(), [](const MetricsReport& m) {
                return m.skeleton_and_allclose && m.skeleton_and_r2;
            });
            log.info("score pairs={} all_pass={}", reports.size(), passed);
            return 0;
        };
    });

    // stats
    auto* st = app.add_subcommand("stats", "operator frequencies and complexity histogram");
    struct {
        std::string corpus, ops_csv, complexity_csv;
    } sta;
    st->add_option("--corpus", sta.corpus, "corpus JSONL")->required();
    st->add_option("--ops-csv", sta.ops_csv, "operator frequency CSV path");
    st->add_option("--complexity-csv", sta.complexity_csv, "complexity histogram CSV path");
    st->callback([&] {
        action = [&] {
            const CorpusStats stats = corpus_stats(read_corpus(std::filesystem::path(sta.corpus)).records);
            if (sta.ops_csv.empty() && sta.complexity_csv.empty()) {
                std::cout << stats.operators_csv() << '\n' << stats.complexity_csv();
                return 0;
            }
            const json command = {{"name", "stats"}, {"corpus", sta.corpus}};
            if (!sta.ops_csv.empty()) write_csv(sta.ops_csv, stats.operators_csv(), s, command);
            if (!sta.complexity_csv.empty()) write_csv(sta.complexity_csv, stats.complexity_csv(), s, command);
            return 0;
        };
    });

    // textbook and classic
    struct {
        bool solve = false, plain = false;
        std::string out, file;
    } bm;
    auto benchmark = [&](const std::string& name, std::vector<BenchmarkOde> rows, TestsetKind kind) {
        if (!bm.solve) {
            Output out(bm.out);
            write_artifact_header(out.stream(), "symode-" + name, s, {{"name", name}, {"file", bm.file}});
            for (const auto& row : rows)
                out.stream() << json{{"name", row.name}, {"expression", to_prefix_string(row.f)}, {"infix", to_infix(row.f)},
                                     {"y0", row.y0}}.dump()
                             << '\n';
            out.close();
            return 0;
        }
        TestsetSpec spec;
        spec.kind = kind;
        std::optional<std::filesystem::path> classic;
        if (!bm.file.empty()) classic = bm.file;
        const auto records = build_testset({}, spec, s.gen, s.solve, s.seed, classic);
        write_records(bm.out, make_header("testset-" + name, s, bm.plain, {{"name", name}, {"file", bm.file}}), records);
        for (const auto& r : records)
            log.info("{} {} y0={} qc_residual={:.3g}", name, r.source, r.y0,
                     qc_residual(Solution{time_grid(r.T, r.n_grid), r.y, r.y0, SolveStatus::Ok, {}, 0, 0}, r.expr()));
        if (records.size() != rows.size()) {
            log.error("{}: {} of {} rows failed to solve or pass QC", name, rows.size() - records.size(), rows.size());
            return 1;
        }
        return 0;
    };
    auto* tb = app.add_subcommand("textbook", "list or solve the 12 textbook ODEs");
    tb->add_flag("--solve", bm.solve, "solve each row and write records");
    tb->add_option("--out", bm.out, "output path (stdout if omitted)");
    tb->add_flag("--plain", bm.plain, "write y as decimal arrays");
    tb->callback([&] { action = [&] { return benchmark("textbook", load_textbook(), TestsetKind::Textbook); }; });
    auto* cl = app.add_subcommand("classic", "list or solve functions reinterpreted as ODEs");
    cl->add_option("--file", bm.file, "extra functions, one prefix expression per line");
    cl->add_flag("--solve", bm.solve, "solve each row and write records");
    cl->add_option("--out", bm.out, "output path (stdout if omitted)");
    cl->add_flag("--plain", bm.plain, "write y as decimal arrays");
    cl->callback([&] {
        action = [&] {
            Rng rng = make_stream(s.seed, 0, 4);
            std::vector<BenchmarkOde> rows;
            if (bm.file.empty()) {
                rows = load_classic(nullptr, s.solve, rng);
            } else {
                rows = load_classic(std::filesystem::path(bm.file), s.solve, rng);
            }
            return benchmark("classic", std::move(rows), TestsetKind::Classic);
        };
    });

    try {
        app.parse(argc, argv);
        s.finalize();
        log.set_level(spdlog::level::from_str(s.log_level));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        return action ? action() : 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const BenchmarkFileError& e) {
        log.error("{}", e.what());
        return 1;
    } catch (const std::exception& e) {
        log.error("{}", e.what());
        return 1;
    }
}

} // namespace symode::cli
