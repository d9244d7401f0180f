#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "symode/benchmarks.hpp"
#include "symode/expr.hpp"
#include "symode/ode.hpp"
#include "symode/sampling.hpp"

namespace symode {

/// Where a record came from: the master seed, the task (RNG stream) that produced
/// it, and its position among that task's records. Sorting by (stream, index)
/// restores generation order.
struct Provenance {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    std::uint64_t index = 0;
    friend auto operator<=>(const Provenance&, const Provenance&) = default;
};

/// One solved ODE. `expression` and `skeleton` are prefix strings of the
/// canonical tree; `constants` are its constant leaves in pre-order; `y` holds
/// the solution on time_grid(T, n_grid).
struct CorpusRecord {
    std::string skeleton;
    std::string expression;
    std::vector<double> constants;
    double y0 = 0.0;
    double T = 4.0;
    int n_grid = 1024;
    Eigen::VectorXd y;
    std::string qc = "passed";
    Provenance provenance;
    std::string source; // empty for generated records, else e.g. "textbook:Logistic equation"

    Expr expr() const { return parse_prefix(expression); }
    friend bool operator==(const CorpusRecord&, const CorpusRecord&) = default;
};

/// How y values are written: base64 of little-endian IEEE-754 doubles (exact), or
/// a JSON number array.
enum class YEncoding { Base64, Plain };

/// First line of every corpus or test-set file:
///   {"config":{...},"encoding":"base64"|"plain","format":"symode-corpus","kind":"<kind>","version":1}
struct CorpusHeader {
    static constexpr int kVersion = 1;
    std::string kind = "corpus";
    YEncoding encoding = YEncoding::Base64;
    nlohmann::json config = nlohmann::json::object();
};

struct Corpus {
    CorpusHeader header;
    std::vector<CorpusRecord> records;
};

class CorpusFormatError : public std::runtime_error {
public:
    CorpusFormatError(std::size_t line, const std::string& message);
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

std::string encode_doubles_base64(const Eigen::VectorXd& y);
/// Throws std::invalid_argument on bad input or a length that is not a multiple of 8.
Eigen::VectorXd decode_doubles_base64(std::string_view text);

nlohmann::json record_to_json(const CorpusRecord& r, YEncoding enc);
CorpusRecord record_from_json(const nlohmann::json& j);
nlohmann::json header_to_json(const CorpusHeader& h);
CorpusHeader header_from_json(const nlohmann::json& j);

/// Streaming writer: header on construction, one line per record.
class CorpusWriter {
public:
    CorpusWriter(std::ostream& out, CorpusHeader header);
    void write(const CorpusRecord& r);
    std::size_t written() const noexcept { return written_; }

private:
    std::ostream& out_;
    CorpusHeader header_;
    std::size_t written_ = 0;
};

/// Throws CorpusFormatError with a 1-based line number.
Corpus read_corpus(std::istream& in);
Corpus read_corpus(const std::filesystem::path& path);

/// Re-validates a stored record: the expression is canonical and re-skeletonizes
/// to `skeleton`, `constants` match its leaves, y has n_grid finite values, and
/// the finite-difference check passes at `qc_epsilon`. Returns the first problem.
std::optional<std::string> validate_record(const CorpusRecord& r, double qc_epsilon);

/// Solves f from y0 under `cfg` (with its wall-clock timeout) and builds the record
/// when the solution passes QC; otherwise returns the failing status.
struct SolveOutcome {
    std::optional<CorpusRecord> record;
    SolveStatus status = SolveStatus::Ok;
    std::string detail;
};
SolveOutcome solve_record(const Expr& f, double y0, const SolveConfig& cfg, Provenance prov);

struct CorpusJob {
    GenerationConfig gen;
    SolveConfig solve;
    std::uint64_t seed = 0;
    int target_skeletons = 10000; // skeletons with at least one stored record
    std::size_t max_records = 0;  // 0: unlimited
    int workers = 1;
    int chunk = 64;                // max tasks per scheduling round; output ignores it and `workers`
    int max_sample_attempts = 1000; // per task, before the task gives up
    std::set<std::string> excluded_skeletons; // never emitted (held-out registry)

    void validate() const;
};

/// Per-item outcomes of a generation run.
struct GenerationReport {
    std::uint64_t tasks = 0;
    std::uint64_t sample_rejected = 0;    // invalid, constant, or out-of-range draws
    std::uint64_t tasks_exhausted = 0;    // tasks that found no usable expression
    std::uint64_t duplicates = 0;         // skeleton already seen or excluded
    std::uint64_t skeletons = 0;          // accepted, with at least one record
    std::uint64_t skeletons_unsolved = 0; // accepted, but every solve failed
    std::uint64_t resample_exhausted = 0;
    std::uint64_t constant_sets = 0;
    std::uint64_t solves = 0;
    std::uint64_t solver_failed = 0;
    std::uint64_t blowup = 0;
    std::uint64_t qc_rejected = 0;
    std::uint64_t records = 0;

    double failure_rate() const noexcept { return solves ? 1.0 - static_cast<double>(records) / solves : 0.0; }
    nlohmann::json to_json() const;
};

using RecordSink = std::function<void(const CorpusRecord&)>;

/// Deterministic in (job minus workers): task t samples with make_stream(seed, t, 0)
/// and solves with make_stream(seed, t, 1); skeleton dedup and output follow task
/// order. Record order is (stream, index).
GenerationReport generate_corpus(const CorpusJob& job, const RecordSink& sink);
std::vector<CorpusRecord> generate_corpus(const CorpusJob& job, GenerationReport* report = nullptr);

/// Sorted, unique skeleton keys, one per line.
std::set<std::string> skeleton_registry(const std::vector<CorpusRecord>& records);
void write_registry(std::ostream& out, const std::set<std::string>& keys);
std::set<std::string> read_registry(std::istream& in);

enum class TestsetKind { Iv, Constants, Skeletons, IvSubsample, Textbook, Classic };
std::string_view testset_kind_name(TestsetKind k) noexcept;
std::optional<TestsetKind> testset_kind_from_name(std::string_view name) noexcept;

struct TestsetSpec {
    TestsetKind kind = TestsetKind::Iv;
    std::size_t size = 0;                 // required output size; 0: as many as the caps allow
    std::size_t per_operator_cap = 2000;  // iv, constants, skeletons
    std::size_t per_complexity_cap = 10;  // iv-subsample
    std::size_t max_rejections = 10000;   // failed draws before giving up
    std::set<std::string> registry;       // skeletons: excluded besides the corpus's own

    void validate() const;
};

class InsufficientSupply : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Builds a test set from `corpus` (ignored for textbook and classic):
///  iv           one record per skeleton, fresh y0 not used by the corpus for it
///  constants    one per skeleton, resampled constants unseen for it, fresh y0
///  skeletons    freshly sampled skeletons absent from corpus and registry
///  iv-subsample up to per_complexity_cap records per complexity, no re-solving
///  textbook     the 12 textbook ODEs
///  classic      y**3 + y**2 + y plus lines of `classic_file`, y0 redrawn until solvable
/// Skeletons are unique within the output; caps hold per operator count. Throws
/// InsufficientSupply when `size` cannot be reached.
std::vector<CorpusRecord> build_testset(const Corpus& corpus, const TestsetSpec& spec, const GenerationConfig& gen,
                                        const SolveConfig& solve, std::uint64_t seed,
                                        const std::optional<std::filesystem::path>& classic_file = {});

/// Benchmark rows as records; rows failing to solve or QC are reported in `failed`.
/// With `redraw`, a failing row retries with fresh y0 from (y0_min, y0_max), at
/// most `max_draws` times.
std::vector<CorpusRecord> benchmark_records(const std::vector<BenchmarkOde>& rows, const std::string& source,
                                            const SolveConfig& solve, std::vector<std::string>* failed = nullptr,
                                            Rng* redraw = nullptr, int max_draws = 100000);

/// Operator occurrences over all records' expressions, and their complexity
/// histogram. CSV headers "operator,count" and "complexity,count"; rows with zero
/// count are omitted.
struct CorpusStats {
    std::vector<std::pair<std::string, std::uint64_t>> operators; // in vocabulary order
    std::vector<std::pair<std::size_t, std::uint64_t>> complexity; // ascending
    std::string operators_csv() const;
    std::string complexity_csv() const;
};
CorpusStats corpus_stats(const std::vector<CorpusRecord>& records);

} // namespace symode
