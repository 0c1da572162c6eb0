#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sexid/backends.hpp"
#include "sexid/corpus.hpp"
#include "sexid/fusion.hpp"
#include "sexid/metrics.hpp"
#include "sexid/search.hpp"

namespace sexid {

enum class RunTask { task1, task2, both };
std::string_view to_string(RunTask t) noexcept;
std::optional<RunTask> parse_run_task(std::string_view s) noexcept;

enum class TranslationKind { none, identity, replay, http };
enum class Gating { predicted, gold };
/// Reference set for ensemble standardization statistics.
enum class StandardizeOn { test, train };

struct RunConfig {
    std::filesystem::path source;  // config file, empty when built in code
    std::filesystem::path train;
    std::filesystem::path test;
    RunTask task = RunTask::both;
    std::uint64_t seed = 13;
    std::filesystem::path out = "run";
    int workers = 1;

    BackendSpec backend;
    std::string checkpoint_multilingual;
    std::string checkpoint_en;
    std::string checkpoint_es;
    std::map<Language, std::filesystem::path> stopword_files;
    std::map<Language, std::filesystem::path> lemma_files;

    GridSpec grid;
    SplitParams split;
    bool epoch_sharing = true;

    TranslationKind translation = TranslationKind::none;
    std::filesystem::path replay_file;
    std::string endpoint;
    std::string token_env;
    TranslationOptions translation_options;

    std::vector<std::string> models{"M1", "M2", "M3", "M4", "M5", "M6", "M7"};
    std::vector<std::string> best_members = kDefaultBestMembers;
    ValueAggregation aggregation = ValueAggregation::winner_take_all;
    StandardizeOn standardize_on = StandardizeOn::test;

    Gating gating = Gating::predicted;
    std::string gate_with = "E6";
    /// Task-1 predictions to gate with when task 1 is not part of the run.
    std::filesystem::path gating_file;
    std::string reference_model = "E6";  // delta table reference

    /// Throws ConfigError for inconsistent settings and missing files.
    void validate() const;
    /// Normalized key=value rendering of every setting.
    std::string snapshot() const;
};

/// Paths in the file are relative to its directory. Unknown keys are an error.
RunConfig parse_run_config(std::string_view content, const std::filesystem::path& base_dir, std::string_view origin);
RunConfig load_run_config(const std::filesystem::path& path);

struct Overrides {
    std::optional<RunTask> task;
    std::optional<std::vector<std::string>> models;
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out;
};
void apply_overrides(RunConfig& cfg, const Overrides& o);

/// Append-only event log: one tab-separated line per event with an ISO-8601
/// UTC timestamp, stage name, status and detail.
class RunManifest {
public:
    explicit RunManifest(std::filesystem::path path);
    void record(std::string_view stage, std::string_view status, std::string_view detail = {});
    const std::filesystem::path& path() const noexcept { return path_; }

    struct Event {
        std::string timestamp, stage, status, detail;
    };
    std::vector<Event> events() const;

private:
    std::filesystem::path path_;
};

/// How far a pipeline invocation goes.
enum class StageLevel { search, train, predict, ensemble, evaluate };

struct RunOptions {
    StageLevel until = StageLevel::evaluate;
    std::optional<Source> source_filter;  // restrict evaluation to one source
};

struct RunSummary {
    std::filesystem::path run_dir;
    std::map<std::string, ReportSet> reports;  // "task1", "task2", "task2-categorizer"
    std::size_t stages_run = 0;
    std::size_t cache_hits = 0;
};

/// Fixed run-directory layout.
struct RunLayout {
    std::filesystem::path root;
    std::filesystem::path config_snapshot() const { return root / "config.snapshot"; }
    std::filesystem::path manifest() const { return root / "manifest.log"; }
    std::filesystem::path models(Task t) const { return root / "models" / std::string(to_string(t)); }
    std::filesystem::path predictions(Task t) const { return root / "predictions" / std::string(to_string(t)); }
    std::filesystem::path end_to_end() const { return predictions(Task::task2) / "end_to_end"; }
    std::filesystem::path reports() const { return root / "reports"; }
    std::filesystem::path reports(Task t) const { return reports() / std::string(to_string(t)); }
    std::filesystem::path cache() const { return root / "cache"; }
    std::filesystem::path submissions() const { return root / "submissions"; }
};

RunSummary run_pipeline(const RunConfig& cfg, const RunOptions& options = {});
RunSummary run_task1(const RunConfig& cfg, const RunOptions& options = {});
/// task1_predictions overrides the configured gating source.
RunSummary run_task2(const RunConfig& cfg, const std::optional<std::filesystem::path>& task1_predictions = {},
                     const RunOptions& options = {});

/// Re-renders comparison and delta reports from the prediction files already
/// in the run directory; trains nothing. Missing predictions raise
/// ArgumentError.
RunSummary rebuild_reports(const RunConfig& cfg, std::optional<Source> source_filter = {});

/// Pre-fills the translation cache with every translation the run needs.
std::size_t precache_translations(const RunConfig& cfg);

/// Final task-2 labels: non-sexist where the gate says so, the categorizer's
/// label elsewhere. Records carry the end-to-end label space.
std::vector<PredictionRecord> apply_gating(std::span<const PredictionRecord> categorizer,
                                           const std::map<std::string, std::string>& task1_labels);

// --- submissions ---------------------------------------------------------

struct SubmissionRow {
    std::string id;
    std::string label;
    friend bool operator==(const SubmissionRow&, const SubmissionRow&) = default;
};

/// Rows in test order. Throws CoverageError naming missing, unknown or
/// duplicated ids.
std::vector<SubmissionRow> make_submission(std::span<const PredictionRecord> predictions, const Dataset& test);
void write_submission(std::span<const SubmissionRow> rows, const std::filesystem::path& path);
std::vector<SubmissionRow> read_submission(const std::filesystem::path& path);

/// Labels of predictions joined with test gold for one task, optionally
/// restricted to a source. Unlabeled examples are skipped.
MetricsReport evaluate_predictions(std::span<const PredictionRecord> predictions, const Dataset& gold,
                                   const LabelSpace& space, Task task, std::optional<Source> source = {});

}  // namespace sexid
