#pragma once

#include <span>
#include <string>
#include <vector>

#include "sexid/backends.hpp"
#include "sexid/corpus.hpp"
#include "sexid/metrics.hpp"

namespace sexid {

struct GridSpec {
    std::vector<HeadSource> head_sources{HeadSource::hidden, HeadSource::pooler};
    std::vector<double> learning_rates{2e-5, 3e-5, 5e-5};
    std::vector<int> batch_sizes{32, 64};
    int epoch_min = 1;
    int epoch_max = 8;

    /// Throws ArgumentError for an empty dimension or an invalid value.
    void validate() const;
    std::size_t size() const noexcept;
};

/// Cartesian product ordered by (head source, learning rate, batch size,
/// epochs), each dimension in the order given. Every point carries seed.
std::vector<HyperParams> enumerate_grid(const GridSpec& g, std::uint64_t seed = 0);

enum class SelectionMetric { accuracy, f1_macro };
std::string_view to_string(SelectionMetric m) noexcept;
SelectionMetric selection_metric_for(Task task) noexcept;
double selection_value(const MetricsReport& r, SelectionMetric m);

/// Label space a task's models are trained on (task 2: the five categories).
LabelSpace training_space(Task task);

struct SkippedFold {
    int fold = 0;
    std::string reason;
};

struct TrialResult {
    HyperParams hyperparams;
    std::vector<int> folds;                      // evaluated fold indices
    std::vector<MetricsReport> per_fold_metrics; // parallel to folds
    std::vector<SkippedFold> skipped;
    SelectionMetric selection_metric_name = SelectionMetric::accuracy;
    double mean_selection_metric = 0.0;
    double stddev_selection_metric = 0.0;  // population std over folds
    /// Fold-averaged headline metrics (accuracy, precision, recall, F1).
    MetricsReport mean_report;
};

/// Builds TrialResult aggregates from evaluated folds. Throws
/// StatisticsError when every fold was skipped.
TrialResult aggregate_trial(const HyperParams& hp, Task task, std::vector<int> folds,
                            std::vector<MetricsReport> per_fold, std::vector<SkippedFold> skipped);

/// Cross-validated evaluation of one configuration. Folds whose training
/// portion holds a single class are skipped with a warning.
TrialResult run_trial(const BackendSpec& backend, const Dataset& train, const SplitPlan& plan, const HyperParams& hp,
                      Task task);

struct SearchOptions {
    int workers = 1;
    /// Evaluate every epoch count of otherwise identical configurations from
    /// one training run per fold.
    bool epoch_sharing = true;
};

/// run_trial over every point; result order matches points.
std::vector<TrialResult> run_grid(const BackendSpec& backend, const Dataset& train, const SplitPlan& plan,
                                  std::span<const HyperParams> points, Task task, const SearchOptions& opts = {});

/// True when a's configuration wins the tie-break against b (fewer epochs,
/// smaller batch, lower learning rate, hidden before pooler).
bool tie_break_less(const HyperParams& a, const HyperParams& b) noexcept;

/// Highest mean selection metric, ties resolved by tie_break_less. Throws
/// ArgumentError for an empty list.
const TrialResult& select_best(std::span<const TrialResult> trials);

TrainedModel train_final(const BackendSpec& backend, const Dataset& full_train, const HyperParams& best, Task task);

struct EpochCurve {
    SelectionMetric metric = SelectionMetric::accuracy;
    std::vector<double> train_metric;
    std::vector<double> validation_metric;
};

EpochCurve learning_curve(const BackendSpec& backend, const Dataset& train, const Dataset& val, const HyperParams& hp,
                          Task task);
std::string render_learning_curve(const EpochCurve& c);

struct SearchReport {
    std::string model_id;  // e.g. "M2-en"
    Task task = Task::task1;
    std::vector<TrialResult> trials;
    HyperParams best;
    TrialResult best_trial;

    /// One row per configuration: hp fields, per-fold selection metric, mean, std.
    std::string render_tsv() const;
};

SearchReport make_search_report(std::string model_id, Task task, std::vector<TrialResult> trials);

/// Inverse of SearchReport::render_tsv. Per-fold reports come back holding
/// only the selection metric. Throws FormatError on malformed input.
SearchReport parse_search_report(std::string model_id, Task task, std::string_view tsv, std::string_view origin);

/// Lang / Model / best hyperparameters / Acc / Prec / Rec / F1 for each
/// searched model.
std::string render_search_table(std::span<const SearchReport> reports);

/// Share of searched models choosing each hyperparameter value; epochs are
/// bucketed as "<= max-2", max-1, max.
std::string render_hyperparameter_distribution(std::span<const SearchReport> reports, const GridSpec& grid);

}  // namespace sexid
