#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sexid/labels.hpp"

namespace sexid {

/// Rows are gold labels, columns predictions, both in label-space order.
struct ConfusionMatrix {
    LabelSpace space;
    std::vector<std::vector<std::size_t>> counts;

    std::size_t total() const noexcept;
    std::size_t trace() const noexcept;
};

/// Throws ValidationError on a length mismatch or a label outside the space.
ConfusionMatrix confusion(std::span<const std::string> gold, std::span<const std::string> pred,
                          const LabelSpace& space);

struct ClassScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;  // gold count
};

/// Zero denominators yield 0 rather than NaN throughout.
struct MetricsReport {
    Task task = Task::task1;
    std::size_t n = 0;
    double accuracy = 0.0;
    std::vector<std::string> labels;
    std::vector<ClassScores> per_class;  // parallel to labels
    std::optional<double> f1_binary;     // positive class "sexist"
    std::optional<double> f1_macro;
    double macro_precision = 0.0;
    double macro_recall = 0.0;

    // Headline columns of the comparison tables. Task 1 reports the positive
    // class (so F1 = 2PR/(P+R) holds row by row); task 2 reports macro
    // averages.
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    const ClassScores& of(std::string_view label) const;

    /// Report holding only the headline numbers, e.g. for published results.
    static MetricsReport summary(Task task, double accuracy, double precision, double recall, double f1);
};

/// Throws ArgumentError for an empty matrix.
MetricsReport compute_metrics(const ConfusionMatrix& cm, Task task);

/// confusion + compute_metrics.
MetricsReport evaluate_labels(std::span<const std::string> gold, std::span<const std::string> pred,
                              const LabelSpace& space, Task task);

/// Sort key placing M1..M7 then E1..E6 first (the catalog order), other
/// ids after them alphabetically.
bool model_order_less(std::string_view a, std::string_view b);

using ReportSet = std::map<std::string, MetricsReport>;

/// Acc / Prec / Rec / F1 per model in catalog order; column maxima carry a
/// trailing '*'.
std::string render_comparison_table(const ReportSet& reports, Task task);

/// Percentage difference (metric - ref) / ref * 100 to two decimals for
/// accuracy and F1. rows restricts and orders the listed models (empty: all).
/// Throws ArgumentError when the reference is missing.
std::string render_delta_table(const ReportSet& reports, std::string_view reference_id, Task task,
                               const std::vector<std::string>& rows = {});

/// "-3.06%" style cell; "n/a" for a zero reference.
std::string format_delta(double metric, double reference);

/// Machine-readable side file: one row per model with headline and macro
/// metrics followed by per-class precision/recall/F1.
std::string render_metrics_tsv(const ReportSet& reports);

}  // namespace sexid
