#include "sexid/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "sexid/errors.hpp"
#include "sexid/text_util.hpp"

namespace sexid {

std::size_t ConfusionMatrix::total() const noexcept {
    std::size_t t = 0;
    for (const auto& row : counts)
        for (auto c : row) t += c;
    return t;
}

std::size_t ConfusionMatrix::trace() const noexcept {
    std::size_t t = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) t += counts[i][i];
    return t;
}

ConfusionMatrix confusion(std::span<const std::string> gold, std::span<const std::string> pred,
                          const LabelSpace& space) {
    if (gold.size() != pred.size())
        throw ValidationError(fmt::format("{} gold labels but {} predictions", gold.size(), pred.size()));
    ConfusionMatrix cm{space, std::vector<std::vector<std::size_t>>(space.size(), std::vector<std::size_t>(space.size()))};
    for (std::size_t i = 0; i < gold.size(); ++i) ++cm.counts[space.require_index(gold[i])][space.require_index(pred[i])];
    return cm;
}

namespace {

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }
double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

const ClassScores& MetricsReport::of(std::string_view label) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return per_class[i];
    throw ArgumentError(fmt::format("no metrics for label '{}'", label));
}

MetricsReport MetricsReport::summary(Task task, double accuracy, double precision, double recall, double f1) {
    MetricsReport r;
    r.task = task;
    r.accuracy = accuracy;
    r.precision = precision;
    r.recall = recall;
    r.f1 = f1;
    if (task == Task::task1) r.f1_binary = f1;
    else r.f1_macro = f1;
    return r;
}

MetricsReport compute_metrics(const ConfusionMatrix& cm, Task task) {
    const auto n = cm.total();
    if (n == 0) throw ArgumentError("cannot compute metrics over zero examples");
    const auto L = cm.space.size();
    MetricsReport r;
    r.task = task;
    r.n = n;
    r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(n);
    r.labels = cm.space.labels();
    r.per_class.resize(L);
    double sum_p = 0.0, sum_r = 0.0, sum_f = 0.0;
    for (std::size_t c = 0; c < L; ++c) {
        std::size_t predicted = 0, gold = 0;
        for (std::size_t k = 0; k < L; ++k) {
            predicted += cm.counts[k][c];
            gold += cm.counts[c][k];
        }
        auto& s = r.per_class[c];
        const auto tp = static_cast<double>(cm.counts[c][c]);
        s.precision = ratio(tp, static_cast<double>(predicted));
        s.recall = ratio(tp, static_cast<double>(gold));
        s.f1 = harmonic(s.precision, s.recall);
        s.support = gold;
        sum_p += s.precision;
        sum_r += s.recall;
        sum_f += s.f1;
    }
    r.macro_precision = sum_p / static_cast<double>(L);
    r.macro_recall = sum_r / static_cast<double>(L);
    r.f1_macro = sum_f / static_cast<double>(L);
    if (task == Task::task1 && cm.space.contains(kSexist)) {
        const auto& pos = r.of(kSexist);
        r.f1_binary = pos.f1;
        r.precision = pos.precision;
        r.recall = pos.recall;
        r.f1 = pos.f1;
    } else {
        r.precision = r.macro_precision;
        r.recall = r.macro_recall;
        r.f1 = *r.f1_macro;
    }
    return r;
}

MetricsReport evaluate_labels(std::span<const std::string> gold, std::span<const std::string> pred,
                              const LabelSpace& space, Task task) {
    return compute_metrics(confusion(gold, pred, space), task);
}

namespace {

// 0..6 for M1..M7, 7..12 for E1..E6, otherwise -1.
int catalog_rank(std::string_view id) {
    if (id.size() != 2 || id[1] < '1' || id[1] > '9') return -1;
    const int k = id[1] - '1';
    if (id[0] == 'M' && k < 7) return k;
    if (id[0] == 'E' && k < 6) return 7 + k;
    return -1;
}

std::vector<const std::pair<const std::string, MetricsReport>*> ordered(const ReportSet& reports) {
    std::vector<const std::pair<const std::string, MetricsReport>*> out;
    for (const auto& kv : reports) out.push_back(&kv);
    std::stable_sort(out.begin(), out.end(), [](auto* a, auto* b) { return model_order_less(a->first, b->first); });
    return out;
}

}  // namespace

bool model_order_less(std::string_view a, std::string_view b) {
    const int ra = catalog_rank(a), rb = catalog_rank(b);
    if (ra >= 0 && rb >= 0) return ra < rb;
    if (ra >= 0 || rb >= 0) return ra >= 0;
    return a < b;
}

std::string render_comparison_table(const ReportSet& reports, Task task) {
    const auto rows = ordered(reports);
    using Getter = double (*)(const MetricsReport&);
    const Getter getters[] = {
        [](const MetricsReport& r) { return r.accuracy; },
        [](const MetricsReport& r) { return r.precision; },
        [](const MetricsReport& r) { return r.recall; },
        [](const MetricsReport& r) { return r.f1; },
    };
    // Maxima compare the printed values, so ties at three decimals are all marked.
    std::vector<std::string> best(4);
    for (int c = 0; c < 4; ++c)
        for (auto* row : rows) best[c] = std::max(best[c], format_metric(getters[c](row->second)));

    std::vector<std::vector<std::string>> body;
    for (auto* row : rows) {
        std::vector<std::string> cells{row->first};
        for (int c = 0; c < 4; ++c) {
            auto v = format_metric(getters[c](row->second));
            cells.push_back(v == best[c] ? v + "*" : v);
        }
        body.push_back(std::move(cells));
    }
    const std::string f1 = task == Task::task1 ? "F1b" : "F1m";
    return render_table({"Model", "Acc", "Prec", "Rec", f1}, body);
}

std::string format_delta(double metric, double reference) {
    if (reference == 0.0) return "n/a";
    const double pct = (metric - reference) / reference * 100.0;
    auto s = fmt::format("{:.2f}%", pct);
    if (s == "-0.00%") s = "0.00%";
    return s;
}

std::string render_delta_table(const ReportSet& reports, std::string_view reference_id, Task task,
                               const std::vector<std::string>& rows) {
    auto ref_it = reports.find(std::string(reference_id));
    if (ref_it == reports.end()) throw ArgumentError(fmt::format("reference model '{}' has no report", reference_id));
    const auto& ref = ref_it->second;

    std::vector<const std::pair<const std::string, MetricsReport>*> selected;
    if (rows.empty()) {
        selected = ordered(reports);
    } else {
        for (const auto& id : rows) {
            auto it = reports.find(id);
            if (it == reports.end()) throw ArgumentError(fmt::format("model '{}' has no report", id));
            selected.push_back(&*it);
        }
    }
    const std::string diff = fmt::format("Diff {}", reference_id);
    const std::string f1 = task == Task::task1 ? "F1b" : "F1m";
    std::vector<std::vector<std::string>> body;
    for (auto* row : selected) {
        const auto& r = row->second;
        body.push_back({row->first, format_metric(r.accuracy), format_delta(r.accuracy, ref.accuracy),
                        format_metric(r.f1), format_delta(r.f1, ref.f1)});
    }
    return render_table({"Model", "Acc", diff, f1, diff}, body);
}

std::string render_metrics_tsv(const ReportSet& reports) {
    std::string out = tsv_line({"model", "n", "accuracy", "precision", "recall", "f1", "macro_precision",
                                "macro_recall", "f1_macro", "f1_binary", "per_class"});
    for (auto* row : ordered(reports)) {
        const auto& r = row->second;
        std::vector<std::string> per;
        for (std::size_t i = 0; i < r.labels.size(); ++i)
            per.push_back(fmt::format("{}:{}/{}/{}", r.labels[i], format_real(r.per_class[i].precision),
                                      format_real(r.per_class[i].recall), format_real(r.per_class[i].f1)));
        out += tsv_line({row->first, std::to_string(r.n), format_real(r.accuracy), format_real(r.precision),
                         format_real(r.recall), format_real(r.f1), format_real(r.macro_precision),
                         format_real(r.macro_recall), r.f1_macro ? format_real(*r.f1_macro) : "",
                         r.f1_binary ? format_real(*r.f1_binary) : "", join(per, ";")});
    }
    return out;
}

}  // namespace sexid
