#include "sexid/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "sexid/errors.hpp"
#include "sexid/text_util.hpp"

namespace sexid {

void GridSpec::validate() const {
    if (head_sources.empty() || learning_rates.empty() || batch_sizes.empty())
        throw ArgumentError("grid dimensions must be non-empty");
    if (epoch_min < 1 || epoch_max < epoch_min) throw ArgumentError("epoch range must satisfy 1 <= min <= max");
    for (double lr : learning_rates)
        if (!(lr > 0.0)) throw ArgumentError("grid learning rates must be positive");
    for (int bs : batch_sizes)
        if (bs < 1) throw ArgumentError("grid batch sizes must be positive");
    auto unique = [](auto v) {
        std::sort(v.begin(), v.end());
        return std::adjacent_find(v.begin(), v.end()) == v.end();
    };
    if (!unique(head_sources) || !unique(learning_rates) || !unique(batch_sizes))
        throw ArgumentError("grid dimensions must not repeat values");
}

std::size_t GridSpec::size() const noexcept {
    return head_sources.size() * learning_rates.size() * batch_sizes.size() *
           static_cast<std::size_t>(std::max(0, epoch_max - epoch_min + 1));
}

std::vector<HyperParams> enumerate_grid(const GridSpec& g, std::uint64_t seed) {
    g.validate();
    std::vector<HyperParams> out;
    out.reserve(g.size());
    for (auto head : g.head_sources)
        for (double lr : g.learning_rates)
            for (int bs : g.batch_sizes)
                for (int e = g.epoch_min; e <= g.epoch_max; ++e) out.push_back(HyperParams{head, lr, bs, e, seed});
    return out;
}

std::string_view to_string(SelectionMetric m) noexcept { return m == SelectionMetric::accuracy ? "accuracy" : "f1_macro"; }

SelectionMetric selection_metric_for(Task task) noexcept {
    return task == Task::task1 ? SelectionMetric::accuracy : SelectionMetric::f1_macro;
}

double selection_value(const MetricsReport& r, SelectionMetric m) {
    if (m == SelectionMetric::accuracy) return r.accuracy;
    if (!r.f1_macro) throw ArgumentError("report has no F1-macro");
    return *r.f1_macro;
}

LabelSpace training_space(Task task) {
    return task == Task::task1 ? LabelSpace::task1() : LabelSpace::task2_categories();
}

TrialResult aggregate_trial(const HyperParams& hp, Task task, std::vector<int> folds,
                            std::vector<MetricsReport> per_fold, std::vector<SkippedFold> skipped) {
    TrialResult t;
    t.hyperparams = hp;
    t.folds = std::move(folds);
    t.per_fold_metrics = std::move(per_fold);
    t.skipped = std::move(skipped);
    t.selection_metric_name = selection_metric_for(task);
    if (t.per_fold_metrics.empty())
        throw StatisticsError(fmt::format("every fold was skipped for {}", hp.describe()));
    const auto k = static_cast<double>(t.per_fold_metrics.size());
    double acc = 0, p = 0, r = 0, f = 0, sel = 0;
    for (const auto& m : t.per_fold_metrics) {
        acc += m.accuracy;
        p += m.precision;
        r += m.recall;
        f += m.f1;
        sel += selection_value(m, t.selection_metric_name);
    }
    t.mean_selection_metric = sel / k;
    double var = 0.0;
    for (const auto& m : t.per_fold_metrics) {
        const double d = selection_value(m, t.selection_metric_name) - t.mean_selection_metric;
        var += d * d;
    }
    t.stddev_selection_metric = std::sqrt(var / k);
    t.mean_report = MetricsReport::summary(task, acc / k, p / k, r / k, f / k);
    return t;
}

namespace {

std::optional<std::string> degenerate_reason(const Partition& part, const LabelSpace& space) {
    std::set<std::string> classes;
    for (const auto& ex : part.train)
        if (auto g = gold_label(ex, space)) classes.insert(*g);
    if (classes.size() < 2) return fmt::format("training portion holds {} class(es)", classes.size());
    if (part.held_out.empty()) return std::string("held-out portion is empty");
    return std::nullopt;
}

MetricsReport evaluate_model(const TrainedModel& m, const Dataset& data, Task task) {
    const auto records = predict_labels(m, data.examples(), "trial");
    std::vector<std::string> gold, pred;
    for (std::size_t i = 0; i < data.size(); ++i) {
        gold.push_back(gold_label(data[i], m.label_space).value());
        pred.push_back(records[i].label);
    }
    return evaluate_labels(gold, pred, m.label_space, task);
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn fn) {
    const auto threads = static_cast<std::size_t>(std::clamp(workers, 1, 64));
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(threads, n); ++t)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < n;) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

// One fit per (configuration group, fold); each group shares everything but
// the epoch count.
struct Group {
    HyperParams base;            // epochs = max in group
    std::vector<std::size_t> members;  // indices into points
};

}  // namespace

TrialResult run_trial(const BackendSpec& backend, const Dataset& train, const SplitPlan& plan, const HyperParams& hp,
                      Task task) {
    auto r = run_grid(backend, train, plan, std::span<const HyperParams>(&hp, 1), task, SearchOptions{1, false});
    return std::move(r.front());
}

std::vector<TrialResult> run_grid(const BackendSpec& backend, const Dataset& train, const SplitPlan& plan,
                                  std::span<const HyperParams> points, Task task, const SearchOptions& opts) {
    const auto space = training_space(task);
    for (const auto& ex : train)
        if (!plan.assignments.count(ex.id))
            throw ArgumentError(fmt::format("split plan does not cover example {}", ex.id));

    std::vector<Group> groups;
    for (std::size_t i = 0; i < points.size(); ++i) {
        auto key = points[i];
        auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
            auto a = g.base, b = key;
            a.epochs = b.epochs = 0;
            return opts.epoch_sharing && a == b;
        });
        if (it == groups.end()) {
            groups.push_back(Group{key, {i}});
        } else {
            it->base.epochs = std::max(it->base.epochs, key.epochs);
            it->members.push_back(i);
        }
    }

    const int parts = plan.partitions();
    std::vector<Partition> partitions;
    std::vector<std::optional<std::string>> degenerate;
    for (int p = 0; p < parts; ++p) {
        partitions.push_back(materialize(train, plan, p));
        degenerate.push_back(degenerate_reason(partitions.back(), space));
        if (degenerate.back()) spdlog::warn("fold {} skipped: {}", p, *degenerate.back());
    }

    // fold_reports[point][fold]
    std::vector<std::vector<std::optional<MetricsReport>>> fold_reports(
        points.size(), std::vector<std::optional<MetricsReport>>(static_cast<std::size_t>(parts)));
    const auto jobs = groups.size() * static_cast<std::size_t>(parts);
    parallel_for(jobs, opts.workers, [&](std::size_t job) {
        const auto& g = groups[job / static_cast<std::size_t>(parts)];
        const auto fold = static_cast<int>(job % static_cast<std::size_t>(parts));
        if (degenerate[fold]) return;
        const auto& part = partitions[fold];
        auto observer = [&](int epoch, const TrainedModel& snapshot) {
            for (auto idx : g.members)
                if (points[idx].epochs == epoch) fold_reports[idx][fold] = evaluate_model(snapshot, part.held_out, task);
        };
        fit(backend, part.train, g.base, space, observer);
    });

    std::vector<TrialResult> out;
    for (std::size_t i = 0; i < points.size(); ++i) {
        std::vector<int> folds;
        std::vector<MetricsReport> reports;
        std::vector<SkippedFold> skipped;
        for (int f = 0; f < parts; ++f) {
            if (degenerate[f]) skipped.push_back({f, *degenerate[f]});
            else {
                folds.push_back(f);
                reports.push_back(*fold_reports[i][f]);
            }
        }
        out.push_back(aggregate_trial(points[i], task, std::move(folds), std::move(reports), std::move(skipped)));
    }
    return out;
}

bool tie_break_less(const HyperParams& a, const HyperParams& b) noexcept {
    if (a.epochs != b.epochs) return a.epochs < b.epochs;
    if (a.batch_size != b.batch_size) return a.batch_size < b.batch_size;
    if (a.learning_rate != b.learning_rate) return a.learning_rate < b.learning_rate;
    return a.head_source == HeadSource::hidden && b.head_source == HeadSource::pooler;
}

const TrialResult& select_best(std::span<const TrialResult> trials) {
    if (trials.empty()) throw ArgumentError("no trials to select from");
    const TrialResult* best = &trials[0];
    for (const auto& t : trials.subspan(1)) {
        if (t.mean_selection_metric > best->mean_selection_metric ||
            (t.mean_selection_metric == best->mean_selection_metric && tie_break_less(t.hyperparams, best->hyperparams)))
            best = &t;
    }
    return *best;
}

TrainedModel train_final(const BackendSpec& backend, const Dataset& full_train, const HyperParams& best, Task task) {
    return fit(backend, full_train, best, training_space(task));
}

EpochCurve learning_curve(const BackendSpec& backend, const Dataset& train, const Dataset& val, const HyperParams& hp,
                          Task task) {
    EpochCurve c;
    c.metric = selection_metric_for(task);
    fit(backend, train, hp, training_space(task), [&](int, const TrainedModel& m) {
        c.train_metric.push_back(selection_value(evaluate_model(m, train, task), c.metric));
        c.validation_metric.push_back(val.empty() ? 0.0 : selection_value(evaluate_model(m, val, task), c.metric));
    });
    return c;
}

std::string render_learning_curve(const EpochCurve& c) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t e = 0; e < c.train_metric.size(); ++e)
        rows.push_back({std::to_string(e + 1), format_metric(c.train_metric[e]), format_metric(c.validation_metric[e])});
    const auto m = std::string(to_string(c.metric));
    return render_table({"epoch", "train " + m, "validation " + m}, rows);
}

SearchReport make_search_report(std::string model_id, Task task, std::vector<TrialResult> trials) {
    SearchReport r;
    r.model_id = std::move(model_id);
    r.task = task;
    r.best_trial = select_best(trials);
    r.best = r.best_trial.hyperparams;
    r.trials = std::move(trials);
    return r;
}

std::string SearchReport::render_tsv() const {
    std::size_t parts = 0;
    for (const auto& t : trials) {
        for (int f : t.folds) parts = std::max(parts, static_cast<std::size_t>(f) + 1);
        for (const auto& s : t.skipped) parts = std::max(parts, static_cast<std::size_t>(s.fold) + 1);
    }
    std::vector<std::string> header{"head_source", "learning_rate", "batch_size", "epochs", "seed"};
    for (std::size_t f = 0; f < parts; ++f) header.push_back(fmt::format("fold_{}", f));
    for (const char* h : {"mean", "std", "accuracy", "precision", "recall", "f1", "best"}) header.emplace_back(h);
    std::string out = tsv_line(header);
    for (const auto& t : trials) {
        const auto& hp = t.hyperparams;
        std::vector<std::string> row{std::string(to_string(hp.head_source)), format_real(hp.learning_rate),
                                     std::to_string(hp.batch_size), std::to_string(hp.epochs),
                                     std::to_string(hp.seed)};
        std::vector<std::string> cells(parts, "");
        for (std::size_t i = 0; i < t.folds.size(); ++i)
            cells[t.folds[i]] = format_real(selection_value(t.per_fold_metrics[i], t.selection_metric_name));
        for (const auto& s : t.skipped) cells[s.fold] = "skipped";
        row.insert(row.end(), cells.begin(), cells.end());
        const auto& m = t.mean_report;
        for (double v : {t.mean_selection_metric, t.stddev_selection_metric, m.accuracy, m.precision, m.recall, m.f1})
            row.push_back(format_real(v));
        row.push_back(hp == best ? "1" : "0");
        out += tsv_line(row);
    }
    return out;
}

SearchReport parse_search_report(std::string model_id, Task task, std::string_view tsv, std::string_view origin) {
    const auto table = parse_tsv(tsv, origin);
    auto col = [&](std::string_view name) {
        const auto c = table.column(name);
        if (c == std::string::npos) throw FormatError(fmt::format("{}: missing column {}", origin, name));
        return c;
    };
    const auto c_head = col("head_source"), c_lr = col("learning_rate"), c_bs = col("batch_size"),
               c_ep = col("epochs"), c_seed = col("seed"), c_mean = col("mean"), c_std = col("std"),
               c_acc = col("accuracy"), c_p = col("precision"), c_r = col("recall"), c_f1 = col("f1"),
               c_best = col("best");
    std::vector<std::pair<int, std::size_t>> fold_cols;
    for (std::size_t c = 0; c < table.header.size(); ++c)
        if (starts_with(table.header[c], "fold_"))
            fold_cols.emplace_back(static_cast<int>(parse_int(table.header[c].substr(5), "fold")), c);

    SearchReport r;
    r.model_id = std::move(model_id);
    r.task = task;
    const auto metric = selection_metric_for(task);
    std::optional<std::size_t> best_index;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        const auto where = fmt::format("{} line {}", origin, table.line_numbers[i]);
        TrialResult t;
        const auto head = parse_head_source(row[c_head]);
        if (!head) throw FormatError(where + ": bad head source");
        char* end = nullptr;
        const auto seed = std::strtoull(row[c_seed].c_str(), &end, 10);
        t.hyperparams = HyperParams{*head, parse_real(row[c_lr], where), static_cast<int>(parse_int(row[c_bs], where)),
                                    static_cast<int>(parse_int(row[c_ep], where)), seed};
        t.selection_metric_name = metric;
        for (auto [fold, c] : fold_cols) {
            if (row[c].empty()) continue;
            if (row[c] == "skipped") {
                t.skipped.push_back({fold, "skipped"});
                continue;
            }
            const double v = parse_real(row[c], where);
            t.folds.push_back(fold);
            t.per_fold_metrics.push_back(metric == SelectionMetric::accuracy ? MetricsReport::summary(task, v, 0, 0, 0)
                                                                              : MetricsReport::summary(task, 0, 0, 0, v));
        }
        t.mean_selection_metric = parse_real(row[c_mean], where);
        t.stddev_selection_metric = parse_real(row[c_std], where);
        t.mean_report = MetricsReport::summary(task, parse_real(row[c_acc], where), parse_real(row[c_p], where),
                                               parse_real(row[c_r], where), parse_real(row[c_f1], where));
        if (row[c_best] == "1") best_index = i;
        r.trials.push_back(std::move(t));
    }
    if (!best_index) throw FormatError(fmt::format("{}: no row marked best", origin));
    r.best_trial = r.trials[*best_index];
    r.best = r.best_trial.hyperparams;
    return r;
}

namespace {

std::string language_column(std::string_view model_id) {
    if (model_id.ends_with("-en")) return "English";
    if (model_id.ends_with("-es")) return "Spanish";
    return "Multi";
}

}  // namespace

std::string render_search_table(std::span<const SearchReport> reports) {
    std::vector<std::vector<std::string>> rows;
    Task task = Task::task1;
    for (const auto& r : reports) {
        task = r.task;
        const auto& m = r.best_trial.mean_report;
        rows.push_back({language_column(r.model_id), r.model_id, r.best.describe(), format_metric(m.accuracy),
                        format_metric(m.precision), format_metric(m.recall), format_metric(m.f1)});
    }
    return render_table({"Lang", "Model", "Best hyperparameters", "Acc", "Prec", "Rec", task == Task::task1 ? "F1b" : "F1m"},
                        rows);
}

std::string render_hyperparameter_distribution(std::span<const SearchReport> reports, const GridSpec& grid) {
    const double n = static_cast<double>(reports.size());
    auto pct = [&](std::size_t count) { return n > 0 ? fmt::format("{:.0f}%", 100.0 * static_cast<double>(count) / n) : "n/a"; };
    std::vector<std::vector<std::string>> rows;
    auto add = [&](const std::string& name, const std::string& value, auto pred) {
        std::size_t c = 0;
        for (const auto& r : reports)
            if (pred(r.best)) ++c;
        rows.push_back({name, value, pct(c)});
    };
    for (auto h : grid.head_sources)
        add("head source", std::string(to_string(h)), [&](const HyperParams& b) { return b.head_source == h; });
    for (double lr : grid.learning_rates)
        add("learning rate", format_decimal(lr),
            [&](const HyperParams& b) { return b.learning_rate == lr; });
    for (int bs : grid.batch_sizes)
        add("batch size", std::to_string(bs), [&](const HyperParams& b) { return b.batch_size == bs; });
    const int hi = grid.epoch_max;
    if (hi - 2 >= grid.epoch_min)
        add("epochs", fmt::format("<= {}", hi - 2), [&](const HyperParams& b) { return b.epochs <= hi - 2; });
    for (int e = std::max(grid.epoch_min, hi - 1); e <= hi; ++e)
        add("epochs", std::to_string(e), [&](const HyperParams& b) { return b.epochs == e; });
    return render_table({"Hyperparameter", "Value", "Share of best models"}, rows);
}

}  // namespace sexid
