#include "sexid/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "sexid/errors.hpp"
#include "sexid/rng.hpp"
#include "sexid/text_util.hpp"

namespace sexid {

std::string_view to_string(DatasetRole r) noexcept {
    switch (r) {
        case DatasetRole::train: return "train";
        case DatasetRole::validation: return "validation";
        case DatasetRole::test: return "test";
    }
    return "?";
}

std::optional<std::string> gold_label(const Example& ex, const LabelSpace& space) {
    return space.kind() == LabelKind::identification ? ex.task1 : ex.task2;
}

void validate_example(const Example& ex) {
    if (ex.id.empty()) throw FormatError("example with empty id");
    if (trim(ex.text).empty()) throw ValidationError(fmt::format("example {}: empty text", ex.id));
    if (ex.task1 && !is_task1_label(*ex.task1))
        throw ValidationError(fmt::format("example {}: unknown task1 label '{}'", ex.id, *ex.task1));
    if (ex.task2 && !is_task2_label(*ex.task2))
        throw ValidationError(fmt::format("example {}: unknown task2 label '{}'", ex.id, *ex.task2));
    if (ex.task1 && ex.task2 && ((*ex.task1 == kNonSexist) != (*ex.task2 == kNonSexist)))
        throw ValidationError(fmt::format("example {}: task1 '{}' is inconsistent with task2 '{}'", ex.id,
                                          *ex.task1, *ex.task2));
}

Dataset::Dataset(std::vector<Example> examples, DatasetRole role, std::string provenance)
    : examples_(std::move(examples)), role_(role), provenance_(std::move(provenance)) {
    std::unordered_set<std::string_view> seen;
    for (const auto& ex : examples_) {
        validate_example(ex);
        if (!seen.insert(ex.id).second) throw FormatError(fmt::format("duplicate id '{}'", ex.id));
    }
}

bool Dataset::labeled() const noexcept {
    return !examples_.empty() &&
           std::all_of(examples_.begin(), examples_.end(), [](const Example& e) { return e.task1.has_value(); });
}

const Example* Dataset::find(std::string_view id) const noexcept {
    for (const auto& ex : examples_)
        if (ex.id == id) return &ex;
    return nullptr;
}

Dataset parse_dataset(std::string_view content, DatasetRole role, std::string provenance) {
    const auto table = parse_tsv(content, provenance);
    const char* required[] = {"id", "source", "language", "text"};
    std::size_t col[4];
    for (int i = 0; i < 4; ++i) {
        col[i] = table.column(required[i]);
        if (col[i] == std::string::npos)
            throw FormatError(fmt::format("{}: header lacks column '{}'", provenance, required[i]));
    }
    const auto c_task1 = table.column("task1");
    const auto c_task2 = table.column("task2");

    std::vector<Example> examples;
    examples.reserve(table.rows.size());
    std::unordered_set<std::string> seen;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto line = table.line_numbers[r];
        Example ex;
        ex.id = row[col[0]];
        if (ex.id.empty()) throw FormatError(fmt::format("{}:{}: missing id", provenance, line));
        if (!seen.insert(ex.id).second)
            throw FormatError(fmt::format("{}:{}: duplicate id '{}'", provenance, line, ex.id));
        auto source = parse_source(row[col[1]]);
        if (!source)
            throw ValidationError(fmt::format("{}:{}: row {}: unknown source '{}'", provenance, line, ex.id, row[col[1]]));
        auto language = parse_language(row[col[2]]);
        if (!language)
            throw ValidationError(
                fmt::format("{}:{}: row {}: unknown language '{}'", provenance, line, ex.id, row[col[2]]));
        ex.source = *source;
        ex.language = *language;
        ex.text = row[col[3]];
        if (c_task1 != std::string::npos && !row[c_task1].empty()) ex.task1 = row[c_task1];
        if (c_task2 != std::string::npos && !row[c_task2].empty()) ex.task2 = row[c_task2];
        try {
            validate_example(ex);
        } catch (const ValidationError& e) {
            throw ValidationError(fmt::format("{}:{}: {}", provenance, line, e.what()));
        }
        examples.push_back(std::move(ex));
    }
    return Dataset(std::move(examples), role, std::move(provenance));
}

Dataset load_dataset(const std::filesystem::path& path, DatasetRole role) {
    if (!std::filesystem::exists(path)) throw IoError("dataset file not found: " + path.string());
    return parse_dataset(read_file(path), role, path.string());
}

std::string render_dataset(const Dataset& d) {
    const bool with_labels = std::any_of(d.begin(), d.end(), [](const Example& e) { return e.task1 || e.task2; });
    std::vector<std::string> header{"id", "source", "language", "text"};
    if (with_labels) {
        header.emplace_back("task1");
        header.emplace_back("task2");
    }
    std::string out = tsv_line(header);
    for (const auto& ex : d) {
        check_tsv_field(ex.id, "id");
        check_tsv_field(ex.text, "text of " + ex.id);
        std::vector<std::string> row{ex.id, std::string(to_string(ex.source)), std::string(to_string(ex.language)),
                                     ex.text};
        if (with_labels) {
            row.push_back(ex.task1.value_or(""));
            row.push_back(ex.task2.value_or(""));
        }
        out += tsv_line(row);
    }
    return out;
}

void write_dataset(const Dataset& d, const std::filesystem::path& path) {
    write_file(path, render_dataset(d));
}

std::map<Language, Dataset> split_by_language(const Dataset& d) {
    std::map<Language, Dataset> out;
    for (auto lang : kLanguages)
        out.emplace(lang, d.filter([lang](const Example& e) { return e.language == lang; },
                                   fmt::format("#{}", to_string(lang))));
    return out;
}

Dataset gate_for_task2_training(const Dataset& d) {
    for (const auto& ex : d) {
        if (!ex.task1) throw ArgumentError(fmt::format("example {} has no task1 label; cannot gate", ex.id));
        if (*ex.task1 == kSexist && (!ex.task2 || *ex.task2 == kNonSexist))
            throw ConsistencyError(
                fmt::format("example {} is sexist but its task2 label is '{}'", ex.id, ex.task2.value_or("")));
    }
    auto gated = d.filter([](const Example& e) { return *e.task1 == kSexist; }, "#gated");
    if (gated.empty()) spdlog::warn("task-2 gating of {} left no sexist examples", d.provenance());
    return gated;
}

// --- splits --------------------------------------------------------------

namespace {

// Strata keyed by task-1 label ("" for unlabeled), in first-seen order so
// that the result depends only on the dataset contents.
std::vector<std::vector<std::string>> strata(const Dataset& d) {
    std::vector<std::string> keys;
    std::vector<std::vector<std::string>> groups;
    for (const auto& ex : d) {
        const std::string key = ex.task1.value_or("");
        auto it = std::find(keys.begin(), keys.end(), key);
        if (it == keys.end()) {
            keys.push_back(key);
            groups.emplace_back();
            it = keys.end() - 1;
        }
        groups[static_cast<std::size_t>(it - keys.begin())].push_back(ex.id);
    }
    // Sort strata by key so label order in the file does not matter.
    std::vector<std::size_t> order(keys.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
    std::vector<std::vector<std::string>> sorted;
    for (auto i : order) sorted.push_back(std::move(groups[i]));
    return sorted;
}

}  // namespace

SplitPlan make_split(const Dataset& d, const SplitParams& params, std::uint64_t seed) {
    if (d.empty()) throw ArgumentError("cannot split an empty dataset");
    SplitPlan plan;
    plan.kind = params.kind;
    plan.seed = seed;
    Rng rng(seed);
    auto groups = strata(d);
    for (auto& g : groups) {
        std::sort(g.begin(), g.end());
        rng.shuffle(g);
    }

    if (params.kind == SplitKind::kfold) {
        if (params.k < 2) throw ArgumentError(fmt::format("k must be at least 2, got {}", params.k));
        if (static_cast<std::size_t>(params.k) > d.size())
            throw ArgumentError(fmt::format("k = {} exceeds dataset size {}", params.k, d.size()));
        plan.k = params.k;
        // Round-robin dealing continued across strata keeps both the overall
        // fold sizes and each stratum's per-fold counts within one of each other.
        std::size_t next = 0;
        for (const auto& g : groups)
            for (const auto& id : g) plan.assignments[id] = static_cast<int>(next++ % static_cast<std::size_t>(params.k));
        return plan;
    }

    if (!(params.train_fraction > 0.0 && params.train_fraction < 1.0))
        throw ArgumentError(fmt::format("train_fraction must lie in (0,1), got {}", params.train_fraction));
    plan.train_fraction = params.train_fraction;
    // Largest-remainder apportionment of the rounded train total across strata.
    const auto n = d.size();
    const auto total_train = static_cast<std::size_t>(std::llround(params.train_fraction * static_cast<double>(n)));
    std::vector<std::size_t> take(groups.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < groups.size(); ++s) {
        const double exact = params.train_fraction * static_cast<double>(groups[s].size());
        take[s] = static_cast<std::size_t>(std::floor(exact));
        assigned += take[s];
        remainders.emplace_back(exact - std::floor(exact), s);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < total_train && i < remainders.size(); ++i, ++assigned)
        ++take[remainders[i].second];
    for (std::size_t s = 0; s < groups.size(); ++s)
        for (std::size_t i = 0; i < groups[s].size(); ++i)
            plan.assignments[groups[s][i]] = i < take[s] ? SplitPlan::kTrain : SplitPlan::kValidation;
    return plan;
}

Partition materialize(const Dataset& d, const SplitPlan& plan, int p) {
    if (p < 0 || p >= plan.partitions()) throw ArgumentError(fmt::format("partition {} out of range", p));
    const int held = plan.kind == SplitKind::kfold ? p : SplitPlan::kValidation;
    auto fold_of = [&](const Example& e) {
        auto it = plan.assignments.find(e.id);
        if (it == plan.assignments.end())
            throw ArgumentError(fmt::format("split plan does not cover example {}", e.id));
        return it->second;
    };
    return Partition{d.filter([&](const Example& e) { return fold_of(e) != held; }, fmt::format("#train{}", p)),
                     d.filter([&](const Example& e) { return fold_of(e) == held; }, fmt::format("#heldout{}", p))};
}

// --- exploratory report --------------------------------------------------

DistributionTable class_distribution(const Dataset& d) {
    DistributionTable t;
    t.examples = d.size();
    auto add_rows = [&](std::string_view task, const LabelSpace& space, auto field) {
        for (const auto& label : space.labels()) {
            DistributionRow row;
            row.task = std::string(task);
            row.label = label;
            for (auto lang : kLanguages) row.counts[lang] = 0;
            for (const auto& ex : d) {
                const auto& v = field(ex);
                if (v && *v == label) {
                    ++row.counts[ex.language];
                    ++row.total;
                }
            }
            if (row.total > 0) t.rows.push_back(std::move(row));
        }
    };
    add_rows("task1", LabelSpace::task1(), [](const Example& e) -> const std::optional<std::string>& { return e.task1; });
    add_rows("task2", LabelSpace::task2_end_to_end(),
             [](const Example& e) -> const std::optional<std::string>& { return e.task2; });
    return t;
}

std::string render_distribution(const DistributionTable& t) {
    std::string out = fmt::format("{:<6} {:<30} {:>7} {:>7} {:>7} {:>7}\n", "Task", "Label", "en", "es", "Total", "Share");
    for (const auto& row : t.rows) {
        const double share = t.examples ? static_cast<double>(row.total) / static_cast<double>(t.examples) : 0.0;
        out += fmt::format("{:<6} {:<30} {:>7} {:>7} {:>7} {:>6.1f}%\n", row.task, row.label,
                           row.counts.at(Language::en), row.counts.at(Language::es), row.total, 100.0 * share);
    }
    return out;
}

}  // namespace sexid
