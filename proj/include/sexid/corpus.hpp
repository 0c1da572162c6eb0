#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sexid/labels.hpp"

namespace sexid {

/// One labeled social-media post.
struct Example {
    std::string id;
    Source source = Source::twitter;
    Language language = Language::en;
    std::string text;
    std::optional<std::string> task1;  // sexist | non-sexist
    std::optional<std::string> task2;  // one of the five categories | non-sexist

    friend bool operator==(const Example&, const Example&) = default;
};

/// Gold label of an example for a label space, or nullopt when unlabeled.
std::optional<std::string> gold_label(const Example& ex, const LabelSpace& space);

/// Throws ValidationError when a single example breaks an invariant.
void validate_example(const Example& ex);

enum class DatasetRole { train, validation, test };
std::string_view to_string(DatasetRole r) noexcept;

/// Ordered, validated collection of examples. Immutable once built.
class Dataset {
public:
    Dataset() = default;
    /// Validates every example and id uniqueness.
    Dataset(std::vector<Example> examples, DatasetRole role, std::string provenance);

    const std::vector<Example>& examples() const noexcept { return examples_; }
    std::size_t size() const noexcept { return examples_.size(); }
    bool empty() const noexcept { return examples_.empty(); }
    const Example& operator[](std::size_t i) const { return examples_[i]; }
    auto begin() const noexcept { return examples_.begin(); }
    auto end() const noexcept { return examples_.end(); }

    DatasetRole role() const noexcept { return role_; }
    const std::string& provenance() const noexcept { return provenance_; }
    bool labeled() const noexcept;

    /// Keeps examples satisfying pred, in order.
    template <typename Pred>
    Dataset filter(Pred pred, std::string provenance_suffix) const {
        std::vector<Example> kept;
        for (const auto& ex : examples_)
            if (pred(ex)) kept.push_back(ex);
        return Dataset(std::move(kept), role_, provenance_ + provenance_suffix, trusted_tag{});
    }

    const Example* find(std::string_view id) const noexcept;

private:
    struct trusted_tag {};
    Dataset(std::vector<Example> examples, DatasetRole role, std::string provenance, trusted_tag)
        : examples_(std::move(examples)), role_(role), provenance_(std::move(provenance)) {}

    std::vector<Example> examples_;
    DatasetRole role_ = DatasetRole::train;
    std::string provenance_;
};

/// Reads a header-bearing TSV with columns id, source, language, text and
/// optionally task1, task2. Row order is preserved.
Dataset load_dataset(const std::filesystem::path& path, DatasetRole role);
Dataset parse_dataset(std::string_view content, DatasetRole role, std::string provenance);
std::string render_dataset(const Dataset& d);
void write_dataset(const Dataset& d, const std::filesystem::path& path);

std::map<Language, Dataset> split_by_language(const Dataset& d);

/// Examples with task1 = sexist. Throws ConsistencyError for a sexist
/// example whose task2 label is non-sexist.
Dataset gate_for_task2_training(const Dataset& d);

// --- splits --------------------------------------------------------------

enum class SplitKind { holdout, kfold };

struct SplitParams {
    SplitKind kind = SplitKind::kfold;
    double train_fraction = 0.8;
    int k = 10;
};

/// Per-example assignment. For kfold the value is the fold index; for
/// holdout, kTrain or kValidation.
struct SplitPlan {
    static constexpr int kTrain = 0;
    static constexpr int kValidation = 1;

    SplitKind kind = SplitKind::kfold;
    double train_fraction = 0.8;
    int k = 10;
    std::uint64_t seed = 0;
    std::map<std::string, int> assignments;

    /// Number of (train, held-out) partitions the plan defines.
    int partitions() const noexcept { return kind == SplitKind::kfold ? k : 1; }

    friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

/// Stratified by task-1 label when present. Deterministic in
/// (ids, labels, params, seed).
SplitPlan make_split(const Dataset& d, const SplitParams& params, std::uint64_t seed);

struct Partition {
    Dataset train;
    Dataset held_out;
};

/// Partition p of the plan: for kfold, fold p is held out; for holdout p must
/// be 0 and the validation examples are held out.
Partition materialize(const Dataset& d, const SplitPlan& plan, int p);

// --- exploratory report --------------------------------------------------

struct DistributionRow {
    std::string task;   // task1 | task2
    std::string label;
    std::map<Language, std::size_t> counts;
    std::size_t total = 0;
};

struct DistributionTable {
    std::vector<DistributionRow> rows;
    std::size_t examples = 0;
};

DistributionTable class_distribution(const Dataset& d);
std::string render_distribution(const DistributionTable& t);

}  // namespace sexid
