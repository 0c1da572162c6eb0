#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sexid/backends.hpp"
#include "sexid/translation.hpp"

namespace sexid {

/// One of the seven single-model strategies.
struct ModelSpec {
    std::string id;  // M1..M7
    bool multilingual = false;
    bool translate_train = false;
    bool translate_test = false;
    std::optional<Language> target_language;  // set for M4..M7
    std::string description;
};

/// M1..M7 in catalog order.
const std::vector<ModelSpec>& model_catalog();
/// Throws ArgumentError for an unknown id.
const ModelSpec& model_spec(std::string_view id);

/// Trained-model keys a strategy needs: "M1", "M2-en", "M2-es", "M3-en",
/// "M3-es". M4/M6 reuse the untranslated monolingual models, M5/M7 the
/// translation-augmented ones.
std::vector<std::string> underlying_models(const ModelSpec& spec);
/// Key of the trained model for a base ("M2"/"M3") and a language.
std::string trained_key(std::string_view base, Language language);

using TrainedModels = std::map<std::string, const TrainedModel*>;

struct TestTranslation {
    TranslationProvider* provider = nullptr;
    TranslationCache* cache = nullptr;
    TranslationOptions options;
};

/// Scores every test example once. M1 uses the multilingual model, M2/M3
/// route by language, M4..M7 translate the test set to the target language
/// and use one monolingual model. Throws RoutingError when no model serves an
/// example's language and ArgumentError when translation is needed but no
/// provider is given.
std::vector<PredictionRecord> predict_with_model_spec(const ModelSpec& spec, const TrainedModels& models,
                                                      const Dataset& test, const TestTranslation& translation);

// --- ensembles -----------------------------------------------------------

enum class FusionRule { majority, max_raw, max_standardized };
std::string_view to_string(FusionRule r) noexcept;

/// How the value rules combine members: the member with the highest value
/// decides, or per-label scores are summed across members.
enum class ValueAggregation { winner_take_all, score_sum };
std::string_view to_string(ValueAggregation a) noexcept;
std::optional<ValueAggregation> parse_value_aggregation(std::string_view s) noexcept;

struct EnsembleSpec {
    std::string id;  // E1..E6
    std::vector<std::string> members;
    FusionRule rule = FusionRule::majority;
};

inline const std::vector<std::string> kDefaultBestMembers{"M2", "M3"};

/// E1..E3 over best_members, E4..E6 over M1..M7. Throws ConfigError for an
/// unknown or repeated member.
std::vector<EnsembleSpec> ensemble_catalog(const std::vector<std::string>& best_members = kDefaultBestMembers);

struct Moments {
    double mean = 0.0;
    double stddev = 0.0;  // population
};

/// Per (model, label) mean and population standard deviation of raw scores.
class StandardizationStats {
public:
    void set(const std::string& model_id, std::vector<Moments> per_label) { stats_[model_id] = std::move(per_label); }
    bool covers(std::string_view model_id) const noexcept { return stats_.find(model_id) != stats_.end(); }
    /// Throws ConfigError when the model has no statistics.
    const std::vector<Moments>& of(std::string_view model_id) const;
    /// (score - mean) / std, or 0 when std is 0.
    double z(std::string_view model_id, std::size_t label, double score) const;
    /// The whole score vector standardized.
    std::vector<double> standardize(const PredictionRecord& r) const;

private:
    std::map<std::string, std::vector<Moments>, std::less<>> stats_;
};

/// Throws StatisticsError for a model with fewer than two records. A spread
/// within rounding error of zero is stored as 0.
StandardizationStats compute_standardization(const std::map<std::string, std::vector<PredictionRecord>>& records);

/// Records of several members for one example, in member order.
using MemberRecords = std::span<const PredictionRecord* const>;

/// Most votes; ties go to the highest summed standardized score among the
/// tied labels (raw scores when stats is null), then declaration order.
std::string majority_vote(MemberRecords records, const StandardizationStats* stats = nullptr);

/// Index of the member whose predicted-label score is highest; first member
/// wins ties.
std::size_t max_raw_winner(MemberRecords records);
std::string max_raw_select(MemberRecords records);

/// As max_raw but comparing the z-score of each member's predicted label.
/// z-scores within a relative 1e-9 of each other count as tied.
std::size_t max_standardized_winner(MemberRecords records, const StandardizationStats& stats);
std::string max_standardized_select(MemberRecords records, const StandardizationStats& stats);

struct EnsembleOutput {
    std::vector<PredictionRecord> records;  // one per example, first member's order
    std::vector<std::string> winners;       // deciding member per example ("" for votes and sums)
};

/// Throws CoverageError listing ids a member lacks and ConfigError when
/// members disagree on the label space.
EnsembleOutput run_ensemble(const EnsembleSpec& spec, const std::map<std::string, std::vector<PredictionRecord>>& member_records,
                            const StandardizationStats& stats,
                            ValueAggregation aggregation = ValueAggregation::winner_take_all);

// --- prediction files ----------------------------------------------------

/// TSV: example_id, model_id, label, one "score:<label>" column per class,
/// plus "winner" when winners is non-empty.
std::string render_predictions(std::span<const PredictionRecord> records, std::span<const std::string> winners = {});
void write_predictions(const std::filesystem::path& path, std::span<const PredictionRecord> records,
                       std::span<const std::string> winners = {});
std::vector<PredictionRecord> parse_predictions(std::string_view content, std::string_view origin);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

}  // namespace sexid
