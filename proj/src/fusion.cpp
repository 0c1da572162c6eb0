#include "sexid/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "sexid/errors.hpp"
#include "sexid/text_util.hpp"

namespace sexid {

const std::vector<ModelSpec>& model_catalog() {
    static const std::vector<ModelSpec> catalog{
        {"M1", true, false, false, std::nullopt, "multilingual model"},
        {"M2", false, false, false, std::nullopt, "separated monolingual models"},
        {"M3", false, true, false, std::nullopt, "separated monolingual models, translated training data"},
        {"M4", false, false, true, Language::en, "English model, translated test data"},
        {"M5", false, true, true, Language::en, "English model, translated training and test data"},
        {"M6", false, false, true, Language::es, "Spanish model, translated test data"},
        {"M7", false, true, true, Language::es, "Spanish model, translated training and test data"},
    };
    return catalog;
}

const ModelSpec& model_spec(std::string_view id) {
    for (const auto& s : model_catalog())
        if (s.id == id) return s;
    throw ArgumentError(fmt::format("unknown model '{}' (expected M1..M7)", id));
}

std::string trained_key(std::string_view base, Language language) {
    return fmt::format("{}-{}", base, to_string(language));
}

std::vector<std::string> underlying_models(const ModelSpec& spec) {
    if (spec.multilingual) return {"M1"};
    const std::string base = spec.translate_train ? "M3" : "M2";
    if (spec.target_language) return {trained_key(base, *spec.target_language)};
    return {trained_key(base, Language::en), trained_key(base, Language::es)};
}

namespace {

const TrainedModel& require_model(const TrainedModels& models, const std::string& key, std::string_view spec_id) {
    auto it = models.find(key);
    if (it == models.end() || !it->second)
        throw RoutingError(fmt::format("{} needs trained model {}, which is not available", spec_id, key));
    return *it->second;
}

}  // namespace

std::vector<PredictionRecord> predict_with_model_spec(const ModelSpec& spec, const TrainedModels& models,
                                                      const Dataset& test, const TestTranslation& translation) {
    if (spec.multilingual) return predict_labels(require_model(models, "M1", spec.id), test.examples(), spec.id);

    if (spec.target_language) {
        if (!translation.provider || !translation.cache)
            throw ArgumentError(fmt::format("{} translates the test set but no translation provider is configured", spec.id));
        const auto& model = require_model(models, underlying_models(spec).front(), spec.id);
        const auto translated = translate_test_set(test, *spec.target_language, *translation.provider,
                                                   *translation.cache, translation.options);
        return predict_labels(model, translated.examples(), spec.id);
    }

    // Route each example by its language field, keeping test order.
    const std::string base = spec.translate_train ? "M3" : "M2";
    std::vector<PredictionRecord> out(test.size());
    for (auto lang : kLanguages) {
        std::vector<Example> batch;
        std::vector<std::size_t> where;
        for (std::size_t i = 0; i < test.size(); ++i)
            if (test[i].language == lang) {
                batch.push_back(test[i]);
                where.push_back(i);
            }
        if (batch.empty()) continue;
        const auto& model = require_model(models, trained_key(base, lang), spec.id);
        auto records = predict_labels(model, batch, spec.id);
        for (std::size_t k = 0; k < records.size(); ++k) out[where[k]] = std::move(records[k]);
    }
    return out;
}

// --- ensembles -----------------------------------------------------------

std::string_view to_string(FusionRule r) noexcept {
    switch (r) {
        case FusionRule::majority: return "majority";
        case FusionRule::max_raw: return "max_raw";
        case FusionRule::max_standardized: return "max_standardized";
    }
    return "?";
}

std::string_view to_string(ValueAggregation a) noexcept {
    return a == ValueAggregation::winner_take_all ? "winner_take_all" : "score_sum";
}

std::optional<ValueAggregation> parse_value_aggregation(std::string_view s) noexcept {
    if (s == "winner_take_all") return ValueAggregation::winner_take_all;
    if (s == "score_sum") return ValueAggregation::score_sum;
    return std::nullopt;
}

std::vector<EnsembleSpec> ensemble_catalog(const std::vector<std::string>& best_members) {
    if (best_members.empty()) throw ConfigError("best-members set must not be empty");
    std::set<std::string> seen;
    for (const auto& m : best_members) {
        try {
            model_spec(m);
        } catch (const ArgumentError& e) {
            throw ConfigError(e.what());
        }
        if (!seen.insert(m).second) throw ConfigError(fmt::format("best-members set repeats {}", m));
    }
    std::vector<std::string> all;
    for (const auto& s : model_catalog()) all.push_back(s.id);
    return {
        {"E1", best_members, FusionRule::majority},   {"E2", best_members, FusionRule::max_raw},
        {"E3", best_members, FusionRule::max_standardized}, {"E4", all, FusionRule::majority},
        {"E5", all, FusionRule::max_raw},             {"E6", all, FusionRule::max_standardized},
    };
}

const std::vector<Moments>& StandardizationStats::of(std::string_view model_id) const {
    auto it = stats_.find(model_id);
    if (it == stats_.end()) throw ConfigError(fmt::format("no standardization statistics for model {}", model_id));
    return it->second;
}

double StandardizationStats::z(std::string_view model_id, std::size_t label, double score) const {
    const auto& m = of(model_id);
    if (label >= m.size()) throw ConfigError(fmt::format("statistics for {} lack label {}", model_id, label));
    return m[label].stddev > 0.0 ? (score - m[label].mean) / m[label].stddev : 0.0;
}

std::vector<double> StandardizationStats::standardize(const PredictionRecord& r) const {
    std::vector<double> out(r.scores.values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = z(r.model_id, i, r.scores.values[i]);
    return out;
}

namespace {
constexpr double kZTolerance = 1e-9;
}  // namespace

StandardizationStats compute_standardization(const std::map<std::string, std::vector<PredictionRecord>>& records) {
    StandardizationStats stats;
    for (const auto& [model, recs] : records) {
        if (recs.size() < 2)
            throw StatisticsError(fmt::format("model {} has {} record(s); standardization needs at least 2", model,
                                              recs.size()));
        const auto L = recs.front().scores.values.size();
        std::vector<Moments> m(L);
        for (std::size_t l = 0; l < L; ++l) {
            double sum = 0.0;
            for (const auto& r : recs) sum += r.scores.values.at(l);
            const double mean = sum / static_cast<double>(recs.size());
            double sq = 0.0;
            for (const auto& r : recs) sq += (r.scores.values[l] - mean) * (r.scores.values[l] - mean);
            double sd = std::sqrt(sq / static_cast<double>(recs.size()));
            // Constant scores can leave a rounding-sized spread behind.
            if (sd <= kZTolerance * std::max(1.0, std::abs(mean))) sd = 0.0;
            m[l] = Moments{mean, sd};
        }
        stats.set(model, std::move(m));
    }
    return stats;
}

namespace {

const LabelSpace& common_space(MemberRecords records) {
    if (records.empty()) throw ArgumentError("fusion needs at least one member record");
    const auto& space = records.front()->scores.space;
    for (const auto* r : records)
        if (!(r->scores.space == space))
            throw ConfigError(fmt::format("members disagree on the label space ({} vs {})", r->model_id,
                                          records.front()->model_id));
    return space;
}

}  // namespace

std::string majority_vote(MemberRecords records, const StandardizationStats* stats) {
    const auto& space = common_space(records);
    std::vector<std::size_t> votes(space.size(), 0);
    for (const auto* r : records) ++votes[space.require_index(r->label)];
    const auto top = *std::max_element(votes.begin(), votes.end());

    std::optional<std::size_t> best;
    double best_sum = 0.0;
    for (std::size_t l = 0; l < space.size(); ++l) {
        if (votes[l] != top) continue;
        double sum = 0.0;
        for (const auto* r : records) sum += stats ? stats->z(r->model_id, l, r->scores.values[l]) : r->scores.values[l];
        if (!best || sum > best_sum) {
            best = l;
            best_sum = sum;
        }
    }
    return space[*best];
}

std::size_t max_raw_winner(MemberRecords records) {
    common_space(records);
    std::size_t best = 0;
    double best_value = records[0]->scores.at(records[0]->label);
    for (std::size_t i = 1; i < records.size(); ++i) {
        const double v = records[i]->scores.at(records[i]->label);
        if (v > best_value) {
            best = i;
            best_value = v;
        }
    }
    return best;
}

std::string max_raw_select(MemberRecords records) { return records[max_raw_winner(records)]->label; }

std::size_t max_standardized_winner(MemberRecords records, const StandardizationStats& stats) {
    const auto& space = common_space(records);
    auto value = [&](const PredictionRecord* r) {
        const auto l = space.require_index(r->label);
        return stats.z(r->model_id, l, r->scores.values[l]);
    };
    std::size_t best = 0;
    double best_value = value(records[0]);
    for (std::size_t i = 1; i < records.size(); ++i) {
        const double v = value(records[i]);
        // z-scores that agree to rounding error count as a tie, so rescaling a
        // member's scores cannot reorder them.
        if (v > best_value + kZTolerance * std::max(1.0, std::abs(best_value))) {
            best = i;
            best_value = v;
        }
    }
    return best;
}

std::string max_standardized_select(MemberRecords records, const StandardizationStats& stats) {
    return records[max_standardized_winner(records, stats)]->label;
}

EnsembleOutput run_ensemble(const EnsembleSpec& spec, const std::map<std::string, std::vector<PredictionRecord>>& member_records,
                            const StandardizationStats& stats, ValueAggregation aggregation) {
    if (spec.members.empty()) throw ConfigError(fmt::format("ensemble {} has no members", spec.id));

    // Index every member's records by example id.
    std::vector<std::map<std::string_view, const PredictionRecord*>> index;
    for (const auto& m : spec.members) {
        auto it = member_records.find(m);
        if (it == member_records.end()) throw CoverageError(fmt::format("ensemble {}: member {} has no predictions", spec.id, m));
        std::map<std::string_view, const PredictionRecord*> by_id;
        for (const auto& r : it->second)
            if (!by_id.emplace(r.example_id, &r).second)
                throw CoverageError(fmt::format("ensemble {}: member {} predicts {} twice", spec.id, m, r.example_id));
        index.push_back(std::move(by_id));
    }
    const auto& order = member_records.at(spec.members.front());
    std::set<std::string_view> all_ids;
    for (const auto& by_id : index)
        for (const auto& [id, _] : by_id) all_ids.insert(id);
    for (std::size_t k = 0; k < index.size(); ++k) {
        std::vector<std::string> missing;
        for (auto id : all_ids)
            if (!index[k].count(id)) missing.emplace_back(id);
        if (!missing.empty())
            throw CoverageError(fmt::format("ensemble {}: member {} lacks {} example(s): {}", spec.id, spec.members[k],
                                            missing.size(), join(missing, ",")));
    }

    EnsembleOutput out;
    std::vector<const PredictionRecord*> row(spec.members.size());
    for (const auto& first : order) {
        for (std::size_t k = 0; k < index.size(); ++k) row[k] = index[k].at(first.example_id);
        const auto& space = common_space(row);
        PredictionRecord fused{first.example_id, spec.id, ScoreVector{space, {}}, ""};
        std::string winner;

        if (spec.rule == FusionRule::majority) {
            fused.label = majority_vote(row, &stats);
            fused.scores.values.assign(space.size(), 0.0);
            for (const auto* r : row) fused.scores.values[space.require_index(r->label)] += 1.0 / static_cast<double>(row.size());
        } else if (aggregation == ValueAggregation::score_sum) {
            fused.scores.values.assign(space.size(), 0.0);
            for (const auto* r : row) {
                const auto v = spec.rule == FusionRule::max_standardized ? stats.standardize(*r) : r->scores.values;
                for (std::size_t l = 0; l < v.size(); ++l) fused.scores.values[l] += v[l];
            }
            fused.label = fused.scores.argmax_label();
        } else {
            const bool standardized = spec.rule == FusionRule::max_standardized;
            const auto w = standardized ? max_standardized_winner(row, stats) : max_raw_winner(row);
            fused.label = row[w]->label;
            fused.scores.values = standardized ? stats.standardize(*row[w]) : row[w]->scores.values;
            winner = spec.members[w];
        }
        out.records.push_back(std::move(fused));
        out.winners.push_back(std::move(winner));
    }
    return out;
}

// --- prediction files ----------------------------------------------------

std::string render_predictions(std::span<const PredictionRecord> records, std::span<const std::string> winners) {
    if (!winners.empty() && winners.size() != records.size())
        throw ArgumentError("winner list does not match the prediction records");
    const LabelSpace space = records.empty() ? LabelSpace::task1() : records.front().scores.space;
    std::vector<std::string> header{"example_id", "model_id", "label"};
    for (const auto& l : space.labels()) header.push_back("score:" + l);
    if (!winners.empty()) header.emplace_back("winner");
    std::string out = tsv_line(header);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (!(r.scores.space == space)) throw ArgumentError("prediction records mix label spaces");
        check_tsv_field(r.example_id, "example id");
        std::vector<std::string> row{r.example_id, r.model_id, r.label};
        for (double v : r.scores.values) row.push_back(format_real(v));
        if (!winners.empty()) row.push_back(winners[i]);
        out += tsv_line(row);
    }
    return out;
}

void write_predictions(const std::filesystem::path& path, std::span<const PredictionRecord> records,
                       std::span<const std::string> winners) {
    write_file(path, render_predictions(records, winners));
}

namespace {

LabelSpace infer_space(std::vector<std::string> labels) {
    for (const auto& known : {LabelSpace::task1(), LabelSpace::task2_categories(), LabelSpace::task2_end_to_end()})
        if (known.labels() == labels) return known;
    const bool has_non_sexist = std::find(labels.begin(), labels.end(), kNonSexist) != labels.end();
    return LabelSpace(has_non_sexist ? (labels.size() == 2 ? LabelKind::identification : LabelKind::end_to_end)
                                     : LabelKind::categorization,
                      std::move(labels));
}

}  // namespace

std::vector<PredictionRecord> parse_predictions(std::string_view content, std::string_view origin) {
    const auto table = parse_tsv(content, origin);
    const auto id_col = table.column("example_id"), model_col = table.column("model_id"), label_col = table.column("label");
    if (id_col == std::string::npos || model_col == std::string::npos || label_col == std::string::npos)
        throw FormatError(fmt::format("{}: prediction file needs example_id, model_id and label columns", origin));
    std::vector<std::string> labels;
    std::vector<std::size_t> score_cols;
    for (std::size_t c = 0; c < table.header.size(); ++c)
        if (starts_with(table.header[c], "score:")) {
            labels.push_back(table.header[c].substr(6));
            score_cols.push_back(c);
        }
    if (labels.empty()) throw FormatError(fmt::format("{}: no score columns", origin));
    const auto space = infer_space(labels);
    std::vector<PredictionRecord> out;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        PredictionRecord r{row[id_col], row[model_col], ScoreVector{space, {}}, row[label_col]};
        for (auto c : score_cols)
            r.scores.values.push_back(parse_real(row[c], fmt::format("{} line {}", origin, table.line_numbers[i])));
        if (!space.contains(r.label))
            throw FormatError(fmt::format("{} line {}: label '{}' has no score column", origin, table.line_numbers[i], r.label));
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
    return parse_predictions(read_file(path), path.string());
}

}  // namespace sexid
