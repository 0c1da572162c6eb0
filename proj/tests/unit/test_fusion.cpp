#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "generators.hpp"
#include "oracles.hpp"
#include "sexid/errors.hpp"
#include "sexid/fusion.hpp"
#include "temp_dir.hpp"

using namespace sexid;
using namespace sexid::testing;

namespace {

using Records = std::map<std::string, std::vector<PredictionRecord>>;

PredictionRecord task1_record(std::string model, std::string_view label, double score) {
    const auto space = LabelSpace::task1();
    std::vector<double> v(2, 1.0 - score);
    v[space.require_index(label)] = score;
    return make_record("x", std::move(model), space, v);
}

std::vector<std::string> member_names(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(fmt::format("m{}", i));
    return out;
}

}  // namespace

TEST_CASE("model catalog and routing keys") {
    CHECK(model_catalog().size() == 7);
    CHECK(underlying_models(model_spec("M1")) == std::vector<std::string>{"M1"});
    CHECK(underlying_models(model_spec("M2")) == std::vector<std::string>{"M2-en", "M2-es"});
    CHECK(underlying_models(model_spec("M4")) == std::vector<std::string>{"M2-en"});
    CHECK(underlying_models(model_spec("M5")) == std::vector<std::string>{"M3-en"});
    CHECK(underlying_models(model_spec("M7")) == std::vector<std::string>{"M3-es"});
    CHECK_THROWS_AS(model_spec("M8"), ArgumentError);

    const auto e = ensemble_catalog();
    REQUIRE(e.size() == 6);
    CHECK(e[0].members == kDefaultBestMembers);
    CHECK(e[3].members.size() == 7);
    CHECK(e[5].rule == FusionRule::max_standardized);
    CHECK_THROWS_AS(ensemble_catalog({"M2", "M2"}), ConfigError);
    CHECK_THROWS_AS(ensemble_catalog({"M9"}), ConfigError);
}

TEST_CASE("majority vote") {
    const std::vector<PredictionRecord> rs{task1_record("a", kSexist, 0.6), task1_record("b", kSexist, 0.7),
                                           task1_record("c", kNonSexist, 0.9)};
    std::vector<const PredictionRecord*> row{&rs[0], &rs[1], &rs[2]};
    CHECK(majority_vote(row) == kSexist);
    // A 1-1 tie goes to the larger summed score.
    std::vector<const PredictionRecord*> tie{&rs[0], &rs[2]};
    CHECK(majority_vote(tie) == kNonSexist);
    // Equal sums fall back to declaration order.
    const auto p = task1_record("p", kSexist, 0.5), q = task1_record("q", kNonSexist, 0.5);
    std::vector<const PredictionRecord*> flat{&p, &q};
    CHECK(majority_vote(flat) == LabelSpace::task1()[0]);
}

TEST_CASE("value selection") {
    const auto a = task1_record("A", kSexist, 0.9), b = task1_record("B", kNonSexist, 0.6);
    std::vector<const PredictionRecord*> row{&a, &b};
    CHECK(max_raw_select(row) == kSexist);
    std::vector<const PredictionRecord*> single{&b};
    CHECK(max_raw_select(single) == kNonSexist);
    const auto b2 = task1_record("B", kNonSexist, 0.9);
    std::vector<const PredictionRecord*> tied{&a, &b2};
    CHECK(max_raw_winner(tied) == 0);

    Rng rng(5);
    const auto space = synthetic_space(4);
    for (int t = 0; t < 200; ++t) {
        const auto recs = random_member_records(rng, member_names(5), space, 1);
        const auto row5 = member_row(recs, member_names(5), 0);
        std::size_t oracle = 0;
        for (std::size_t i = 0; i < row5.size(); ++i)
            if (row5[i]->scores.max_value() > row5[oracle]->scores.max_value()) oracle = i;
        CHECK(max_raw_winner(row5) == oracle);
    }
}

TEST_CASE("standardization statistics") {
    const auto space = LabelSpace::task1();
    Records recs;
    for (double s : {0.2, 0.4, 0.6}) recs["a"].push_back(make_record("x", "a", space, {s, 1.0 - s}));
    for (int i = 0; i < 3; ++i) recs["flat"].push_back(make_record("x", "flat", space, {0.5, 0.5}));
    recs["twin"] = recs["a"];
    for (auto& r : recs["twin"]) r.model_id = "twin";
    const auto stats = compute_standardization(recs);
    const auto& m = stats.of("a")[0];
    CHECK(m.mean == doctest::Approx(0.4));
    CHECK(m.stddev == doctest::Approx(0.1633).epsilon(1e-3));
    CHECK(stats.of("flat")[0].stddev == 0.0);
    CHECK(stats.z("flat", 0, 0.9) == 0.0);
    CHECK(stats.of("twin")[0].mean == stats.of("a")[0].mean);
    CHECK(stats.of("twin")[1].stddev == stats.of("a")[1].stddev);
    CHECK_THROWS_AS(stats.of("missing"), ConfigError);

    Records thin;
    thin["a"].push_back(make_record("x", "a", space, {0.3, 0.7}));
    CHECK_THROWS_AS(compute_standardization(thin), StatisticsError);
}

TEST_CASE("standardization can flip the winner") {
    const auto space = LabelSpace::task1();
    const auto s = space.require_index(kSexist), n = space.require_index(kNonSexist);
    StandardizationStats stats;
    std::vector<Moments> ma(2), mb(2);
    ma[s] = {0.8, 0.2};  // A: (0.9 - 0.8) / 0.2 = 0.5
    mb[n] = {0.5, 0.1};  // B: (0.7 - 0.5) / 0.1 = 2.0
    ma[n] = mb[s] = {0.0, 1.0};
    stats.set("A", ma);
    stats.set("B", mb);
    const auto a = task1_record("A", kSexist, 0.9), b = task1_record("B", kNonSexist, 0.7);
    std::vector<const PredictionRecord*> row{&a, &b};
    CHECK(max_raw_select(row) == kSexist);
    CHECK(max_standardized_select(row, stats) == kNonSexist);

    Records recs{{"A", {a}}, {"B", {b}}};
    const EnsembleSpec e2_spec{"E2", {"A", "B"}, FusionRule::max_raw}, e3_spec{"E3", {"A", "B"}, FusionRule::max_standardized};
    const auto e2 = run_ensemble(e2_spec, recs, stats), e3 = run_ensemble(e3_spec, recs, stats);
    CHECK(e2.records[0].label == kSexist);
    CHECK(e3.records[0].label == kNonSexist);
    CHECK(e2.winners[0] == "A");
    CHECK(e3.winners[0] == "B");
    CHECK(e3.records[0].scores.values[n] == doctest::Approx(2.0));

    StandardizationStats identity;
    identity.set("A", {{0.0, 1.0}, {0.0, 1.0}});
    identity.set("B", {{0.0, 1.0}, {0.0, 1.0}});
    CHECK(max_standardized_select(row, identity) == max_raw_select(row));
    StandardizationStats partial;
    partial.set("A", ma);
    CHECK_THROWS_AS(max_standardized_select(row, partial), ConfigError);
}

TEST_CASE("seven-member vote matches the brute-force mode") {
    Rng rng(77);
    const auto members = member_names(7);
    const auto space = LabelSpace::task1();
    const auto recs = random_member_records(rng, members, space, 3);
    EnsembleSpec spec{"E4", members, FusionRule::majority};
    const auto out = run_ensemble(spec, recs, compute_standardization(recs));
    for (std::size_t i = 0; i < 3; ++i) {
        const auto row = member_row(recs, members, i);
        const int oracle = vote_oracle(row, space);
        REQUIRE(oracle >= 0);  // seven binary votes never tie
        CHECK(out.records[i].label == space[static_cast<std::size_t>(oracle)]);
    }

    // Identical members reproduce the member's labels under every rule.
    Records same;
    for (const auto& m : members) {
        same[m] = recs.at("m0");
        for (auto& r : same[m]) r.model_id = m;
    }
    const auto stats = compute_standardization(same);
    for (auto rule : {FusionRule::majority, FusionRule::max_raw, FusionRule::max_standardized}) {
        const auto fused = run_ensemble(EnsembleSpec{"E", members, rule}, same, stats);
        for (std::size_t i = 0; i < 3; ++i) CHECK(fused.records[i].label == recs.at("m0")[i].label);
    }
}

TEST_CASE("ensemble properties over randomized fixtures") {
    const auto start = std::chrono::steady_clock::now();
    const auto s = ensemble_property_sweep(2024, 500);
    CHECK(s.fixtures == 500);
    CHECK(s.unanimity_failures == 0);
    CHECK(s.permutation_failures == 0);
    CHECK(s.coverage_failures == 0);
    CHECK(s.standardized_affine_failures == 0);
    // Raw selection is not affine invariant.
    CHECK(s.raw_affine_changes > 0);
    CHECK(s.ok());
    CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(10));
}

TEST_CASE("raw selection changes under scaling on a fixed fixture") {
    const auto space = LabelSpace::task1();
    Records recs;
    for (double s : {0.9, 0.6, 0.55}) recs["A"].push_back(make_record("x" + std::to_string(recs["A"].size()), "A", space, {1 - s, s}));
    for (double s : {0.7, 0.8, 0.65}) recs["B"].push_back(make_record("x" + std::to_string(recs["B"].size()), "B", space, {s, 1 - s}));
    auto scaled = recs;
    for (auto& r : scaled["B"])
        for (auto& v : r.scores.values) v = 2.0 * v;
    const std::vector<std::string> members{"A", "B"};
    const auto stats = compute_standardization(recs), scaled_stats = compute_standardization(scaled);
    const auto before = member_row(recs, members, 0), after = member_row(scaled, members, 0);
    CHECK(max_raw_select(before) == kSexist);
    CHECK(max_raw_select(after) == kNonSexist);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(max_standardized_select(member_row(scaled, members, i), scaled_stats) ==
              max_standardized_select(member_row(recs, members, i), stats));
}

TEST_CASE("score-sum aggregation") {
    const auto a = task1_record("A", kSexist, 0.9), b = task1_record("B", kNonSexist, 0.6),
               c = task1_record("C", kNonSexist, 0.6);
    Records recs{{"A", {a}}, {"B", {b}}, {"C", {c}}};
    StandardizationStats stats;
    for (const auto* m : {"A", "B", "C"}) stats.set(m, {{0.0, 1.0}, {0.0, 1.0}});
    const auto out = run_ensemble(EnsembleSpec{"E5", {"A", "B", "C"}, FusionRule::max_raw}, recs, stats,
                                  ValueAggregation::score_sum);
    // Sexist: 0.9 + 0.4 + 0.4 = 1.7 against 0.1 + 0.6 + 0.6 = 1.3.
    CHECK(out.records[0].label == kSexist);
    CHECK(out.winners[0].empty());
    CHECK(parse_value_aggregation("score_sum") == ValueAggregation::score_sum);
}

TEST_CASE("mismatched label spaces are rejected") {
    Records recs{{"A", {task1_record("A", kSexist, 0.9)}},
                 {"B", {make_record("x", "B", synthetic_space(2), {0.5, 0.5})}}};
    StandardizationStats stats;
    CHECK_THROWS_AS(run_ensemble(EnsembleSpec{"E", {"A", "B"}, FusionRule::majority}, recs, stats), ConfigError);
    CHECK_THROWS_AS(run_ensemble(EnsembleSpec{"E", {"A", "Z"}, FusionRule::majority}, recs, stats), CoverageError);
}

TEST_CASE("prediction files round-trip") {
    Rng rng(6);
    const auto space = LabelSpace::task2_end_to_end();
    const auto recs = random_member_records(rng, {"E3"}, space, 25).at("E3");
    std::vector<std::string> winners;
    for (std::size_t i = 0; i < recs.size(); ++i) winners.push_back(i % 2 ? "M2" : "M3");
    TempDir dir;
    write_predictions(dir / "p.tsv", recs, winners);
    const auto back = read_predictions(dir / "p.tsv");
    REQUIRE(back.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        CHECK(back[i].example_id == recs[i].example_id);
        CHECK(back[i].model_id == recs[i].model_id);
        CHECK(back[i].label == recs[i].label);
        CHECK(back[i].scores.space == space);
        for (std::size_t l = 0; l < space.size(); ++l)
            CHECK(back[i].scores.values[l] == doctest::Approx(recs[i].scores.values[l]).epsilon(1e-12));
    }
    CHECK(render_predictions(back, winners) == render_predictions(recs, winners));
    CHECK_THROWS_AS(parse_predictions("example_id\tmodel_id\tlabel\tscore:sexist\nx\tM\tsexist\tnope\n", "mem"),
                    FormatError);
}

TEST_CASE("routing sends each example to exactly one model") {
    BackendSpec backend;
    backend.preprocess.lowercase = backend.preprocess.tokenize = true;
    HyperParams hp;
    hp.batch_size = 8;
    hp.epochs = 2;
    const auto train = separable_dataset(3, 14);
    const auto en = fit(backend, train.filter([](const Example& e) { return e.language == Language::en; }, ""), hp,
                        LabelSpace::task1());
    auto hp_es = hp;
    hp_es.seed = 99;
    const auto es = fit(backend, train, hp_es, LabelSpace::task1());
    const TrainedModels models{{"M2-en", &en}, {"M2-es", &es}};

    Rng rng(15);
    const Dataset test(random_examples(rng, 30), DatasetRole::test, "mem");
    const auto preds = predict_with_model_spec(model_spec("M2"), models, test, {});
    REQUIRE(preds.size() == test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto& m = test[i].language == Language::en ? en : es;
        const auto expected = predict_scores(m, std::span<const Example>(&test[i], 1));
        CHECK(preds[i].example_id == test[i].id);
        CHECK(preds[i].model_id == "M2");
        CHECK(preds[i].scores.values == expected[0].values);
    }

    IdentityProvider provider;
    TranslationCache cache;
    const auto m4 = predict_with_model_spec(model_spec("M4"), models, test, {&provider, &cache, {}});
    for (std::size_t i = 0; i < test.size(); ++i)
        CHECK(m4[i].scores.values == predict_scores(en, std::span<const Example>(&test[i], 1))[0].values);
    CHECK(provider.calls() > 0);

    CHECK_THROWS_AS(predict_with_model_spec(model_spec("M4"), models, test, {}), ArgumentError);
    const TrainedModels en_only{{"M2-en", &en}};
    CHECK_THROWS_AS(predict_with_model_spec(model_spec("M2"), en_only, test, {}), RoutingError);
}
