#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>

#include "generators.hpp"
#include "oracles.hpp"
#include "published.hpp"
#include "sexid/errors.hpp"
#include "sexid/metrics.hpp"
#include "sexid/text_util.hpp"

using namespace sexid;
using namespace sexid::testing;

namespace {

std::vector<std::string> words(std::initializer_list<const char*> xs) { return {xs.begin(), xs.end()}; }

}  // namespace

TEST_CASE("confusion counts") {
    const LabelSpace ab(LabelKind::end_to_end, {"a", "b"});
    auto cm = confusion(words({"a", "a", "b"}), words({"a", "b", "b"}), ab);
    CHECK(cm.counts[0][0] == 1);
    CHECK(cm.counts[0][1] == 1);
    CHECK(cm.counts[1][1] == 1);
    CHECK(cm.counts[1][0] == 0);
    CHECK(cm.total() == 3);
    CHECK_THROWS_AS(confusion(words({"a"}), words({"a", "b"}), ab), ValidationError);
    CHECK_THROWS_AS(confusion(words({"a"}), words({"z"}), ab), ValidationError);

    auto diag = confusion(words({"a", "b", "b"}), words({"a", "b", "b"}), ab);
    CHECK(diag.trace() == diag.total());
}

TEST_CASE("confusion equals a brute-force double loop on random pairs") {
    Rng rng(200);
    const auto space = synthetic_space(4);
    const auto gold = random_labels(rng, space, 200), pred = random_labels(rng, space, 200);
    const auto cm = confusion(gold, pred, space);
    for (std::size_t g = 0; g < 4; ++g)
        for (std::size_t p = 0; p < 4; ++p) {
            std::size_t n = 0;
            for (std::size_t i = 0; i < 200; ++i) n += gold[i] == space[g] && pred[i] == space[p];
            CHECK(cm.counts[g][p] == n);
        }
}

TEST_CASE("binary hand-computed example") {
    // TP=3, FP=1, FN=2, TN=4 with sexist as the positive class.
    std::vector<std::string> gold, pred;
    auto add = [&](const char* g, const char* p, int n) {
        for (int i = 0; i < n; ++i) {
            gold.emplace_back(g);
            pred.emplace_back(p);
        }
    };
    add("sexist", "sexist", 3);
    add("non-sexist", "sexist", 1);
    add("sexist", "non-sexist", 2);
    add("non-sexist", "non-sexist", 4);
    const auto r = evaluate_labels(gold, pred, LabelSpace::task1(), Task::task1);
    CHECK(r.accuracy == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(r.precision == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(r.recall == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(*r.f1_binary == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(r.f1 == *r.f1_binary);
    CHECK(*r.f1_binary == r.of("sexist").f1);
}

TEST_CASE("perfect predictions and the zero-denominator convention") {
    const auto space = synthetic_space(3);
    auto perfect = evaluate_labels(words({"c0", "c1"}), words({"c0", "c1"}), space, Task::task2);
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.of("c0").f1 == 1.0);
    // c2 is never gold and never predicted: all zeros, still in the macro mean.
    CHECK(perfect.of("c2").precision == 0.0);
    CHECK(perfect.of("c2").recall == 0.0);
    CHECK(perfect.of("c2").f1 == 0.0);
    CHECK(*perfect.f1_macro == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(evaluate_labels({}, {}, space, Task::task2), ArgumentError);
}

TEST_CASE("oracle equivalence over 1000 random fixtures") {
    Rng rng(1000);
    const auto start = std::chrono::steady_clock::now();
    for (int trial = 0; trial < 1000; ++trial) {
        const auto k = 2 + rng.below(5);
        const auto n = 1 + rng.below(200);
        const auto space = k == 2 ? LabelSpace::task1() : synthetic_space(k);
        const auto gold = random_labels(rng, space, n), pred = random_labels(rng, space, n);
        const auto task = k == 2 ? Task::task1 : Task::task2;
        const auto r = evaluate_labels(gold, pred, space, task);
        const auto o = naive_metrics(gold, pred, space);
        REQUIRE(std::abs(r.accuracy - o.accuracy) <= 1e-12);
        for (std::size_t c = 0; c < k; ++c) {
            REQUIRE(std::abs(r.per_class[c].precision - o.p[c]) <= 1e-12);
            REQUIRE(std::abs(r.per_class[c].recall - o.r[c]) <= 1e-12);
            REQUIRE(std::abs(r.per_class[c].f1 - o.f[c]) <= 1e-12);
        }
        REQUIRE(std::abs(*r.f1_macro - o.macro_f1) <= 1e-12);
        if (task == Task::task1) REQUIRE(std::abs(*r.f1_binary - o.f[1]) <= 1e-12);
        // Accuracy also equals trace / total of the matrix.
        const auto cm = confusion(gold, pred, space);
        REQUIRE(std::abs(r.accuracy - static_cast<double>(cm.trace()) / static_cast<double>(cm.total())) <= 1e-12);
        for (const auto& s : r.per_class) {
            REQUIRE(s.precision >= 0.0);
            REQUIRE(s.precision <= 1.0);
            REQUIRE(s.f1 <= 1.0);
        }
    }
    CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(10));
}

TEST_CASE("F1-macro does not depend on label order") {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const auto k = 2 + rng.below(5);
        auto labels = synthetic_space(k).labels();
        const LabelSpace a(LabelKind::end_to_end, labels);
        rng.shuffle(labels);
        const LabelSpace b(LabelKind::end_to_end, labels);
        const auto gold = random_labels(rng, a, 50), pred = random_labels(rng, a, 50);
        CHECK(*evaluate_labels(gold, pred, a, Task::task2).f1_macro ==
              doctest::Approx(*evaluate_labels(gold, pred, b, Task::task2).f1_macro).epsilon(1e-12));
    }
}

TEST_CASE("delta cells") {
    CHECK(format_delta(0.761, 0.785) == "-3.06%");
    CHECK(format_delta(0.645, 0.689) == "-6.39%");
    CHECK(format_delta(0.785, 0.785) == "0.00%");
    CHECK(format_delta(0.8, 0.0) == "n/a");
    CHECK(format_delta(0.79, 0.785) == "0.64%");
    // A tiny negative difference must not print as -0.00%.
    CHECK(format_delta(0.78499999, 0.785) == "0.00%");
}

TEST_CASE("published deltas are reproduced from the published metrics") {
    const auto problems = published_delta_mismatches();
    for (const auto& p : problems) MESSAGE(p);
    CHECK(problems.empty());
    const auto t2 = render_delta_table(published_reports(Task::task2), "E6", Task::task2, {"M1", "E4"});
    CHECK(t2.find("-11.32%") != std::string::npos);
    CHECK(t2.find("-6.39%") != std::string::npos);
    CHECK(t2.find("M2") == std::string::npos);
}

TEST_CASE("shared oracle sweep agrees") {
    const auto s = metric_oracle_sweep(99, 200);
    CHECK(s.fixtures == 200);
    CHECK(s.mismatches == 0);
}

TEST_CASE("comparison table order and column maxima") {
    ReportSet reports;
    reports["E6"] = MetricsReport::summary(Task::task2, 0.9, 0.8, 0.7, 0.75);
    reports["M1"] = MetricsReport::summary(Task::task2, 0.5, 0.9, 0.6, 0.6);
    reports["M3"] = MetricsReport::summary(Task::task2, 0.5, 0.5, 0.5, 0.5);
    const auto t = render_comparison_table(reports, Task::task2);
    const auto lines = split(t, '\n');
    REQUIRE(lines.size() >= 5);
    CHECK(lines[0].find("F1m") != std::string::npos);
    CHECK(lines[2].rfind("M1", 0) == 0);
    CHECK(lines[3].rfind("M3", 0) == 0);
    CHECK(lines[4].rfind("E6", 0) == 0);
    CHECK(lines[4].find("0.900*") != std::string::npos);
    CHECK(lines[2].find("0.900*") != std::string::npos);  // precision column
    CHECK(lines[4].find("0.750*") != std::string::npos);
    CHECK(lines[3].find('*') == std::string::npos);

    ReportSet one{{"M2", MetricsReport::summary(Task::task1, 0.7, 0.7, 0.7, 0.7)}};
    CHECK(split(render_comparison_table(one, Task::task1), '\n').size() == 4);  // header, rule, row, ""
}

TEST_CASE("a dominating model carries every mark") {
    ReportSet reports;
    Rng rng(3);
    for (const char* id : {"M1", "M2", "M3", "M4", "M5", "M6", "M7", "E1", "E2", "E3", "E4", "E5"})
        reports[id] = MetricsReport::summary(Task::task2, rng.uniform() * 0.9, rng.uniform() * 0.9, rng.uniform() * 0.9,
                                             rng.uniform() * 0.9);
    reports["E6"] = MetricsReport::summary(Task::task2, 0.95, 0.95, 0.95, 0.95);
    const auto lines = split(render_comparison_table(reports, Task::task2), '\n');
    REQUIRE(lines.size() == 16);
    CHECK(lines[14].rfind("E6", 0) == 0);
    CHECK(std::count(lines[14].begin(), lines[14].end(), '*') == 4);
    for (std::size_t i = 2; i < 14; ++i) CHECK(lines[i].find('*') == std::string::npos);
}

TEST_CASE("delta table signs follow metric ordering") {
    ReportSet reports;
    reports["E6"] = MetricsReport::summary(Task::task1, 0.8, 0.8, 0.8, 0.8);
    reports["M1"] = MetricsReport::summary(Task::task1, 0.7, 0.7, 0.7, 0.9);
    const auto t = render_delta_table(reports, "E6", Task::task1);
    CHECK(t.find("Diff E6") != std::string::npos);
    CHECK(t.find("-12.50%") != std::string::npos);
    CHECK(t.find("12.50%") != std::string::npos);
    CHECK_THROWS_AS(render_delta_table(reports, "E3", Task::task1), ArgumentError);
}

TEST_CASE("model ordering puts the catalog first") {
    std::vector<std::string> ids{"zeta", "E1", "M7", "M1", "E6", "alpha"};
    std::sort(ids.begin(), ids.end(), [](const auto& a, const auto& b) { return model_order_less(a, b); });
    CHECK(ids == std::vector<std::string>{"M1", "M7", "E1", "E6", "alpha", "zeta"});
}
