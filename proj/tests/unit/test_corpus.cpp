#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include <fmt/format.h>

#include "generators.hpp"
#include "sexid/corpus.hpp"
#include "sexid/errors.hpp"
#include "sexid/text_util.hpp"
#include "temp_dir.hpp"

using namespace sexid;
using namespace sexid::testing;

namespace {

const char* kHeader = "id\tsource\tlanguage\ttext\ttask1\ttask2\n";

std::string four_rows() {
    return std::string(kHeader) +
           "a\ttwitter\ten\tHello there\tnon-sexist\tnon-sexist\n"
           "b\ttwitter\tes\tHola\tsexist\tobjectification\n"
           "c\tgab\ten\tSome text\tsexist\tsexual-violence\n"
           "d\ttwitter\tes\tOtra cosa\tnon-sexist\tnon-sexist\n";
}

Dataset make(std::vector<Example> xs) { return Dataset(std::move(xs), DatasetRole::train, "mem"); }

}  // namespace

TEST_CASE("load a small dataset") {
    testing::TempDir dir;
    write_file(dir / "d.tsv", four_rows());
    const auto d = load_dataset(dir / "d.tsv", DatasetRole::train);
    REQUIRE(d.size() == 4);
    CHECK(d[0].id == "a");
    CHECK(d[2].source == Source::gab);
    auto by_lang = split_by_language(d);
    CHECK(by_lang.at(Language::en).size() == 2);
    CHECK(by_lang.at(Language::es).size() == 2);
    CHECK(d.labeled());
    CHECK(d.find("c")->text == "Some text");
    CHECK(d.find("zz") == nullptr);
}

TEST_CASE("loader errors name the offending row or value") {
    auto expect = [](const std::string& body, ErrorCategory cat, std::string_view needle) {
        try {
            parse_dataset(std::string(kHeader) + body, DatasetRole::train, "mem");
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.category() == cat);
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    expect("x1\ttwitter\tfr\thi\tsexist\tobjectification\n", ErrorCategory::validation, "x1");
    expect("x1\ttwitter\ten\thi\tsexist\tobjectification\nx1\ttwitter\ten\tho\tsexist\tobjectification\n",
           ErrorCategory::format, "x1");
    expect("\ttwitter\ten\thi\tsexist\tobjectification\n", ErrorCategory::format, "missing id");
    expect("x2\ttwitter\ten\t   \tsexist\tobjectification\n", ErrorCategory::validation, "empty text");
    expect("x3\ttwitter\ten\thi\tmaybe\tobjectification\n", ErrorCategory::validation, "maybe");
    expect("x4\ttwitter\ten\thi\tnon-sexist\tobjectification\n", ErrorCategory::validation, "x4");
    CHECK_THROWS_AS(load_dataset("/nonexistent/file.tsv", DatasetRole::train), IoError);
}

TEST_CASE("unlabeled test files are allowed") {
    const auto d = parse_dataset("id\tsource\tlanguage\ttext\nq\ttwitter\ten\thi\n", DatasetRole::test, "mem");
    REQUIRE(d.size() == 1);
    CHECK_FALSE(d[0].task1.has_value());
    CHECK_FALSE(d.labeled());
}

TEST_CASE("a 6,977-row training file loads in full") {
    testing::TempDir dir;
    Rng rng(6977);
    const auto d = make(random_examples(rng, 6977, "tw"));
    write_dataset(d, dir / "train.tsv");
    const auto loaded = load_dataset(dir / "train.tsv", DatasetRole::train);
    CHECK(loaded.size() == 6977);
    CHECK(loaded.role() == DatasetRole::train);
}

TEST_CASE("write then load reproduces the file byte for byte") {
    testing::TempDir dir;
    write_file(dir / "a.tsv", four_rows());
    const auto d = load_dataset(dir / "a.tsv", DatasetRole::train);
    write_dataset(d, dir / "b.tsv");
    CHECK(read_file(dir / "b.tsv") == four_rows());
    Rng rng(4);
    const auto r = make(random_examples(rng, 300));
    CHECK(parse_dataset(render_dataset(r), DatasetRole::train, "again").examples() == r.examples());
}

TEST_CASE("split by language is an exact partition") {
    Rng rng(10);
    for (int trial = 0; trial < 50; ++trial) {
        const auto d = make(random_examples(rng, rng.below(40)));
        const auto parts = split_by_language(d);
        std::map<Language, std::vector<std::string>> expected;
        for (const auto& ex : d) expected[ex.language].push_back(ex.id);
        for (auto lang : kLanguages) {
            std::vector<std::string> got;
            for (const auto& ex : parts.at(lang)) {
                CHECK(ex.language == lang);
                got.push_back(ex.id);
            }
            CHECK(got == expected[lang]);
        }
        CHECK(parts.at(Language::en).size() + parts.at(Language::es).size() == d.size());
    }
    std::vector<Example> seven_three;
    for (int i = 0; i < 10; ++i)
        seven_three.push_back({fmt::format("e{}", i), Source::twitter, i < 7 ? Language::en : Language::es, "t", {}, {}});
    const auto parts = split_by_language(make(seven_three));
    CHECK(parts.at(Language::en).size() == 7);
    CHECK(parts.at(Language::es).size() == 3);
    std::vector<Example> english{{"only", Source::twitter, Language::en, "t", {}, {}}};
    CHECK(split_by_language(make(english)).at(Language::es).empty());
}

TEST_CASE("task-2 gating keeps exactly the sexist examples") {
    Rng rng(100);
    const auto d = make(random_examples(rng, 100));
    const auto gated = gate_for_task2_training(d);
    std::vector<std::string> expected, got;
    for (const auto& ex : d)
        if (*ex.task1 == kSexist) expected.push_back(ex.id);
    for (const auto& ex : gated) {
        got.push_back(ex.id);
        CHECK(*ex.task2 != kNonSexist);
    }
    CHECK(got == expected);
    // Gated plus complement is the whole dataset.
    std::size_t complement = 0;
    for (const auto& ex : d) complement += *ex.task1 == kNonSexist;
    CHECK(gated.size() + complement == d.size());

    std::vector<Example> none{{"n1", Source::twitter, Language::en, "t", std::string(kNonSexist), std::string(kNonSexist)}};
    CHECK(gate_for_task2_training(make(none)).empty());
    std::vector<Example> broken{{"b1", Source::twitter, Language::en, "t", std::string(kSexist), std::nullopt}};
    CHECK_THROWS_AS(gate_for_task2_training(make(broken)), ConsistencyError);
    std::vector<Example> six;
    for (int i = 0; i < 6; ++i)
        six.push_back({fmt::format("s{}", i), Source::twitter, Language::en, "t", std::string(i < 4 ? kSexist : kNonSexist),
                       std::string(i < 4 ? kCategories[0] : kNonSexist)});
    CHECK(gate_for_task2_training(make(six)).size() == 4);
}

TEST_CASE("holdout split proportions") {
    Rng rng(7);
    const auto d = make(random_examples(rng, 100));
    const auto plan = make_split(d, {SplitKind::holdout, 0.8, 10}, 7);
    std::map<std::string, std::pair<int, int>> per_class;  // label -> (train, total)
    int train = 0;
    for (const auto& ex : d) {
        const bool in_train = plan.assignments.at(ex.id) == SplitPlan::kTrain;
        train += in_train;
        auto& c = per_class[*ex.task1];
        c.first += in_train;
        ++c.second;
    }
    CHECK(train == 80);
    for (const auto& [label, c] : per_class) CHECK(std::abs(c.first - 0.8 * c.second) <= 1.0);
    const auto part = materialize(d, plan, 0);
    CHECK(part.train.size() == 80);
    CHECK(part.held_out.size() == 20);
}

TEST_CASE("kfold split invariants hold on random datasets") {
    Rng rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        const auto n = 2 + rng.below(150);
        const auto d = make(random_examples(rng, n));
        const int k = static_cast<int>(2 + rng.below(std::min<std::uint64_t>(n - 1, 12)));
        const auto seed = rng.next();
        const auto plan = make_split(d, {SplitKind::kfold, 0.8, k}, seed);
        REQUIRE(plan.assignments.size() == n);
        std::vector<int> sizes(static_cast<std::size_t>(k));
        for (const auto& [id, fold] : plan.assignments) {
            REQUIRE(fold >= 0);
            REQUIRE(fold < k);
            ++sizes[static_cast<std::size_t>(fold)];
        }
        CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
        CHECK(make_split(d, {SplitKind::kfold, 0.8, k}, seed) == plan);
        // Every example is held out exactly once across partitions.
        std::multiset<std::string> held;
        for (int p = 0; p < k; ++p)
            for (const auto& ex : materialize(d, plan, p).held_out) held.insert(ex.id);
        CHECK(held.size() == n);
        CHECK(std::set<std::string>(held.begin(), held.end()).size() == n);
    }
}

TEST_CASE("split edge cases") {
    Rng rng(1);
    const auto ten = make(random_examples(rng, 10));
    const auto plan = make_split(ten, {SplitKind::kfold, 0.8, 10}, 3);
    for (int p = 0; p < 10; ++p) CHECK(materialize(ten, plan, p).held_out.size() == 1);
    CHECK_THROWS_AS(make_split(ten, {SplitKind::kfold, 0.8, 11}, 3), ArgumentError);
    CHECK_THROWS_AS(make_split(Dataset{}, {SplitKind::kfold, 0.8, 2}, 3), ArgumentError);
    CHECK_THROWS_AS(make_split(ten, {SplitKind::holdout, 1.0, 2}, 3), ArgumentError);
    CHECK_THROWS_AS(materialize(ten, plan, 10), ArgumentError);
}

TEST_CASE("class distribution counts") {
    std::vector<Example> four;
    for (int i = 0; i < 4; ++i)
        four.push_back({fmt::format("d{}", i), Source::twitter, i % 2 ? Language::en : Language::es, "t",
                        std::string(i < 2 ? kSexist : kNonSexist), std::string(i < 2 ? kCategories[1] : kNonSexist)});
    const auto t = class_distribution(make(four));
    std::map<std::string, std::size_t> task1;
    for (const auto& row : t.rows)
        if (row.task == "task1") task1[row.label] = row.total;
    CHECK(task1["sexist"] == 2);
    CHECK(task1["non-sexist"] == 2);
    CHECK(t.examples == 4);

    const auto empty = render_distribution(class_distribution(Dataset{}));
    CHECK(empty.find("Label") != std::string::npos);

    // 70/30 skew by construction.
    std::vector<Example> skew;
    for (int i = 0; i < 100; ++i)
        skew.push_back({fmt::format("k{}", i), Source::twitter, Language::en, "t",
                        std::string(i < 70 ? kNonSexist : kSexist), std::string(i < 70 ? kNonSexist : kCategories[2])});
    const auto text = render_distribution(class_distribution(make(skew)));
    CHECK(text.find("70.0%") != std::string::npos);
    CHECK(text.find("30.0%") != std::string::npos);
}
