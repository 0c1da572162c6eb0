#include <doctest.h>

#include <cmath>
#include <numeric>

#include "generators.hpp"
#include "sexid/backends.hpp"
#include "sexid/errors.hpp"
#include "sexid/text_util.hpp"
#include "temp_dir.hpp"

using namespace sexid;
using namespace sexid::testing;

namespace {

BackendSpec baseline() {
    BackendSpec b;
    b.kind = BackendKind::baseline;
    b.preprocess.lowercase = b.preprocess.tokenize = true;
    return b;
}

BackendSpec tiny_transformer() {
    BackendSpec b;
    b.kind = BackendKind::transformer;
    b.checkpoint = "random:layers=1,hidden=16,heads=2,intermediate=32";
    b.max_sequence_length = 16;
    b.dropout = 0.0;
    return b;
}

HyperParams hp(int epochs, std::uint64_t seed = 3) {
    HyperParams h;
    h.learning_rate = 5e-5;
    h.batch_size = 8;
    h.epochs = epochs;
    h.seed = seed;
    return h;
}

double accuracy(const TrainedModel& m, const Dataset& d) {
    const auto preds = predict_labels(m, d.examples(), "t");
    std::size_t ok = 0;
    for (std::size_t i = 0; i < d.size(); ++i) ok += preds[i].label == *d[i].task1;
    return static_cast<double>(ok) / static_cast<double>(d.size());
}

}  // namespace

TEST_CASE("softmax is stable and normalized") {
    const std::vector<float> big{1000.0f, 1000.0f, -1000.0f};
    const auto p = softmax(big);
    CHECK(p[0] == doctest::Approx(0.5));
    CHECK(p[2] == doctest::Approx(0.0));
    Rng rng(4);
    for (int t = 0; t < 200; ++t) {
        std::vector<float> logits(1 + rng.below(7));
        for (auto& x : logits) x = static_cast<float>(rng.uniform() * 60.0 - 30.0);
        const auto q = softmax(logits);
        CHECK(std::accumulate(q.begin(), q.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
        for (double v : q) CHECK(v >= 0.0);
    }
}

TEST_CASE("argmax ties go to the first declared label") {
    ScoreVector s{LabelSpace::task2_categories(), {0.1, 0.3, 0.3, 0.2, 0.1}};
    CHECK(s.argmax() == 1);
    CHECK(s.argmax_label() == LabelSpace::task2_categories()[1]);
    ScoreVector flat{LabelSpace::task1(), {0.5, 0.5}};
    CHECK(flat.argmax() == 0);
}

TEST_CASE("hyperparameter description") {
    HyperParams h{HeadSource::pooler, 3e-5, 64, 5, 0};
    CHECK(h.describe() == "OB:pooler / Lr:0.00003 / Bs:64 / Ne:5");
    CHECK(parse_head_source("hidden") == HeadSource::hidden);
    CHECK_FALSE(parse_head_source("cls").has_value());
}

TEST_CASE("baseline fits a separable corpus") {
    const auto train = separable_dataset(4, 11);
    REQUIRE(train.size() == 40);
    const auto m = fit(baseline(), train, hp(10), LabelSpace::task1());
    CHECK(accuracy(m, train) == 1.0);
    for (const auto& s : predict_scores(m, train.examples())) {
        CHECK(s.values.size() == 2);
        CHECK(std::accumulate(s.values.begin(), s.values.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("training is deterministic and observers see every epoch") {
    const auto train = separable_dataset(3, 2);
    std::vector<int> seen;
    const auto a = fit(baseline(), train, hp(4), LabelSpace::task1(),
                       [&](int epoch, const TrainedModel& snap) {
                           seen.push_back(epoch);
                           CHECK(snap.hyperparams.epochs == epoch);
                       });
    CHECK(seen == std::vector<int>{1, 2, 3, 4});
    const auto b = fit(baseline(), train, hp(4), LabelSpace::task1());
    const auto sa = predict_scores(a, train.examples()), sb = predict_scores(b, train.examples());
    for (std::size_t i = 0; i < sa.size(); ++i) CHECK(sa[i].values == sb[i].values);
    CHECK(a.fingerprint == b.fingerprint);
}

TEST_CASE("fingerprints separate configurations") {
    const auto train = separable_dataset(2, 5);
    const auto space = LabelSpace::task1();
    const auto base = training_fingerprint(baseline(), train, hp(2), space);
    auto pooler = hp(2);
    pooler.head_source = HeadSource::pooler;
    CHECK(training_fingerprint(baseline(), train, pooler, space) != base);
    CHECK(training_fingerprint(baseline(), train, hp(3), space) != base);
    CHECK(training_fingerprint(baseline(), train, hp(2, 4), space) != base);
    CHECK(training_fingerprint(baseline(), train, hp(2), LabelSpace::task2_categories()) != base);
    CHECK(training_fingerprint(tiny_transformer(), train, hp(2), space) != base);
    CHECK(training_fingerprint(baseline(), separable_dataset(2, 6), hp(2), space) != base);
    CHECK(training_fingerprint(baseline(), train, hp(2), space) == base);
}

TEST_CASE("fit rejects bad inputs") {
    CHECK_THROWS_AS(fit(baseline(), Dataset{}, hp(1), LabelSpace::task1()), ArgumentError);
    // Task-2 categories space does not contain non-sexist.
    const auto train = separable_dataset(1, 1);
    CHECK_THROWS_AS(fit(baseline(), train, hp(1), LabelSpace::task2_categories()), ValidationError);
    auto bad = baseline();
    bad.hash_dim = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    auto no_ckpt = tiny_transformer();
    no_ckpt.checkpoint.clear();
    CHECK_THROWS_AS(no_ckpt.validate(), ConfigError);
}

TEST_CASE("models round-trip through storage") {
    const auto train = separable_dataset(2, 8);
    for (const auto& spec : {baseline(), tiny_transformer()}) {
        CAPTURE(to_string(spec.kind));
        TempDir dir;
        auto m = fit(spec, train, hp(2), LabelSpace::task1());
        save_model(m, dir / "model");
        CHECK(m.storage == dir / "model");
        const auto loaded = load_model(dir / "model");
        CHECK(loaded.integrity_ok);
        CHECK(loaded.fingerprint == m.fingerprint);
        CHECK(loaded.hyperparams == m.hyperparams);
        const auto a = predict_scores(m, train.examples()), b = predict_scores(loaded, train.examples());
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].values == b[i].values);
    }
}

TEST_CASE("load failures") {
    TempDir dir;
    CHECK_THROWS_AS(load_model(dir / "absent"), LoadError);

    auto m = fit(baseline(), separable_dataset(2, 9), hp(1), LabelSpace::task1());
    save_model(m, dir / "m");
    auto weights = read_file(dir / "m" / "baseline.weights");
    const auto pos = weights.rfind('0');
    REQUIRE(pos != std::string::npos);
    weights[pos] = '1';
    write_file(dir / "m" / "baseline.weights", weights);
    CHECK_FALSE(load_model(dir / "m").integrity_ok);

    write_file(dir / "m" / "baseline.weights", "garbage\n");
    CHECK_THROWS_AS(load_model(dir / "m"), LoadError);

    auto manifest = read_file(dir / "m" / "manifest.txt");
    const auto at = manifest.find("format_version = ");
    REQUIRE(at != std::string::npos);
    manifest.replace(at, manifest.find('\n', at) - at, "format_version = 99");
    write_file(dir / "m" / "manifest.txt", manifest);
    CHECK_THROWS_AS(load_model(dir / "m"), LoadError);
}

TEST_CASE("tiny transformer learns a separable corpus") {
    const auto train = separable_dataset(4, 12);
    auto h = hp(12);
    h.learning_rate = 1e-3;
    const auto m = fit(tiny_transformer(), train, h, LabelSpace::task1());
    CHECK(accuracy(m, train) >= 0.9);
}
