#pragma once

// Hand-rolled random fixtures for property tests. Everything is driven by
// sexid::Rng so a failing case can be replayed from its seed.

#include <string>
#include <vector>

#include <fmt/format.h>

#include "sexid/backends.hpp"
#include "sexid/corpus.hpp"
#include "sexid/labels.hpp"
#include "sexid/rng.hpp"

namespace sexid::testing {

/// Labels "c0".."c{k-1}".
inline LabelSpace synthetic_space(std::size_t k) {
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < k; ++i) labels.push_back(fmt::format("c{}", i));
    return LabelSpace(LabelKind::end_to_end, labels);
}

inline std::vector<std::string> random_labels(Rng& rng, const LabelSpace& space, std::size_t n) {
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(space[rng.below(space.size())]);
    return out;
}

/// A probability vector. With ties=true values are drawn from a coarse grid
/// so exact ties are common.
inline std::vector<double> random_distribution(Rng& rng, std::size_t k, bool ties = false) {
    std::vector<double> v(k);
    double total = 0.0;
    for (auto& x : v) {
        x = ties ? static_cast<double>(rng.below(4) + 1) : rng.uniform() + 1e-3;
        total += x;
    }
    for (auto& x : v) x /= total;
    return v;
}

inline PredictionRecord make_record(std::string id, std::string model, const LabelSpace& space,
                                    std::vector<double> scores) {
    PredictionRecord r{std::move(id), std::move(model), ScoreVector{space, std::move(scores)}, ""};
    r.label = r.scores.argmax_label();
    return r;
}

/// Per member, one record per example id "x0".."x{n-1}".
inline std::map<std::string, std::vector<PredictionRecord>> random_member_records(
    Rng& rng, const std::vector<std::string>& members, const LabelSpace& space, std::size_t n, bool ties = false) {
    std::map<std::string, std::vector<PredictionRecord>> out;
    for (const auto& m : members)
        for (std::size_t i = 0; i < n; ++i)
            out[m].push_back(make_record(fmt::format("x{}", i), m, space, random_distribution(rng, space.size(), ties)));
    return out;
}

/// Labeled bilingual examples. Language and labels are random; text is a
/// short token soup.
inline std::vector<Example> random_examples(Rng& rng, std::size_t n, std::string_view prefix = "ex") {
    static const char* words[] = {"alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta"};
    std::vector<Example> out;
    for (std::size_t i = 0; i < n; ++i) {
        Example ex;
        ex.id = fmt::format("{}-{}", prefix, i);
        ex.language = rng.below(2) ? Language::en : Language::es;
        ex.source = rng.below(4) == 0 ? Source::gab : Source::twitter;
        ex.text = fmt::format("{} {} {}", words[rng.below(8)], words[rng.below(8)], i);
        if (rng.below(2)) {
            ex.task1 = std::string(kSexist);
            ex.task2 = std::string(kCategories[rng.below(5)]);
        } else {
            ex.task1 = std::string(kNonSexist);
            ex.task2 = std::string(kNonSexist);
        }
        out.push_back(std::move(ex));
    }
    return out;
}

/// A corpus separable by token presence: every sexist text contains "bad",
/// every non-sexist text contains "good"; the category adds its own token.
inline Dataset separable_dataset(std::size_t per_class, std::uint64_t seed = 1, std::string_view prefix = "s") {
    Rng rng(seed);
    static const char* filler[] = {"the", "a", "today", "people", "said", "really"};
    std::vector<Example> out;
    std::size_t n = 0;
    for (std::size_t c = 0; c <= 5; ++c)
        for (std::size_t i = 0; i < (c == 0 ? 5 * per_class : per_class); ++i) {
            Example ex;
            ex.id = fmt::format("{}-{}", prefix, n++);
            ex.language = n % 2 ? Language::en : Language::es;
            const auto f1 = filler[rng.below(6)], f2 = filler[rng.below(6)];
            if (c == 0) {
                ex.text = fmt::format("{} good {} fine", f1, f2);
                ex.task1 = ex.task2 = std::string(kNonSexist);
            } else {
                ex.text = fmt::format("{} bad {} cat{}", f1, f2, c);
                ex.task1 = std::string(kSexist);
                ex.task2 = std::string(kCategories[c - 1]);
            }
            out.push_back(std::move(ex));
        }
    rng.shuffle(out);
    return Dataset(std::move(out), DatasetRole::train, "separable");
}

}  // namespace sexid::testing
