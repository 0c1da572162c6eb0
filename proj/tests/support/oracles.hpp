#pragma once

// Independent reference implementations and randomized sweeps shared by the
// unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "generators.hpp"
#include "sexid/errors.hpp"
#include "sexid/fusion.hpp"
#include "sexid/metrics.hpp"

namespace sexid::testing {

// Per-example formulation: counts come straight from the label lists, never
// from a confusion matrix.
struct NaiveMetrics {
    double accuracy = 0;
    std::vector<double> p, r, f;
    double macro_f1 = 0;
};

inline NaiveMetrics naive_metrics(const std::vector<std::string>& gold, const std::vector<std::string>& pred,
                                  const LabelSpace& space) {
    NaiveMetrics m;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) correct += gold[i] == pred[i];
    m.accuracy = static_cast<double>(correct) / static_cast<double>(gold.size());
    for (const auto& label : space.labels()) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < gold.size(); ++i) {
            if (pred[i] == label && gold[i] == label) ++tp;
            if (pred[i] == label && gold[i] != label) ++fp;
            if (pred[i] != label && gold[i] == label) ++fn;
        }
        double p = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
        double r = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
        double f = p + r == 0 ? 0.0 : 2 * p * r / (p + r);
        m.p.push_back(p);
        m.r.push_back(r);
        m.f.push_back(f);
    }
    double s = 0;
    for (auto f : m.f) s += f;
    m.macro_f1 = s / static_cast<double>(m.f.size());
    return m;
}

struct MetricSweep {
    std::size_t fixtures = 0;
    std::size_t mismatches = 0;  // fixtures with any value off by more than 1e-12
    double max_error = 0.0;
};

/// Random (gold, pred) pairs with n <= 200 and 2..6 classes compared against
/// naive_metrics.
inline MetricSweep metric_oracle_sweep(std::uint64_t seed, std::size_t fixtures) {
    Rng rng(seed);
    MetricSweep s;
    for (std::size_t trial = 0; trial < fixtures; ++trial) {
        const auto k = 2 + rng.below(5);
        const auto n = 1 + rng.below(200);
        const auto space = k == 2 ? LabelSpace::task1() : synthetic_space(k);
        const auto gold = random_labels(rng, space, n), pred = random_labels(rng, space, n);
        const auto task = k == 2 ? Task::task1 : Task::task2;
        const auto r = evaluate_labels(gold, pred, space, task);
        const auto o = naive_metrics(gold, pred, space);
        double err = std::abs(r.accuracy - o.accuracy);
        for (std::size_t c = 0; c < k; ++c) {
            err = std::max(err, std::abs(r.per_class[c].precision - o.p[c]));
            err = std::max(err, std::abs(r.per_class[c].recall - o.r[c]));
            err = std::max(err, std::abs(r.per_class[c].f1 - o.f[c]));
        }
        err = std::max(err, r.f1_macro ? std::abs(*r.f1_macro - o.macro_f1) : 1.0);
        if (task == Task::task1) err = std::max(err, r.f1_binary ? std::abs(*r.f1_binary - o.f[1]) : 1.0);
        ++s.fixtures;
        s.mismatches += err > 1e-12;
        s.max_error = std::max(s.max_error, err);
    }
    return s;
}

using MemberRecordMap = std::map<std::string, std::vector<PredictionRecord>>;

inline std::vector<const PredictionRecord*> member_row(const MemberRecordMap& recs,
                                                       const std::vector<std::string>& members, std::size_t i) {
    std::vector<const PredictionRecord*> row;
    for (const auto& m : members) row.push_back(&recs.at(m)[i]);
    return row;
}

/// Brute-force mode of the members' labels; -1 when the top count is shared.
inline int vote_oracle(const std::vector<const PredictionRecord*>& row, const LabelSpace& space) {
    int best = -1, best_count = 0;
    bool shared = false;
    for (std::size_t l = 0; l < space.size(); ++l) {
        int c = 0;
        for (const auto* r : row) c += r->label == space[l];
        if (c > best_count) {
            best = static_cast<int>(l);
            best_count = c;
            shared = false;
        } else if (c == best_count && c > 0) {
            shared = true;
        }
    }
    return shared ? -1 : best;
}

struct EnsembleSweep {
    std::size_t fixtures = 0;
    std::size_t unanimity_failures = 0;
    std::size_t permutation_failures = 0;
    std::size_t coverage_failures = 0;
    std::size_t standardized_affine_failures = 0;
    std::size_t raw_affine_changes = 0;  // expected to be positive

    bool ok() const noexcept {
        return unanimity_failures + permutation_failures + coverage_failures + standardized_affine_failures == 0 &&
               raw_affine_changes > 0;
    }
};

/// Randomized checks of every fusion rule: unanimity, member-permutation
/// determinism when no tie-break fires, exact id coverage (including a
/// coverage error for a member with a missing record), and affine rescaling
/// of one member, which must never change standardized selection.
inline EnsembleSweep ensemble_property_sweep(std::uint64_t seed, std::size_t fixtures) {
    Rng rng(seed);
    EnsembleSweep s;
    for (std::size_t fixture = 0; fixture < fixtures; ++fixture) {
        ++s.fixtures;
        const auto k = 2 + rng.below(5);
        const auto n_members = 1 + rng.below(7);
        const auto n = 2 + rng.below(20);
        const auto space = synthetic_space(k);
        std::vector<std::string> members;
        for (std::size_t i = 0; i < n_members; ++i) members.push_back(fmt::format("m{}", i));
        auto recs = random_member_records(rng, members, space, n, rng.below(4) == 0);

        // One example where every member agrees.
        const auto unanimous = space[rng.below(k)];
        for (const auto& m : members) {
            auto& r = recs[m][0];
            r.scores.values.assign(k, 0.1 / static_cast<double>(k));
            r.scores.values[space.require_index(unanimous)] = 0.9;
            r.label = unanimous;
        }
        const auto stats = compute_standardization(recs);

        for (auto rule : {FusionRule::majority, FusionRule::max_raw, FusionRule::max_standardized}) {
            const auto out = run_ensemble(EnsembleSpec{"E", members, rule}, recs, stats);
            s.unanimity_failures += out.records[0].label != unanimous;

            std::set<std::string> in_ids, out_ids;
            for (const auto& r : recs.at(members[0])) in_ids.insert(r.example_id);
            for (const auto& r : out.records) out_ids.insert(r.example_id);
            s.coverage_failures += in_ids != out_ids || out.records.size() != n;

            auto shuffled = members;
            rng.shuffle(shuffled);
            const auto permuted = run_ensemble(EnsembleSpec{"E", shuffled, rule}, recs, stats);
            for (std::size_t i = 0; i < n; ++i) {
                const auto row = member_row(recs, members, i);
                bool tie_free = true;
                if (rule == FusionRule::majority) {
                    tie_free = vote_oracle(row, space) >= 0;
                } else {
                    std::vector<double> values;
                    for (const auto* r : row) {
                        const auto l = space.require_index(r->label);
                        values.push_back(rule == FusionRule::max_raw ? r->scores.values[l]
                                                                     : stats.z(r->model_id, l, r->scores.values[l]));
                    }
                    const auto top = *std::max_element(values.begin(), values.end());
                    const double slack = rule == FusionRule::max_raw ? 0.0 : 1e-9 * std::max(1.0, std::abs(top));
                    tie_free = std::count_if(values.begin(), values.end(), [&](double v) { return v >= top - slack; }) == 1;
                }
                if (tie_free) s.permutation_failures += permuted.records[i].label != out.records[i].label;
            }
        }

        const auto target = members[rng.below(n_members)];
        const double a = 0.25 + 4.0 * rng.uniform(), b = rng.uniform() - 0.5;
        auto scaled = recs;
        for (auto& r : scaled[target])
            for (auto& v : r.scores.values) v = a * v + b;
        const auto scaled_stats = compute_standardization(scaled);
        for (std::size_t i = 0; i < n; ++i) {
            const auto before = member_row(recs, members, i), after = member_row(scaled, members, i);
            s.standardized_affine_failures +=
                max_standardized_select(after, scaled_stats) != max_standardized_select(before, stats);
            s.raw_affine_changes += max_raw_select(after) != max_raw_select(before);
        }

        if (n_members > 1) {
            auto holed = recs;
            holed[members[1]].pop_back();
            try {
                run_ensemble(EnsembleSpec{"E", members, FusionRule::majority}, holed, stats);
                ++s.coverage_failures;
            } catch (const CoverageError&) {
            }
        }
    }
    return s;
}

}  // namespace sexid::testing
