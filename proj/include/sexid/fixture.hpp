#pragma once

// Deterministic synthetic bilingual corpus for smoke runs and tests. Each
// category has its own cue words in both languages, so both tasks are
// linearly separable; a word-by-word dictionary provides replayable
// translations.

#include <filesystem>
#include <string>

namespace sexid {

struct FixtureSpec {
    int train_per_category_per_language = 10;  // sexist, per category
    int train_non_sexist_per_language = 50;
    int test_per_category_per_language = 4;
    int test_non_sexist_per_language = 20;
    std::uint64_t seed = 2021;
};

struct FixtureFiles {
    std::string train;         // dataset TSV
    std::string test;          // dataset TSV
    std::string translations;  // replay TSV covering every text in both directions
    std::string stopwords_en;
    std::string stopwords_es;
    std::string config;        // run config referring to the files above
};

FixtureFiles generate_fixture(const FixtureSpec& spec = {});

/// Writes train.tsv, test.tsv, translations.tsv, fixture.cfg and
/// stopwords/{en,es}.txt into dir.
void write_fixture(const std::filesystem::path& dir, const FixtureSpec& spec = {});

}  // namespace sexid
