#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sexid/labels.hpp"

namespace sexid {

/// Optional normalization applied to raw text before featurization.
struct PreprocessConfig {
    bool lowercase = false;
    bool tokenize = false;
    bool lemmatize = false;
    bool remove_stopwords = false;
    std::map<Language, std::set<std::string>> stopword_lists;
    std::map<Language, std::unordered_map<std::string, std::string>> lemma_tables;

    /// All flags off: text passes through untouched.
    static PreprocessConfig identity() { return {}; }

    /// Throws ConfigError if lemmatize/remove_stopwords is set without
    /// tokenize.
    void validate() const;

    /// Short stable description used in fingerprints and model manifests.
    std::string describe() const;
};

/// Lowercases ASCII and the precomposed Latin-1 capitals (Á, Ñ, Ü, ...).
std::string lowercase_utf8(std::string_view text);

/// Maximal runs of word characters. ASCII punctuation and whitespace
/// separate tokens; '#', '@' and '\'' stay inside tokens; non-ASCII bytes are
/// word characters.
std::vector<std::string> tokenize_words(std::string_view text);

/// Deterministic; idempotent for configurations without lemmatization.
/// Throws ConfigError when stopword removal is requested for a language
/// without a list.
std::string preprocess_text(std::string_view text, Language language, const PreprocessConfig& cfg);

/// One word per line, '#' comments.
std::set<std::string> load_stopwords(const std::filesystem::path& path);
/// TSV of (form, lemma) without header.
std::unordered_map<std::string, std::string> load_lemmas(const std::filesystem::path& path);

}  // namespace sexid
