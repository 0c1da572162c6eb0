#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "sexid/corpus.hpp"

namespace sexid {

/// A machine-translation service. Implementations must be safe to call from
/// several threads at once.
class TranslationProvider {
public:
    virtual ~TranslationProvider() = default;

    /// Identifier recorded in cache keys; two providers with the same id are
    /// assumed to produce the same translations.
    virtual std::string id() const = 0;
    virtual bool supports(Language source, Language target) const = 0;

    /// Empty text short-circuits to "" without reaching the service.
    /// Failures throw TransportError (item id left empty; callers fill it).
    std::string translate(std::string_view text, Language source, Language target);

    /// Number of service round trips made so far.
    std::size_t calls() const noexcept { return calls_.load(); }

protected:
    virtual std::string do_translate(std::string_view text, Language source, Language target) = 0;

private:
    std::atomic<std::size_t> calls_{0};
};

/// Test double: returns the source text unchanged.
class IdentityProvider final : public TranslationProvider {
public:
    std::string id() const override { return "identity"; }
    bool supports(Language s, Language t) const override { return s != t; }

protected:
    std::string do_translate(std::string_view text, Language, Language) override { return std::string(text); }
};

/// Serves translations prepared ahead of time. Input is a TSV with header
/// src_lang, tgt_lang, source_text, translated_text.
class ReplayProvider final : public TranslationProvider {
public:
    explicit ReplayProvider(const std::filesystem::path& path);
    std::string id() const override { return id_; }
    bool supports(Language s, Language t) const override;
    std::size_t entries() const noexcept { return table_.size(); }

protected:
    std::string do_translate(std::string_view text, Language source, Language target) override;

private:
    std::string id_;
    std::map<std::tuple<Language, Language, std::string>, std::string, std::less<>> table_;
};

struct HttpProviderOptions {
    std::string endpoint;   // e.g. http://localhost:5000/translate
    std::string token;      // sent as a bearer token when non-empty
    std::chrono::milliseconds timeout{10000};
};

/// POSTs form fields q, source, target to a translation endpoint. Accepts
/// either a plain UTF-8 body or a JSON object with a "translatedText" field.
class HttpProvider final : public TranslationProvider {
public:
    explicit HttpProvider(HttpProviderOptions options);
    std::string id() const override;
    bool supports(Language s, Language t) const override { return s != t; }

protected:
    std::string do_translate(std::string_view text, Language source, Language target) override;

private:
    HttpProviderOptions options_;
    std::string origin_;  // scheme://host[:port]
    std::string path_;
};

/// Append-only translation cache keyed by (provider id, source language,
/// target language, sha256 of source text). Many concurrent readers, one
/// writer at a time; every insert is appended to the backing file
/// immediately.
class TranslationCache {
public:
    /// In-memory only.
    TranslationCache() = default;
    /// Loads existing entries from path if it exists.
    explicit TranslationCache(std::filesystem::path path);

    std::optional<std::string> lookup(std::string_view provider_id, Language source, Language target,
                                      std::string_view text) const;
    void insert(std::string_view provider_id, Language source, Language target, std::string_view text,
                std::string_view translation);

    std::size_t size() const;
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    using Key = std::tuple<std::string, Language, Language, std::string>;
    std::filesystem::path path_;
    mutable std::shared_mutex mutex_;
    std::map<Key, std::string> entries_;
};

struct TranslatedExample {
    std::string original_id;
    Source source = Source::twitter;
    Language language = Language::en;  // target language
    std::string text;
    std::optional<std::string> task1;
    std::optional<std::string> task2;
};

struct TranslationOptions {
    std::size_t parallelism = 1;
    int max_attempts = 3;
    std::chrono::milliseconds retry_backoff{100};
};

/// Output order matches input order. Duplicate texts are sent once.
std::vector<TranslatedExample> translate_batch(const std::vector<Example>& examples, Language target,
                                               TranslationProvider& provider, TranslationCache& cache,
                                               const TranslationOptions& options = {});

/// Id given to the translation of an example in an augmented training set.
std::string translated_id(std::string_view original_id, Language target);

/// Target-language originals plus translations of everything else, in the
/// input order. Translated examples get ids from translated_id().
Dataset augment_with_translation(const Dataset& train, Language target, TranslationProvider& provider,
                                 TranslationCache& cache, const TranslationOptions& options = {});

/// Every example exactly once, in order and with its original id; examples
/// not in the target language are replaced by their translations.
Dataset translate_test_set(const Dataset& test, Language target, TranslationProvider& provider,
                           TranslationCache& cache, const TranslationOptions& options = {});

}  // namespace sexid
