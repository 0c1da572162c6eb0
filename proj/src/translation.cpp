#include "sexid/translation.hpp"

#include <algorithm>
#include <thread>
#include <unordered_map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "sexid/errors.hpp"
#include "sexid/hashing.hpp"
#include "sexid/text_util.hpp"

namespace sexid {

std::string TranslationProvider::translate(std::string_view text, Language source, Language target) {
    if (text.empty()) return {};
    ++calls_;
    return do_translate(text, source, target);
}

// --- replay --------------------------------------------------------------

ReplayProvider::ReplayProvider(const std::filesystem::path& path) {
    const auto table = read_tsv(path);
    const auto c_src = table.column("src_lang"), c_tgt = table.column("tgt_lang"),
               c_text = table.column("source_text"), c_out = table.column("translated_text");
    if (c_src == std::string::npos || c_tgt == std::string::npos || c_text == std::string::npos ||
        c_out == std::string::npos)
        throw FormatError(path.string() + ": replay file needs src_lang, tgt_lang, source_text, translated_text");
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        auto s = parse_language(row[c_src]);
        auto t = parse_language(row[c_tgt]);
        if (!s || !t)
            throw ValidationError(fmt::format("{}:{}: unknown language", path.string(), table.line_numbers[r]));
        table_[{*s, *t, row[c_text]}] = row[c_out];
    }
    id_ = "replay:" + sha256_hex(read_file(path)).substr(0, 16);
}

bool ReplayProvider::supports(Language s, Language t) const {
    return std::any_of(table_.begin(), table_.end(), [&](const auto& kv) {
        return std::get<0>(kv.first) == s && std::get<1>(kv.first) == t;
    });
}

std::string ReplayProvider::do_translate(std::string_view text, Language source, Language target) {
    auto it = table_.find(std::make_tuple(source, target, std::string(text)));
    if (it == table_.end())
        throw TransportError("", fmt::format("replay file has no {}->{} translation for '{}'", to_string(source),
                                             to_string(target), text));
    return it->second;
}

// --- cache ---------------------------------------------------------------

TranslationCache::TranslationCache(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.empty() || !std::filesystem::exists(path_)) return;
    std::size_t line_no = 0;
    for (const auto& line : split(read_file(path_), '\n')) {
        ++line_no;
        if (line.empty()) continue;
        auto f = split(line, '\t');
        if (f.size() != 5) throw FormatError(fmt::format("{}:{}: expected 5 cache fields", path_.string(), line_no));
        auto s = parse_language(f[1]);
        auto t = parse_language(f[2]);
        if (!s || !t) throw FormatError(fmt::format("{}:{}: bad language", path_.string(), line_no));
        entries_[{f[0], *s, *t, f[3]}] = f[4];
    }
}

std::optional<std::string> TranslationCache::lookup(std::string_view provider_id, Language source, Language target,
                                                    std::string_view text) const {
    Key key{std::string(provider_id), source, target, sha256_hex(text)};
    std::shared_lock lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void TranslationCache::insert(std::string_view provider_id, Language source, Language target, std::string_view text,
                              std::string_view translation) {
    check_tsv_field(provider_id, "provider id");
    check_tsv_field(translation, "translation");
    Key key{std::string(provider_id), source, target, sha256_hex(text)};
    std::unique_lock lock(mutex_);
    if (entries_.count(key)) return;
    entries_.emplace(key, std::string(translation));
    if (!path_.empty())
        append_file(path_, tsv_line({std::get<0>(key), std::string(to_string(source)), std::string(to_string(target)),
                                     std::get<3>(key), std::string(translation)}));
}

std::size_t TranslationCache::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

// --- batch translation ---------------------------------------------------

namespace {

// Providers may return multi-line text; the cache and datasets cannot hold it.
std::string flatten(std::string s) {
    for (char& c : s)
        if (c == '\t' || c == '\n' || c == '\r') c = ' ';
    return s;
}

struct Job {
    Language source;
    std::string text;
    std::string first_id;  // reported on failure
    std::string result;
};

void run_jobs(std::vector<Job>& jobs, Language target, TranslationProvider& provider, TranslationCache& cache,
              const TranslationOptions& options) {
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        while (true) {
            const auto i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            {
                std::lock_guard lock(error_mutex);
                if (first_error) return;
            }
            auto& job = jobs[i];
            for (int attempt = 1;; ++attempt) {
                try {
                    job.result = flatten(provider.translate(job.text, job.source, target));
                    cache.insert(provider.id(), job.source, target, job.text, job.result);
                    break;
                } catch (const TransportError& e) {
                    if (attempt >= std::max(1, options.max_attempts)) {
                        std::lock_guard lock(error_mutex);
                        if (!first_error)
                            first_error = std::make_exception_ptr(TransportError(
                                job.first_id, fmt::format("translating {} failed after {} attempt(s): {}", job.first_id,
                                                          attempt, e.what())));
                        return;
                    }
                    spdlog::debug("retrying translation of {} (attempt {}): {}", job.first_id, attempt, e.what());
                    std::this_thread::sleep_for(options.retry_backoff * attempt);
                }
            }
        }
    };
    const auto threads = std::clamp<std::size_t>(options.parallelism, 1, std::max<std::size_t>(1, jobs.size()));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

std::vector<TranslatedExample> translate_batch(const std::vector<Example>& examples, Language target,
                                               TranslationProvider& provider, TranslationCache& cache,
                                               const TranslationOptions& options) {
    for (const auto& ex : examples) {
        if (ex.language == target)
            throw ArgumentError(fmt::format("example {} is already in {}", ex.id, to_string(target)));
        if (!provider.supports(ex.language, target))
            throw ConfigError(fmt::format("provider {} does not support {}->{}", provider.id(), to_string(ex.language),
                                          to_string(target)));
    }

    const auto pid = provider.id();
    std::vector<std::optional<std::string>> resolved(examples.size());
    std::vector<Job> jobs;
    std::map<std::pair<Language, std::string>, std::size_t> job_of;  // dedupe misses by text
    std::vector<std::optional<std::size_t>> pending(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& ex = examples[i];
        if (auto hit = cache.lookup(pid, ex.language, target, ex.text)) {
            resolved[i] = std::move(*hit);
            continue;
        }
        auto [it, fresh] = job_of.try_emplace({ex.language, ex.text}, jobs.size());
        if (fresh) jobs.push_back(Job{ex.language, ex.text, ex.id, {}});
        pending[i] = it->second;
    }
    if (!jobs.empty()) run_jobs(jobs, target, provider, cache, options);

    std::vector<TranslatedExample> out;
    out.reserve(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& ex = examples[i];
        out.push_back(TranslatedExample{ex.id, ex.source, target,
                                        resolved[i] ? *resolved[i] : jobs[*pending[i]].result, ex.task1, ex.task2});
    }
    return out;
}

std::string translated_id(std::string_view original_id, Language target) {
    return fmt::format("{}@{}", original_id, to_string(target));
}

namespace {

std::vector<std::string> translate_foreign(const Dataset& d, Language target, TranslationProvider& provider,
                                           TranslationCache& cache, const TranslationOptions& options,
                                           std::vector<TranslatedExample>& translated) {
    std::vector<Example> foreign;
    for (const auto& ex : d)
        if (ex.language != target) foreign.push_back(ex);
    translated = translate_batch(foreign, target, provider, cache, options);
    std::vector<std::string> ids;
    for (const auto& ex : foreign) ids.push_back(ex.id);
    return ids;
}

Example to_example(const TranslatedExample& t, std::string id) {
    return Example{std::move(id), t.source, t.language, t.text, t.task1, t.task2};
}

}  // namespace

Dataset augment_with_translation(const Dataset& train, Language target, TranslationProvider& provider,
                                 TranslationCache& cache, const TranslationOptions& options) {
    if (train.empty()) throw ArgumentError("cannot augment an empty training set");
    std::vector<TranslatedExample> translated;
    translate_foreign(train, target, provider, cache, options, translated);
    std::vector<Example> out;
    out.reserve(train.size());
    std::size_t next = 0;
    for (const auto& ex : train) {
        if (ex.language == target) {
            out.push_back(ex);
        } else {
            const auto& t = translated[next++];
            auto copy = to_example(t, translated_id(t.original_id, target));
            // A translation that comes back empty cannot be a training example.
            if (trim(copy.text).empty()) {
                spdlog::warn("dropping empty translation of {}", ex.id);
                continue;
            }
            out.push_back(std::move(copy));
        }
    }
    return Dataset(std::move(out), train.role(), fmt::format("{}+translated:{}", train.provenance(), to_string(target)));
}

Dataset translate_test_set(const Dataset& test, Language target, TranslationProvider& provider,
                           TranslationCache& cache, const TranslationOptions& options) {
    std::vector<TranslatedExample> translated;
    translate_foreign(test, target, provider, cache, options, translated);
    std::vector<Example> out;
    out.reserve(test.size());
    std::size_t next = 0;
    for (const auto& ex : test) {
        if (ex.language == target) {
            out.push_back(ex);
            continue;
        }
        auto copy = to_example(translated[next++], ex.id);
        if (trim(copy.text).empty()) copy.text = ex.text;  // keep cardinality; score the original text
        out.push_back(std::move(copy));
    }
    return Dataset(std::move(out), test.role(), fmt::format("{}+translated:{}", test.provenance(), to_string(target)));
}

}  // namespace sexid
