#include "sexid/textprep.hpp"

#include <fmt/format.h>

#include "sexid/errors.hpp"
#include "sexid/text_util.hpp"

namespace sexid {

void PreprocessConfig::validate() const {
    if ((lemmatize || remove_stopwords) && !tokenize)
        throw ConfigError("lemmatization and stopword removal require tokenize = true");
}

std::string PreprocessConfig::describe() const {
    std::string out = fmt::format("lc={};tok={};lem={};stop={}", int(lowercase), int(tokenize), int(lemmatize),
                                  int(remove_stopwords));
    // Resource contents change what the model sees, so they are part of the
    // description.
    if (remove_stopwords)
        for (const auto& [lang, words] : stopword_lists) {
            std::vector<std::string> w(words.begin(), words.end());
            out += fmt::format(";stop.{}={}", to_string(lang), join(w, ","));
        }
    if (lemmatize)
        for (const auto& [lang, table] : lemma_tables) {
            std::map<std::string, std::string> sorted(table.begin(), table.end());
            out += fmt::format(";lem.{}=", to_string(lang));
            for (const auto& [form, lemma] : sorted) out += form + ">" + lemma + ",";
        }
    return out;
}

std::string lowercase_utf8(std::string_view text) {
    std::string out(text);
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto c = static_cast<unsigned char>(out[i]);
        if (c >= 'A' && c <= 'Z') {
            out[i] = static_cast<char>(c + 32);
        } else if (c == 0xC3 && i + 1 < out.size()) {
            // U+00C0..U+00DE map to U+00E0..U+00FE, except U+00D7 (multiplication sign).
            auto d = static_cast<unsigned char>(out[i + 1]);
            if (d >= 0x80 && d <= 0x9E && d != 0x97) out[i + 1] = static_cast<char>(d + 0x20);
            ++i;
        }
    }
    return out;
}

namespace {

bool is_separator(unsigned char c) noexcept {
    if (c >= 0x80) return false;
    if (c == '#' || c == '@' || c == '\'' || c == '_') return false;
    if (c <= ' ' || c == 0x7F) return true;
    return !((c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'));
}

}  // namespace

std::vector<std::string> tokenize_words(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_separator(static_cast<unsigned char>(text[i]))) ++i;
        const auto start = i;
        while (i < text.size() && !is_separator(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) tokens.emplace_back(text.substr(start, i - start));
    }
    return tokens;
}

std::string preprocess_text(std::string_view text, Language language, const PreprocessConfig& cfg) {
    cfg.validate();
    const std::set<std::string>* stop = nullptr;
    if (cfg.remove_stopwords) {
        auto it = cfg.stopword_lists.find(language);
        if (it == cfg.stopword_lists.end())
            throw ConfigError(fmt::format("no stopword list for language '{}'", to_string(language)));
        stop = &it->second;
    }
    const std::unordered_map<std::string, std::string>* lemmas = nullptr;
    if (cfg.lemmatize) {
        auto it = cfg.lemma_tables.find(language);
        if (it == cfg.lemma_tables.end())
            throw ConfigError(fmt::format("no lemma table for language '{}'", to_string(language)));
        lemmas = &it->second;
    }

    std::string out = cfg.lowercase ? lowercase_utf8(text) : std::string(text);
    if (!cfg.tokenize) return out;

    std::vector<std::string> kept;
    for (auto& tok : tokenize_words(out)) {
        if (lemmas) {
            auto it = lemmas->find(lowercase_utf8(tok));
            if (it != lemmas->end()) tok = it->second;
        }
        if (stop && stop->count(lowercase_utf8(tok))) continue;
        kept.push_back(std::move(tok));
    }
    return join(kept, " ");
}

std::set<std::string> load_stopwords(const std::filesystem::path& path) {
    std::set<std::string> words;
    for (const auto& line : split(read_file(path), '\n')) {
        auto w = trim(line);
        if (w.empty() || w.front() == '#') continue;
        words.insert(lowercase_utf8(w));
    }
    return words;
}

std::unordered_map<std::string, std::string> load_lemmas(const std::filesystem::path& path) {
    std::unordered_map<std::string, std::string> table;
    std::size_t line_no = 0;
    for (const auto& line : split(read_file(path), '\n')) {
        ++line_no;
        auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        auto fields = split(t, '\t');
        if (fields.size() != 2) throw FormatError(fmt::format("{}:{}: expected form<TAB>lemma", path.string(), line_no));
        table[lowercase_utf8(fields[0])] = fields[1];
    }
    return table;
}

}  // namespace sexid
