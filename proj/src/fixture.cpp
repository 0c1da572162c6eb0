#include "sexid/fixture.hpp"

#include <array>
#include <map>
#include <vector>

#include <fmt/format.h>

#include "sexid/corpus.hpp"
#include "sexid/rng.hpp"
#include "sexid/text_util.hpp"

namespace sexid {
namespace {

struct Lexicon {
    std::string_view label;
    std::array<std::string_view, 4> en;
    std::array<std::string_view, 4> es;
};

// Non-sexist first, then the five categories in label-space order.
constexpr std::array<Lexicon, 6> kLexicon{{
    {"non-sexist", {"coffee", "weather", "football", "music"}, {"café", "clima", "fútbol", "música"}},
    {"ideological-inequality", {"feminism", "feminists", "equality", "privilege"},
     {"feminismo", "feministas", "igualdad", "privilegio"}},
    {"stereotyping-dominance", {"kitchen", "obey", "housewife", "submissive"},
     {"cocina", "obedecer", "ama", "sumisa"}},
    {"objectification", {"body", "curves", "bikini", "legs"}, {"cuerpo", "curvas", "bañador", "piernas"}},
    {"sexual-violence", {"grope", "harass", "assault", "catcall"}, {"manosear", "acosar", "agresión", "piropo"}},
    {"misogyny-non-sexual-violence", {"hate", "stupid", "slap", "worthless"},
     {"odio", "estúpida", "bofetada", "inútil"}},
}};

// Shared neutral words; paired by position across languages.
constexpr std::array<std::string_view, 12> kFillerEn{"the", "today", "really", "people", "think", "about",
                                                     "this", "always", "again", "my", "friend", "said"};
constexpr std::array<std::string_view, 12> kFillerEs{"el", "hoy", "realmente", "gente", "pienso", "sobre",
                                                     "esto", "siempre", "otra", "mi", "amigo", "dijo"};

constexpr std::string_view kStopwordsEn = "# English stopwords\na\nabout\nan\nand\nare\nas\nat\nbe\nby\nfor\nfrom\nhe\nin\nis\nit\nmy\nof\non\nor\nshe\nthat\nthe\nthis\nto\nwas\nwith\n";
constexpr std::string_view kStopwordsEs = "# Spanish stopwords\na\nal\nde\ndel\nel\nella\nen\nes\nesto\nla\nlas\nlo\nlos\nmi\npor\nque\nse\nsobre\nsu\nun\nuna\ny\n";

std::string sentence(Rng& rng, const Lexicon& lex, Language lang) {
    const auto& cues = lang == Language::en ? lex.en : lex.es;
    const auto& filler = lang == Language::en ? kFillerEn : kFillerEs;
    std::vector<std::string> words;
    for (int i = 0; i < 2; ++i) words.emplace_back(filler[rng.below(filler.size())]);
    for (int i = 0; i < 3; ++i) words.emplace_back(cues[rng.below(cues.size())]);
    rng.shuffle(words);
    // Capitalize and punctuate so preprocessing has something to do.
    auto text = join(words, " ");
    if (text[0] >= 'a' && text[0] <= 'z') text[0] = static_cast<char>(text[0] - 32);
    return text + (rng.below(2) ? "!" : ".");
}

std::map<std::string, std::string> dictionary(Language from) {
    std::map<std::string, std::string> d;
    auto add = [&](std::string_view en, std::string_view es) {
        if (from == Language::en) d.emplace(en, es);
        else d.emplace(es, en);
    };
    for (const auto& lex : kLexicon)
        for (std::size_t i = 0; i < lex.en.size(); ++i) add(lex.en[i], lex.es[i]);
    for (std::size_t i = 0; i < kFillerEn.size(); ++i) add(kFillerEn[i], kFillerEs[i]);
    return d;
}

std::string translate_words(const std::string& text, Language from) {
    static const auto en_es = dictionary(Language::en);
    static const auto es_en = dictionary(Language::es);
    const auto& d = from == Language::en ? en_es : es_en;
    auto body = text.substr(0, text.size() - 1);
    const char end = text.back();
    std::vector<std::string> out;
    for (auto w : split(body, ' ')) {
        const bool cap = !w.empty() && w[0] >= 'A' && w[0] <= 'Z';
        if (cap) w[0] = static_cast<char>(w[0] + 32);
        auto it = d.find(w);
        auto t = it == d.end() ? w : it->second;
        if (cap && t[0] >= 'a' && t[0] <= 'z') t[0] = static_cast<char>(t[0] - 32);
        out.push_back(t);
    }
    return join(out, " ") + end;
}

std::vector<Example> make_examples(Rng& rng, std::string_view prefix, int per_category, int non_sexist,
                                   bool with_gab) {
    std::vector<Example> out;
    for (auto lang : kLanguages) {
        int n = 0;
        for (std::size_t c = 0; c < kLexicon.size(); ++c) {
            const int count = c == 0 ? non_sexist : per_category;
            for (int i = 0; i < count; ++i) {
                Example ex;
                ex.id = fmt::format("{}-{}-{:03d}", prefix, to_string(lang), ++n);
                ex.language = lang;
                ex.source = with_gab && n % 4 == 0 ? Source::gab : Source::twitter;
                ex.text = sentence(rng, kLexicon[c], lang);
                ex.task1 = std::string(c == 0 ? kNonSexist : kSexist);
                ex.task2 = std::string(kLexicon[c].label);
                out.push_back(std::move(ex));
            }
        }
    }
    // Interleave classes and languages so file order carries no signal.
    rng.shuffle(out);
    return out;
}

constexpr std::string_view kConfig = R"(# Synthetic bilingual smoke-test run with the baseline backend.
[data]
train = train.tsv
test = test.tsv

[run]
task = both
seed = 13
out = run
workers = 4

[backend]
kind = baseline

[preprocess]
lowercase = true
tokenize = true
remove_stopwords = true
stopwords.en = stopwords/en.txt
stopwords.es = stopwords/es.txt

[split]
kind = kfold
k = 10

[translate]
provider = replay
replay_file = translations.tsv

[ensemble]
best_members = M2,M3
aggregation = winner_take_all
standardize_on = test

[task2]
gating = predicted
gate_with = E6
)";

}  // namespace

FixtureFiles generate_fixture(const FixtureSpec& spec) {
    Rng rng(spec.seed);
    auto train = make_examples(rng, "tr", spec.train_per_category_per_language, spec.train_non_sexist_per_language, false);
    auto test = make_examples(rng, "te", spec.test_per_category_per_language, spec.test_non_sexist_per_language, true);

    FixtureFiles f;
    f.train = render_dataset(Dataset(train, DatasetRole::train, "fixture"));
    f.test = render_dataset(Dataset(test, DatasetRole::test, "fixture"));

    std::map<std::pair<std::string, std::string>, std::string> pairs;  // (src_lang, text) -> translation
    for (const auto* set : {&train, &test})
        for (const auto& ex : *set)
            pairs.emplace(std::pair{std::string(to_string(ex.language)), ex.text}, translate_words(ex.text, ex.language));
    f.translations = tsv_line({"src_lang", "tgt_lang", "source_text", "translated_text"});
    for (const auto& [key, translation] : pairs)
        f.translations += tsv_line({key.first, key.first == "en" ? "es" : "en", key.second, translation});

    f.stopwords_en = std::string(kStopwordsEn);
    f.stopwords_es = std::string(kStopwordsEs);
    f.config = std::string(kConfig);
    return f;
}

void write_fixture(const std::filesystem::path& dir, const FixtureSpec& spec) {
    const auto f = generate_fixture(spec);
    const auto stopword_dir = dir / "stopwords";
    std::filesystem::create_directories(stopword_dir);
    write_file(dir / "train.tsv", f.train);
    write_file(dir / "test.tsv", f.test);
    write_file(dir / "translations.tsv", f.translations);
    write_file(stopword_dir / "en.txt", f.stopwords_en);
    write_file(stopword_dir / "es.txt", f.stopwords_es);
    write_file(dir / "fixture.cfg", f.config);
}

}  // namespace sexid
