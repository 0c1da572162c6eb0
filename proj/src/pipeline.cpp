#include "sexid/pipeline.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "sexid/errors.hpp"
#include "sexid/hashing.hpp"
#include "sexid/text_util.hpp"

namespace fs = std::filesystem;

namespace sexid {

std::string_view to_string(RunTask t) noexcept {
    switch (t) {
        case RunTask::task1: return "task1";
        case RunTask::task2: return "task2";
        case RunTask::both: return "both";
    }
    return "?";
}

std::optional<RunTask> parse_run_task(std::string_view s) noexcept {
    if (s == "task1") return RunTask::task1;
    if (s == "task2") return RunTask::task2;
    if (s == "both") return RunTask::both;
    return std::nullopt;
}

namespace {

std::string_view to_string(TranslationKind k) noexcept {
    switch (k) {
        case TranslationKind::none: return "none";
        case TranslationKind::identity: return "identity";
        case TranslationKind::replay: return "replay";
        case TranslationKind::http: return "http";
    }
    return "?";
}

std::vector<std::string> parse_list(std::string_view v) {
    std::vector<std::string> out;
    for (const auto& item : split(v, ','))
        if (auto t = trim(item); !t.empty()) out.emplace_back(t);
    return out;
}

bool parse_bool(std::string_view v, std::string_view key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(fmt::format("{}: expected a boolean, got '{}'", key, v));
}

bool is_strategy(std::string_view id) {
    for (const auto& s : model_catalog())
        if (s.id == id) return true;
    return id.size() == 2 && id[0] == 'E' && id[1] >= '1' && id[1] <= '6';
}

bool needs_translation(std::string_view model) {
    const auto& s = model_spec(model);
    return s.translate_train || s.translate_test;
}

}  // namespace

RunConfig parse_run_config(std::string_view content, const fs::path& base_dir, std::string_view origin) {
    std::map<std::string, std::string> kv;
    try {
        kv = parse_key_values(content, origin);
    } catch (const FormatError& e) {
        throw ConfigError(e.what());
    }
    auto take = [&](const std::string& key) -> std::optional<std::string> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        auto v = it->second;
        kv.erase(it);
        return v;
    };
    auto path_of = [&](const std::string& v) {
        fs::path p(v);
        return (p.is_relative() ? base_dir / p : p).lexically_normal();
    };

    RunConfig c;
    c.backend.checkpoint_root = base_dir;
    try {
        if (auto v = take("data.train")) c.train = path_of(*v);
        if (auto v = take("data.test")) c.test = path_of(*v);
        if (auto v = take("run.task")) {
            auto t = parse_run_task(*v);
            if (!t) throw ConfigError(fmt::format("run.task must be task1, task2 or both, got '{}'", *v));
            c.task = *t;
        }
        if (auto v = take("run.seed")) c.seed = static_cast<std::uint64_t>(parse_int(*v, "run.seed"));
        if (auto v = take("run.out")) c.out = path_of(*v);
        else c.out = path_of("run");
        if (auto v = take("run.workers")) c.workers = static_cast<int>(parse_int(*v, "run.workers"));

        if (auto v = take("backend.kind")) {
            auto k = parse_backend_kind(*v);
            if (!k) throw ConfigError(fmt::format("backend.kind must be baseline or transformer, got '{}'", *v));
            c.backend.kind = *k;
        }
        if (auto v = take("backend.checkpoint.multilingual")) c.checkpoint_multilingual = *v;
        if (auto v = take("backend.checkpoint.en")) c.checkpoint_en = *v;
        if (auto v = take("backend.checkpoint.es")) c.checkpoint_es = *v;
        if (auto v = take("backend.max_sequence_length"))
            c.backend.max_sequence_length = static_cast<int>(parse_int(*v, "backend.max_sequence_length"));
        if (auto v = take("backend.hash_dim")) c.backend.hash_dim = static_cast<int>(parse_int(*v, "backend.hash_dim"));
        if (auto v = take("backend.bigrams")) c.backend.bigrams = parse_bool(*v, "backend.bigrams");
        if (auto v = take("backend.lr_scale")) c.backend.baseline_lr_scale = parse_real(*v, "backend.lr_scale");
        if (auto v = take("backend.dropout")) c.backend.dropout = parse_real(*v, "backend.dropout");
        if (auto v = take("backend.weight_decay")) c.backend.weight_decay = parse_real(*v, "backend.weight_decay");
        if (auto v = take("backend.warmup_fraction"))
            c.backend.warmup_fraction = parse_real(*v, "backend.warmup_fraction");

        for (auto lang : kLanguages) {
            const auto l = std::string(to_string(lang));
            if (auto v = take("preprocess.stopwords." + l)) c.stopword_files[lang] = path_of(*v);
            if (auto v = take("preprocess.lemmas." + l)) c.lemma_files[lang] = path_of(*v);
        }
        // Unset flags follow the backend: the baseline normalizes (dropping
        // stopwords when lists are configured), the transformer reads raw text.
        const bool normalize = c.backend.kind == BackendKind::baseline;
        auto flag = [&](const char* key, bool fallback) {
            auto v = take(key);
            return v ? parse_bool(*v, key) : fallback;
        };
        auto& p = c.backend.preprocess;
        p.lowercase = flag("preprocess.lowercase", normalize);
        p.tokenize = flag("preprocess.tokenize", normalize);
        p.lemmatize = flag("preprocess.lemmatize", false);
        p.remove_stopwords = flag("preprocess.remove_stopwords", normalize && c.stopword_files.size() == 2);

        if (auto v = take("grid.head_sources")) {
            c.grid.head_sources.clear();
            for (const auto& h : parse_list(*v)) {
                auto hs = parse_head_source(h);
                if (!hs) throw ConfigError(fmt::format("grid.head_sources: unknown head source '{}'", h));
                c.grid.head_sources.push_back(*hs);
            }
        }
        if (auto v = take("grid.learning_rates")) {
            c.grid.learning_rates.clear();
            for (const auto& x : parse_list(*v)) c.grid.learning_rates.push_back(parse_real(x, "grid.learning_rates"));
        }
        if (auto v = take("grid.batch_sizes")) {
            c.grid.batch_sizes.clear();
            for (const auto& x : parse_list(*v))
                c.grid.batch_sizes.push_back(static_cast<int>(parse_int(x, "grid.batch_sizes")));
        }
        if (auto v = take("grid.epochs")) {
            const auto dash = v->find('-');
            c.grid.epoch_min = static_cast<int>(parse_int(v->substr(0, dash), "grid.epochs"));
            c.grid.epoch_max = dash == std::string::npos ? c.grid.epoch_min
                                                         : static_cast<int>(parse_int(v->substr(dash + 1), "grid.epochs"));
        }
        if (auto v = take("grid.epoch_sharing")) c.epoch_sharing = parse_bool(*v, "grid.epoch_sharing");

        if (auto v = take("split.kind")) {
            if (*v == "kfold") c.split.kind = SplitKind::kfold;
            else if (*v == "holdout") c.split.kind = SplitKind::holdout;
            else throw ConfigError(fmt::format("split.kind must be kfold or holdout, got '{}'", *v));
        }
        if (auto v = take("split.k")) c.split.k = static_cast<int>(parse_int(*v, "split.k"));
        if (auto v = take("split.train_fraction")) c.split.train_fraction = parse_real(*v, "split.train_fraction");

        if (auto v = take("translate.provider")) {
            if (*v == "none") c.translation = TranslationKind::none;
            else if (*v == "identity") c.translation = TranslationKind::identity;
            else if (*v == "replay") c.translation = TranslationKind::replay;
            else if (*v == "http") c.translation = TranslationKind::http;
            else throw ConfigError(fmt::format("translate.provider must be none, identity, replay or http, got '{}'", *v));
        }
        if (auto v = take("translate.replay_file")) c.replay_file = path_of(*v);
        if (auto v = take("translate.endpoint")) c.endpoint = *v;
        if (auto v = take("translate.token_env")) c.token_env = *v;
        if (auto v = take("translate.parallelism"))
            c.translation_options.parallelism = static_cast<std::size_t>(parse_int(*v, "translate.parallelism"));
        if (auto v = take("translate.max_attempts"))
            c.translation_options.max_attempts = static_cast<int>(parse_int(*v, "translate.max_attempts"));

        if (auto v = take("models.run")) c.models = parse_list(*v);
        if (auto v = take("ensemble.best_members")) c.best_members = parse_list(*v);
        if (auto v = take("ensemble.aggregation")) {
            auto a = parse_value_aggregation(*v);
            if (!a) throw ConfigError(fmt::format("ensemble.aggregation must be winner_take_all or score_sum, got '{}'", *v));
            c.aggregation = *a;
        }
        if (auto v = take("ensemble.standardize_on")) {
            if (*v == "test") c.standardize_on = StandardizeOn::test;
            else if (*v == "train") c.standardize_on = StandardizeOn::train;
            else throw ConfigError(fmt::format("ensemble.standardize_on must be test or train, got '{}'", *v));
        }
        if (auto v = take("task2.gating")) {
            if (*v == "predicted") c.gating = Gating::predicted;
            else if (*v == "gold") c.gating = Gating::gold;
            else throw ConfigError(fmt::format("task2.gating must be predicted or gold, got '{}'", *v));
        }
        if (auto v = take("task2.gate_with")) c.gate_with = *v;
        if (auto v = take("task2.gating_file")) c.gating_file = path_of(*v);
        if (auto v = take("report.reference")) c.reference_model = *v;
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(fmt::format("{}: {}", origin, e.what()));
    }
    if (!kv.empty()) {
        std::vector<std::string> unknown;
        for (const auto& [k, _] : kv) unknown.push_back(k);
        throw ConfigError(fmt::format("{}: unknown key(s): {}", origin, join(unknown, ", ")));
    }
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw ConfigError("config file not found: " + path.string());
    auto base = fs::absolute(path).parent_path();
    auto c = parse_run_config(read_file(path), base, path.string());
    c.source = fs::absolute(path);
    return c;
}

void apply_overrides(RunConfig& cfg, const Overrides& o) {
    if (o.task) cfg.task = *o.task;
    if (o.models) cfg.models = *o.models;
    if (o.seed) cfg.seed = *o.seed;
    if (o.out) cfg.out = fs::absolute(*o.out).lexically_normal();
}

void RunConfig::validate() const {
    auto need_file = [](const fs::path& p, std::string_view what) {
        if (p.empty()) throw ConfigError(fmt::format("{} is not set", what));
        if (!fs::is_regular_file(p)) throw ConfigError(fmt::format("{} not found: {}", what, p.string()));
    };
    need_file(train, "data.train");
    need_file(test, "data.test");
    if (workers < 1) throw ConfigError("run.workers must be at least 1");
    if (models.empty()) throw ConfigError("no models selected");
    for (const auto& m : models)
        if (m.size() != 2 || m[0] != 'M') throw ConfigError(fmt::format("unknown model '{}' (expected M1..M7)", m));
        else try {
            model_spec(m);
        } catch (const ArgumentError& e) {
            throw ConfigError(e.what());
        }
    ensemble_catalog(best_members);
    if (!is_strategy(gate_with)) throw ConfigError(fmt::format("task2.gate_with names unknown strategy '{}'", gate_with));
    if (!is_strategy(reference_model))
        throw ConfigError(fmt::format("report.reference names unknown strategy '{}'", reference_model));
    try {
        grid.validate();
    } catch (const ArgumentError& e) {
        throw ConfigError(std::string("grid: ") + e.what());
    }
    if (split.kind == SplitKind::kfold && split.k < 2) throw ConfigError("split.k must be at least 2");
    if (split.kind == SplitKind::holdout && !(split.train_fraction > 0.0 && split.train_fraction < 1.0))
        throw ConfigError("split.train_fraction must lie in (0, 1)");

    auto spec = backend;
    if (backend.kind == BackendKind::transformer) {
        for (const auto& m : models)
            for (const auto& key : underlying_models(model_spec(m))) {
                const auto& ck = key == "M1" ? checkpoint_multilingual : key.ends_with("-en") ? checkpoint_en : checkpoint_es;
                if (ck.empty()) throw ConfigError(fmt::format("model {} needs a checkpoint for {}", m, key));
            }
        spec.checkpoint = "placeholder";
    }
    spec.validate();
    if (backend.preprocess.remove_stopwords)
        for (auto lang : kLanguages) {
            auto it = stopword_files.find(lang);
            if (it == stopword_files.end())
                throw ConfigError(fmt::format("stopword removal needs preprocess.stopwords.{}", to_string(lang)));
            need_file(it->second, fmt::format("preprocess.stopwords.{}", to_string(lang)));
        }
    if (backend.preprocess.lemmatize)
        for (auto lang : kLanguages) {
            auto it = lemma_files.find(lang);
            if (it == lemma_files.end())
                throw ConfigError(fmt::format("lemmatization needs preprocess.lemmas.{}", to_string(lang)));
            need_file(it->second, fmt::format("preprocess.lemmas.{}", to_string(lang)));
        }

    const bool translating = std::any_of(models.begin(), models.end(), [](const auto& m) { return needs_translation(m); });
    if (translating) {
        switch (translation) {
            case TranslationKind::none:
                throw ConfigError("models M3..M7 need translation but translate.provider = none");
            case TranslationKind::replay: need_file(replay_file, "translate.replay_file"); break;
            case TranslationKind::http:
                if (endpoint.empty()) throw ConfigError("translate.endpoint is required for the http provider");
                break;
            case TranslationKind::identity: break;
        }
    }
    if (translation_options.parallelism < 1) throw ConfigError("translate.parallelism must be at least 1");
    if (translation_options.max_attempts < 1) throw ConfigError("translate.max_attempts must be at least 1");
    if (task == RunTask::task2 && gating == Gating::predicted && !gating_file.empty())
        need_file(gating_file, "task2.gating_file");
}

std::string RunConfig::snapshot() const {
    std::vector<std::string> heads, lrs, bss;
    for (auto h : grid.head_sources) heads.emplace_back(to_string(h));
    for (auto lr : grid.learning_rates) lrs.push_back(format_decimal(lr));
    for (auto bs : grid.batch_sizes) bss.push_back(std::to_string(bs));
    const auto& p = backend.preprocess;
    std::map<std::string, std::string> kv{
        {"data.train", train.string()},
        {"data.test", test.string()},
        {"run.task", std::string(to_string(task))},
        {"run.seed", std::to_string(seed)},
        {"run.out", out.string()},
        {"run.workers", std::to_string(workers)},
        {"backend.kind", std::string(to_string(backend.kind))},
        {"backend.checkpoint.multilingual", checkpoint_multilingual},
        {"backend.checkpoint.en", checkpoint_en},
        {"backend.checkpoint.es", checkpoint_es},
        {"backend.max_sequence_length", std::to_string(backend.max_sequence_length)},
        {"backend.hash_dim", std::to_string(backend.hash_dim)},
        {"backend.bigrams", backend.bigrams ? "true" : "false"},
        {"backend.lr_scale", format_real(backend.baseline_lr_scale)},
        {"backend.dropout", format_real(backend.dropout)},
        {"backend.weight_decay", format_real(backend.weight_decay)},
        {"backend.warmup_fraction", format_real(backend.warmup_fraction)},
        {"preprocess.lowercase", p.lowercase ? "true" : "false"},
        {"preprocess.tokenize", p.tokenize ? "true" : "false"},
        {"preprocess.lemmatize", p.lemmatize ? "true" : "false"},
        {"preprocess.remove_stopwords", p.remove_stopwords ? "true" : "false"},
        {"grid.head_sources", join(heads, ",")},
        {"grid.learning_rates", join(lrs, ",")},
        {"grid.batch_sizes", join(bss, ",")},
        {"grid.epochs", fmt::format("{}-{}", grid.epoch_min, grid.epoch_max)},
        {"grid.epoch_sharing", epoch_sharing ? "true" : "false"},
        {"split.kind", split.kind == SplitKind::kfold ? "kfold" : "holdout"},
        {"split.k", std::to_string(split.k)},
        {"split.train_fraction", format_real(split.train_fraction)},
        {"translate.provider", std::string(to_string(translation))},
        {"translate.replay_file", replay_file.string()},
        {"translate.endpoint", endpoint},
        {"translate.token_env", token_env},
        {"translate.parallelism", std::to_string(translation_options.parallelism)},
        {"translate.max_attempts", std::to_string(translation_options.max_attempts)},
        {"models.run", join(models, ",")},
        {"ensemble.best_members", join(best_members, ",")},
        {"ensemble.aggregation", std::string(to_string(aggregation))},
        {"ensemble.standardize_on", standardize_on == StandardizeOn::test ? "test" : "train"},
        {"task2.gating", gating == Gating::predicted ? "predicted" : "gold"},
        {"task2.gate_with", gate_with},
        {"task2.gating_file", gating_file.string()},
        {"report.reference", reference_model},
    };
    for (const auto& [lang, path] : stopword_files) kv[fmt::format("preprocess.stopwords.{}", to_string(lang))] = path.string();
    for (const auto& [lang, path] : lemma_files) kv[fmt::format("preprocess.lemmas.{}", to_string(lang))] = path.string();
    return render_key_values(kv);
}

// --- manifest ------------------------------------------------------------

RunManifest::RunManifest(fs::path path) : path_(std::move(path)) { fs::create_directories(path_.parent_path()); }

void RunManifest::record(std::string_view stage, std::string_view status, std::string_view detail) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
    std::string clean(detail);
    for (auto& c : clean)
        if (c == '\t' || c == '\n' || c == '\r') c = ' ';
    append_file(path_, tsv_line({stamp, std::string(stage), std::string(status), clean}));
}

std::vector<RunManifest::Event> RunManifest::events() const {
    std::vector<Event> out;
    if (!fs::exists(path_)) return out;
    for (const auto& line : split(read_file(path_), '\n')) {
        if (line.empty()) continue;
        auto f = split(line, '\t');
        f.resize(4);
        out.push_back(Event{f[0], f[1], f[2], f[3]});
    }
    return out;
}

// --- gating, submissions, evaluation ------------------------------------

std::vector<PredictionRecord> apply_gating(std::span<const PredictionRecord> categorizer,
                                           const std::map<std::string, std::string>& task1_labels) {
    const auto space = LabelSpace::task2_end_to_end();
    std::vector<PredictionRecord> out;
    std::vector<std::string> missing;
    for (const auto& r : categorizer) {
        auto it = task1_labels.find(r.example_id);
        if (it == task1_labels.end()) {
            missing.push_back(r.example_id);
            continue;
        }
        PredictionRecord e{r.example_id, r.model_id, ScoreVector{space, std::vector<double>(space.size(), 0.0)}, ""};
        if (it->second == kNonSexist) {
            e.label = std::string(kNonSexist);
            e.scores.values[0] = 1.0;
        } else {
            e.label = r.label;
            for (std::size_t l = 0; l < r.scores.values.size(); ++l)
                e.scores.values[space.require_index(r.scores.space[l])] = r.scores.values[l];
        }
        out.push_back(std::move(e));
    }
    if (!missing.empty())
        throw CoverageError(fmt::format("gating source lacks {} example(s): {}", missing.size(), join(missing, ",")));
    return out;
}

std::vector<SubmissionRow> make_submission(std::span<const PredictionRecord> predictions, const Dataset& test) {
    std::map<std::string_view, const PredictionRecord*> by_id;
    std::vector<std::string> duplicates, unknown, missing;
    for (const auto& r : predictions) {
        if (!by_id.emplace(r.example_id, &r).second) duplicates.push_back(r.example_id);
        if (!test.find(r.example_id)) unknown.push_back(r.example_id);
    }
    std::vector<SubmissionRow> rows;
    for (const auto& ex : test) {
        auto it = by_id.find(ex.id);
        if (it == by_id.end()) missing.push_back(ex.id);
        else rows.push_back({ex.id, it->second->label});
    }
    if (!duplicates.empty() || !unknown.empty() || !missing.empty())
        throw CoverageError(fmt::format("submission does not cover the test set exactly: missing [{}] duplicated [{}] unknown [{}]",
                                        join(missing, ","), join(duplicates, ","), join(unknown, ",")));
    return rows;
}

void write_submission(std::span<const SubmissionRow> rows, const fs::path& path) {
    std::string out = tsv_line({"id", "label"});
    std::set<std::string_view> seen;
    for (const auto& r : rows) {
        if (!seen.insert(r.id).second) throw CoverageError(fmt::format("duplicate submission id {}", r.id));
        check_tsv_field(r.id, "id");
        out += tsv_line({r.id, r.label});
    }
    write_file(path, out);
}

std::vector<SubmissionRow> read_submission(const fs::path& path) {
    const auto table = read_tsv(path);
    const auto id = table.column("id"), label = table.column("label");
    if (id == std::string::npos || label == std::string::npos)
        throw FormatError(path.string() + ": submission needs id and label columns");
    std::vector<SubmissionRow> rows;
    for (const auto& r : table.rows) rows.push_back({r[id], r[label]});
    return rows;
}

MetricsReport evaluate_predictions(std::span<const PredictionRecord> predictions, const Dataset& gold,
                                   const LabelSpace& space, Task task, std::optional<Source> source) {
    std::map<std::string_view, const PredictionRecord*> by_id;
    for (const auto& r : predictions) by_id.emplace(r.example_id, &r);
    std::vector<std::string> g, p, missing;
    for (const auto& ex : gold) {
        if (source && ex.source != *source) continue;
        auto label = gold_label(ex, space);
        if (!label) continue;
        auto it = by_id.find(ex.id);
        if (it == by_id.end()) {
            missing.push_back(ex.id);
            continue;
        }
        g.push_back(*label);
        p.push_back(it->second->label);
    }
    if (!missing.empty())
        throw CoverageError(fmt::format("predictions lack {} labeled example(s): {}", missing.size(), join(missing, ",")));
    return evaluate_labels(g, p, space, task);
}

// --- orchestration -------------------------------------------------------

namespace {

const std::vector<std::string> kTrainedKeys{"M1", "M2-en", "M3-en", "M2-es", "M3-es"};

std::string file_digest(const fs::path& p) { return sha256_hex(read_file(p)); }

std::string stage_file_name(std::string_view stage) {
    std::string s(stage);
    for (auto& c : s)
        if (c == ':' || c == '/') c = '_';
    return s + ".fp";
}

struct Context {
    RunConfig cfg;
    RunLayout layout;
    RunManifest manifest;
    RunOptions options;
    RunSummary summary;
    Dataset train, test;
    std::string test_digest;
    std::unique_ptr<TranslationProvider> provider;
    std::unique_ptr<TranslationCache> cache;

    Context(RunConfig c, RunOptions o)
        : cfg(std::move(c)), layout{cfg.out}, manifest(layout.manifest()), options(o) {
        summary.run_dir = layout.root;
    }

    /// Runs produce() unless a previous run left matching outputs behind.
    template <typename Fn>
    bool stage(const std::string& name, const std::string& fingerprint, const std::vector<fs::path>& outputs,
               Fn&& produce) {
        const auto fp_path = layout.cache() / "stages" / stage_file_name(name);
        const bool hit = fs::exists(fp_path) && read_file(fp_path) == fingerprint &&
                         std::all_of(outputs.begin(), outputs.end(), [](const fs::path& p) { return fs::exists(p); });
        if (hit) {
            manifest.record(name, "cache-hit");
            ++summary.cache_hits;
            return true;
        }
        manifest.record(name, "started");
        try {
            produce();
        } catch (const std::exception& e) {
            manifest.record(name, "failed", e.what());
            throw;
        }
        std::vector<std::string> rel;
        for (const auto& p : outputs) rel.push_back(p.lexically_relative(layout.root).string());
        write_file(fp_path, fingerprint);
        manifest.record(name, "completed", join(rel, ","));
        ++summary.stages_run;
        return false;
    }

    TestTranslation translation() {
        return TestTranslation{provider.get(), cache.get(), cfg.translation_options};
    }
};

std::unique_ptr<TranslationProvider> make_provider(const RunConfig& cfg) {
    switch (cfg.translation) {
        case TranslationKind::none: return nullptr;
        case TranslationKind::identity: return std::make_unique<IdentityProvider>();
        case TranslationKind::replay: return std::make_unique<ReplayProvider>(cfg.replay_file);
        case TranslationKind::http: {
            HttpProviderOptions o;
            o.endpoint = cfg.endpoint;
            if (!cfg.token_env.empty())
                if (const char* t = std::getenv(cfg.token_env.c_str())) o.token = t;
            return std::make_unique<HttpProvider>(o);
        }
    }
    return nullptr;
}

RunConfig prepared_config(RunConfig cfg) {
    cfg.validate();
    auto& p = cfg.backend.preprocess;
    for (const auto& [lang, path] : cfg.stopword_files) p.stopword_lists[lang] = load_stopwords(path);
    for (const auto& [lang, path] : cfg.lemma_files) p.lemma_tables[lang] = load_lemmas(path);
    return cfg;
}

void open_run(Context& ctx) {
    fs::create_directories(ctx.layout.root);
    write_file(ctx.layout.config_snapshot(), ctx.cfg.snapshot());
    ctx.train = load_dataset(ctx.cfg.train, DatasetRole::train);
    ctx.test = load_dataset(ctx.cfg.test, DatasetRole::test);
    ctx.test_digest = sha256_hex(render_dataset(ctx.test));
    ctx.provider = make_provider(ctx.cfg);
    if (ctx.provider) ctx.cache = std::make_unique<TranslationCache>(ctx.layout.cache() / "translations.tsv");
    ctx.manifest.record("run", "opened", fmt::format("task={} seed={}", to_string(ctx.cfg.task), ctx.cfg.seed));

    const auto dist = "train\n" + render_distribution(class_distribution(ctx.train)) + "\ntest\n" +
                      render_distribution(class_distribution(ctx.test));
    write_file(ctx.layout.reports() / "class_distribution.txt", dist);
}

std::vector<std::string> needed_keys(const RunConfig& cfg) {
    std::set<std::string> need;
    for (const auto& m : cfg.models)
        for (auto& k : underlying_models(model_spec(m))) need.insert(k);
    std::vector<std::string> out;
    for (const auto& k : kTrainedKeys)
        if (need.count(k)) out.push_back(k);
    return out;
}

BackendSpec backend_for(const RunConfig& cfg, std::string_view key) {
    auto spec = cfg.backend;
    if (spec.kind == BackendKind::transformer)
        spec.checkpoint = key == "M1" ? cfg.checkpoint_multilingual : key.ends_with("-en") ? cfg.checkpoint_en : cfg.checkpoint_es;
    return spec;
}

Language key_language(std::string_view key) { return key.ends_with("-en") ? Language::en : Language::es; }

Dataset training_data(Context& ctx, const Dataset& base, std::string_view key) {
    if (key == "M1") return base;
    const auto lang = key_language(key);
    if (key.starts_with("M2"))
        return base.filter([lang](const Example& ex) { return ex.language == lang; }, fmt::format("[{}]", to_string(lang)));
    if (!ctx.provider) throw ConfigError(fmt::format("{} needs a translation provider", key));
    return augment_with_translation(base, lang, *ctx.provider, *ctx.cache, ctx.cfg.translation_options);
}

struct TaskState {
    Task task;
    LabelSpace space;
    Dataset train;
    std::map<std::string, Dataset> data;
    std::map<std::string, SplitPlan> plans;
    std::map<std::string, SearchReport> searches;
    std::map<std::string, TrainedModel> models;
    std::map<std::string, std::vector<PredictionRecord>> predictions;  // strategy -> records
    std::map<std::string, std::vector<std::string>> winners;
    std::map<std::string, fs::path> prediction_files;
};

void run_searches(Context& ctx, TaskState& st) {
    const auto task_name = std::string(to_string(st.task));
    for (const auto& key : needed_keys(ctx.cfg)) {
        auto data = training_data(ctx, st.train, key);
        const auto backend = backend_for(ctx.cfg, key);
        const auto split_seed = derive_seed(ctx.cfg.seed, {"split", task_name, key});
        const auto fit_seed = derive_seed(ctx.cfg.seed, {"search", task_name, key});
        auto plan = make_split(data, ctx.cfg.split, split_seed);
        const auto points = enumerate_grid(ctx.cfg.grid, fit_seed);

        Fingerprinter fp;
        fp.add("search/1").add(training_fingerprint(backend, data, HyperParams{}, st.space));
        for (const auto& p : points) fp.add(p.describe()).add(static_cast<std::int64_t>(p.seed));
        fp.add(static_cast<std::int64_t>(plan.kind)).add(static_cast<std::int64_t>(plan.k)).add(plan.train_fraction);
        fp.add(static_cast<std::int64_t>(split_seed)).add(std::int64_t{ctx.cfg.epoch_sharing});
        const auto search_fp = fp.hex();

        const auto tsv = ctx.layout.reports(st.task) / "search" / (key + ".tsv");
        const auto stage = fmt::format("search:{}:{}", task_name, key);
        const bool hit = ctx.stage(stage, search_fp, {tsv}, [&] {
            SearchOptions opts{ctx.cfg.workers, ctx.cfg.epoch_sharing};
            auto report = make_search_report(key, st.task, run_grid(backend, data, plan, points, st.task, opts));
            write_file(tsv, report.render_tsv());
            st.searches[key] = std::move(report);
        });
        if (hit) st.searches[key] = parse_search_report(key, st.task, read_file(tsv), tsv.string());

        // Over/under-fitting check for the chosen configuration on the first partition.
        const auto& best = st.searches[key].best;
        const auto curve = ctx.layout.reports(st.task) / "curves" / (key + ".txt");
        ctx.stage(fmt::format("curve:{}:{}", task_name, key), search_fp + best.describe(), {curve}, [&] {
            auto part = materialize(data, plan, 0);
            auto c = learning_curve(backend, part.train, part.held_out, best, st.task);
            write_file(curve, fmt::format("{} {}\n", key, best.describe()) + render_learning_curve(c));
        });
        st.plans.emplace(key, std::move(plan));
        st.data.emplace(key, std::move(data));
    }

    std::vector<SearchReport> ordered;
    for (const auto& key : kTrainedKeys)
        if (auto it = st.searches.find(key); it != st.searches.end()) ordered.push_back(it->second);
    write_file(ctx.layout.reports(st.task) / "search_summary.txt", render_search_table(ordered));
    write_file(ctx.layout.reports(st.task) / "hyperparameters.txt", render_hyperparameter_distribution(ordered, ctx.cfg.grid));
}

void train_models(Context& ctx, TaskState& st) {
    const auto task_name = std::string(to_string(st.task));
    for (const auto& [key, data] : st.data) {
        const auto backend = backend_for(ctx.cfg, key);
        const auto& best = st.searches.at(key).best;
        const auto fingerprint = training_fingerprint(backend, data, best, st.space);
        const auto dir = ctx.layout.models(st.task) / key;
        const auto stage = fmt::format("train:{}:{}", task_name, key);
        auto train_now = [&] {
            auto m = train_final(backend, data, best, st.task);
            save_model(m, dir);
            st.models.insert_or_assign(key, std::move(m));
        };
        if (ctx.stage(stage, fingerprint, {dir / "manifest.txt"}, train_now)) {
            auto m = load_model(dir);
            if (!m.integrity_ok || m.fingerprint != fingerprint) {
                spdlog::warn("stored model {} failed verification; retraining", dir.string());
                ctx.manifest.record(stage, "invalidated", "stored model failed verification");
                train_now();
            } else {
                st.models.insert_or_assign(key, std::move(m));
            }
        }
    }
}

std::string model_digest(const TaskState& st, const ModelSpec& spec) {
    Fingerprinter fp;
    for (const auto& key : underlying_models(spec)) fp.add(key).add(st.models.at(key).fingerprint);
    return fp.hex();
}

void predict_strategies(Context& ctx, TaskState& st) {
    const auto task_name = std::string(to_string(st.task));
    TrainedModels models;
    for (const auto& [k, m] : st.models) models[k] = &m;
    for (const auto& spec : model_catalog()) {
        if (std::find(ctx.cfg.models.begin(), ctx.cfg.models.end(), spec.id) == ctx.cfg.models.end()) continue;
        Fingerprinter fp;
        fp.add("predict/1").add(spec.id).add(model_digest(st, spec)).add(ctx.test_digest);
        if (spec.translate_test) fp.add(ctx.provider ? ctx.provider->id() : "");
        const auto file = ctx.layout.predictions(st.task) / (spec.id + ".tsv");
        const bool hit = ctx.stage(fmt::format("predict:{}:{}", task_name, spec.id), fp.hex(), {file}, [&] {
            auto records = predict_with_model_spec(spec, models, ctx.test, ctx.translation());
            write_predictions(file, records);
            st.predictions[spec.id] = std::move(records);
        });
        if (hit) st.predictions[spec.id] = read_predictions(file);
        st.prediction_files[spec.id] = file;
    }
}

StandardizationStats standardization(Context& ctx, TaskState& st) {
    if (ctx.cfg.standardize_on == StandardizeOn::test) {
        std::map<std::string, std::vector<PredictionRecord>> members;
        for (const auto& spec : model_catalog())
            if (auto it = st.predictions.find(spec.id); it != st.predictions.end()) members[spec.id] = it->second;
        return compute_standardization(members);
    }
    // Reference scores: every strategy applied to its task's training data.
    const auto task_name = std::string(to_string(st.task));
    TrainedModels models;
    for (const auto& [k, m] : st.models) models[k] = &m;
    const auto train_digest = sha256_hex(render_dataset(st.train));
    std::map<std::string, std::vector<PredictionRecord>> reference;
    for (const auto& spec : model_catalog()) {
        if (!st.predictions.count(spec.id)) continue;
        Fingerprinter fp;
        fp.add("reference/1").add(spec.id).add(model_digest(st, spec)).add(train_digest);
        const auto file = ctx.layout.cache() / "reference" / task_name / (spec.id + ".tsv");
        const bool hit = ctx.stage(fmt::format("reference:{}:{}", task_name, spec.id), fp.hex(), {file}, [&] {
            auto records = predict_with_model_spec(spec, models, st.train, ctx.translation());
            write_predictions(file, records);
            reference[spec.id] = std::move(records);
        });
        if (hit) reference[spec.id] = read_predictions(file);
    }
    return compute_standardization(reference);
}

void run_ensembles(Context& ctx, TaskState& st) {
    const auto task_name = std::string(to_string(st.task));
    const auto catalog = ensemble_catalog(ctx.cfg.best_members);
    std::optional<StandardizationStats> stats;
    for (const auto& e : catalog) {
        const bool complete = std::all_of(e.members.begin(), e.members.end(),
                                          [&](const std::string& m) { return st.predictions.count(m) > 0; });
        if (!complete) {
            spdlog::warn("{} skipped: not every member was run", e.id);
            ctx.manifest.record(fmt::format("ensemble:{}:{}", task_name, e.id), "skipped", "members not run");
            continue;
        }
        if (!stats) stats = standardization(ctx, st);
        Fingerprinter fp;
        fp.add("ensemble/1").add(e.id).add(to_string(e.rule)).add(to_string(ctx.cfg.aggregation));
        fp.add(ctx.cfg.standardize_on == StandardizeOn::test ? "test" : "train");
        for (const auto& m : e.members) fp.add(m).add(file_digest(st.prediction_files.at(m)));
        // Standardization draws on every strategy, not only the members.
        for (const auto& [id, file] : st.prediction_files) fp.add(id).add(file_digest(file));
        const auto file = ctx.layout.predictions(st.task) / (e.id + ".tsv");
        const bool hit = ctx.stage(fmt::format("ensemble:{}:{}", task_name, e.id), fp.hex(), {file}, [&] {
            std::map<std::string, std::vector<PredictionRecord>> members;
            for (const auto& m : e.members) members[m] = st.predictions.at(m);
            auto out = run_ensemble(e, members, *stats, ctx.cfg.aggregation);
            write_predictions(file, out.records, out.winners);
            st.predictions[e.id] = std::move(out.records);
            st.winners[e.id] = std::move(out.winners);
        });
        if (hit) st.predictions[e.id] = read_predictions(file);
        st.prediction_files[e.id] = file;
    }
}

std::vector<std::string> strategy_order(const TaskState& st) {
    std::vector<std::string> ids;
    for (const auto& [id, _] : st.predictions) ids.push_back(id);
    std::sort(ids.begin(), ids.end(), [](const auto& a, const auto& b) { return model_order_less(a, b); });
    return ids;
}

void write_submission_stage(Context& ctx, Task task, const std::map<std::string, std::vector<PredictionRecord>>& preds,
                            const std::map<std::string, fs::path>& files) {
    const auto& id = ctx.cfg.gate_with;
    auto it = preds.find(id);
    if (it == preds.end()) {
        spdlog::warn("no {} predictions for {}; submission not written", id, to_string(task));
        return;
    }
    const auto path = ctx.layout.submissions() / fmt::format("{}.tsv", to_string(task));
    ctx.stage(fmt::format("submit:{}", to_string(task)), file_digest(files.at(id)) + ctx.test_digest, {path},
              [&] { write_submission(make_submission(it->second, ctx.test), path); });
}

std::string source_suffix(const RunOptions& o) {
    return o.source_filter ? fmt::format(".{}", to_string(*o.source_filter)) : "";
}

void evaluate_task(Context& ctx, const std::string& report_key, Task task, const LabelSpace& space,
                   const std::map<std::string, std::vector<PredictionRecord>>& preds,
                   const std::map<std::string, fs::path>& files, const Dataset& gold, const fs::path& dir,
                   const std::string& stem) {
    if (!gold.labeled() || gold.empty()) {
        spdlog::warn("test set is unlabeled; {} evaluation skipped", report_key);
        return;
    }
    const auto suffix = source_suffix(ctx.options);
    const auto comparison = dir / (stem + "comparison" + suffix + ".txt");
    const auto delta = dir / (stem + "delta" + suffix + ".txt");
    const auto tsv = dir / (stem + "metrics" + suffix + ".tsv");
    Fingerprinter fp;
    fp.add("evaluate/1").add(report_key).add(sha256_hex(render_dataset(gold))).add(suffix).add(ctx.cfg.reference_model);
    for (const auto& [id, file] : files) fp.add(id).add(file_digest(file));

    ReportSet reports;
    for (const auto& [id, records] : preds)
        reports[id] = evaluate_predictions(records, gold, space, task, ctx.options.source_filter);
    ctx.stage(fmt::format("evaluate:{}{}", report_key, suffix), fp.hex(), {comparison, tsv}, [&] {
        write_file(comparison, render_comparison_table(reports, task));
        write_file(tsv, render_metrics_tsv(reports));
        if (reports.count(ctx.cfg.reference_model))
            write_file(delta, render_delta_table(reports, ctx.cfg.reference_model, task));
    });
    ctx.summary.reports[report_key] = std::move(reports);
}

void run_task(Context& ctx, Task task, const std::optional<fs::path>& task1_predictions) {
    TaskState st{task, training_space(task), {}, {}, {}, {}, {}, {}, {}, {}};
    st.train = task == Task::task1
                   ? ctx.train.filter([](const Example& ex) { return ex.task1.has_value(); }, "[task1]")
                   : gate_for_task2_training(ctx.train);
    spdlog::info("{}: {} training examples", to_string(task), st.train.size());

    // Gating source is checked before any work.
    std::optional<fs::path> gate_file;
    if (task == Task::task2 && ctx.cfg.gating == Gating::predicted) {
        gate_file = task1_predictions ? *task1_predictions
                    : !ctx.cfg.gating_file.empty() ? ctx.cfg.gating_file
                                                   : ctx.layout.predictions(Task::task1) / (ctx.cfg.gate_with + ".tsv");
        if (!fs::exists(*gate_file))
            throw ArgumentError(fmt::format("missing gating source: task-1 predictions {} not found (run task1 first, "
                                            "set task2.gating_file or use task2.gating = gold)",
                                            gate_file->string()));
    }

    run_searches(ctx, st);
    if (ctx.options.until == StageLevel::search) return;
    train_models(ctx, st);
    if (ctx.options.until == StageLevel::train) return;
    predict_strategies(ctx, st);
    if (ctx.options.until == StageLevel::predict) return;
    run_ensembles(ctx, st);

    if (task == Task::task1) {
        write_submission_stage(ctx, task, st.predictions, st.prediction_files);
        if (ctx.options.until == StageLevel::evaluate)
            evaluate_task(ctx, "task1", task, LabelSpace::task1(), st.predictions, st.prediction_files, ctx.test,
                          ctx.layout.reports(task), "");
        return;
    }

    // Task 2 end-to-end: gate the categorizer outputs with task-1 labels.
    std::map<std::string, std::string> gate;
    std::string gate_digest;
    if (gate_file) {
        for (const auto& r : read_predictions(*gate_file)) gate[r.example_id] = r.label;
        gate_digest = file_digest(*gate_file);
    } else {
        for (const auto& ex : ctx.test) {
            if (!ex.task1) throw ArgumentError(fmt::format("gold gating needs a task1 label for test example {}", ex.id));
            gate[ex.id] = *ex.task1;
        }
        gate_digest = "gold:" + ctx.test_digest;
    }
    std::map<std::string, std::vector<PredictionRecord>> end_to_end;
    std::map<std::string, fs::path> e2e_files;
    for (const auto& id : strategy_order(st)) {
        const auto file = ctx.layout.end_to_end() / (id + ".tsv");
        const bool hit = ctx.stage(fmt::format("gate:task2:{}", id), gate_digest + file_digest(st.prediction_files.at(id)),
                                   {file}, [&] {
                                       auto records = apply_gating(st.predictions.at(id), gate);
                                       write_predictions(file, records);
                                       end_to_end[id] = std::move(records);
                                   });
        if (hit) end_to_end[id] = read_predictions(file);
        e2e_files[id] = file;
    }
    write_submission_stage(ctx, task, end_to_end, e2e_files);
    if (ctx.options.until != StageLevel::evaluate) return;

    evaluate_task(ctx, "task2", task, LabelSpace::task2_end_to_end(), end_to_end, e2e_files, ctx.test,
                  ctx.layout.reports(task), "");
    const auto gold_sexist = ctx.test.filter([](const Example& ex) { return ex.task1 && *ex.task1 == kSexist; }, "[sexist]");
    evaluate_task(ctx, "task2-categorizer", task, LabelSpace::task2_categories(), st.predictions, st.prediction_files,
                  gold_sexist, ctx.layout.reports(task), "categorizer_");
}

void write_combined_report(Context& ctx) {
    const auto suffix = source_suffix(ctx.options);
    std::string out;
    if (auto it = ctx.summary.reports.find("task1"); it != ctx.summary.reports.end())
        out += "task1: sexism identification\n" + render_comparison_table(it->second, Task::task1);
    if (auto it = ctx.summary.reports.find("task2"); it != ctx.summary.reports.end())
        out += std::string(out.empty() ? "" : "\n") + "task2: sexism categorization (end-to-end, six classes)\n" +
               render_comparison_table(it->second, Task::task2);
    if (!out.empty()) write_file(ctx.layout.reports() / ("comparison" + suffix + ".txt"), out);

    out.clear();
    for (const auto& [key, task] : {std::pair{"task1", Task::task1}, std::pair{"task2", Task::task2}}) {
        auto it = ctx.summary.reports.find(key);
        if (it == ctx.summary.reports.end() || !it->second.count(ctx.cfg.reference_model)) continue;
        out += std::string(out.empty() ? "" : "\n") + key + "\n" +
               render_delta_table(it->second, ctx.cfg.reference_model, task);
    }
    if (!out.empty()) write_file(ctx.layout.reports() / ("delta" + suffix + ".txt"), out);
}

RunSummary execute(RunConfig cfg, RunTask which, const RunOptions& options,
                   const std::optional<fs::path>& task1_predictions) {
    Context ctx(prepared_config(std::move(cfg)), options);
    try {
        open_run(ctx);
        if (which != RunTask::task2) run_task(ctx, Task::task1, {});
        if (which != RunTask::task1) run_task(ctx, Task::task2, task1_predictions);
        if (options.until == StageLevel::evaluate) write_combined_report(ctx);
    } catch (const Error& e) {
        ctx.manifest.record("run", "failed", fmt::format("{}: {}", to_string(e.category()), e.what()));
        throw;
    }
    ctx.manifest.record("run", "finished",
                        fmt::format("stages_run={} cache_hits={}", ctx.summary.stages_run, ctx.summary.cache_hits));
    return ctx.summary;
}

}  // namespace

RunSummary run_pipeline(const RunConfig& cfg, const RunOptions& options) { return execute(cfg, cfg.task, options, {}); }

RunSummary run_task1(const RunConfig& cfg, const RunOptions& options) { return execute(cfg, RunTask::task1, options, {}); }

RunSummary run_task2(const RunConfig& cfg, const std::optional<fs::path>& task1_predictions, const RunOptions& options) {
    return execute(cfg, RunTask::task2, options, task1_predictions);
}

RunSummary rebuild_reports(const RunConfig& raw, std::optional<Source> source_filter) {
    RunOptions options;
    options.source_filter = source_filter;
    Context ctx(prepared_config(raw), options);
    ctx.test = load_dataset(ctx.cfg.test, DatasetRole::test);
    auto load_dir = [](const fs::path& dir) {
        std::map<std::string, std::vector<PredictionRecord>> preds;
        std::map<std::string, fs::path> files;
        if (!fs::is_directory(dir)) return std::pair{preds, files};
        for (const auto& entry : fs::directory_iterator(dir)) {
            const auto id = entry.path().stem().string();
            if (entry.path().extension() != ".tsv" || !is_strategy(id)) continue;
            preds[id] = read_predictions(entry.path());
            files[id] = entry.path();
        }
        return std::pair{preds, files};
    };
    const auto which = ctx.cfg.task;
    if (which != RunTask::task2) {
        auto [preds, files] = load_dir(ctx.layout.predictions(Task::task1));
        if (preds.empty()) throw ArgumentError("no task1 predictions under " + ctx.layout.root.string());
        evaluate_task(ctx, "task1", Task::task1, LabelSpace::task1(), preds, files, ctx.test,
                      ctx.layout.reports(Task::task1), "");
    }
    if (which != RunTask::task1) {
        auto [preds, files] = load_dir(ctx.layout.end_to_end());
        if (preds.empty()) throw ArgumentError("no task2 predictions under " + ctx.layout.root.string());
        evaluate_task(ctx, "task2", Task::task2, LabelSpace::task2_end_to_end(), preds, files, ctx.test,
                      ctx.layout.reports(Task::task2), "");
        auto [cats, cat_files] = load_dir(ctx.layout.predictions(Task::task2));
        const auto gold_sexist =
            ctx.test.filter([](const Example& ex) { return ex.task1 && *ex.task1 == kSexist; }, "[sexist]");
        evaluate_task(ctx, "task2-categorizer", Task::task2, LabelSpace::task2_categories(), cats, cat_files,
                      gold_sexist, ctx.layout.reports(Task::task2), "categorizer_");
    }
    write_combined_report(ctx);
    return ctx.summary;
}

std::size_t precache_translations(const RunConfig& raw) {
    auto cfg = prepared_config(raw);
    auto provider = make_provider(cfg);
    if (!provider) return 0;
    RunLayout layout{cfg.out};
    TranslationCache cache(layout.cache() / "translations.tsv");
    const auto before = cache.size();
    const auto train = load_dataset(cfg.train, DatasetRole::train);
    const auto test = load_dataset(cfg.test, DatasetRole::test);
    std::set<Language> augment, translate_test;
    for (const auto& m : cfg.models) {
        const auto& s = model_spec(m);
        if (s.translate_train) {
            if (s.target_language) augment.insert(*s.target_language);
            else augment.insert(std::begin(kLanguages), std::end(kLanguages));
        }
        if (s.translate_test) translate_test.insert(*s.target_language);
    }
    for (auto lang : augment) augment_with_translation(train, lang, *provider, cache, cfg.translation_options);
    for (auto lang : translate_test) translate_test_set(test, lang, *provider, cache, cfg.translation_options);
    return cache.size() - before;
}

}  // namespace sexid
