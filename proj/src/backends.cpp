#include "sexid/backends.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "backend_detail.hpp"
#include "sexid/errors.hpp"
#include "sexid/hashing.hpp"
#include "sexid/text_util.hpp"

namespace sexid {

std::string_view to_string(HeadSource h) noexcept { return h == HeadSource::pooler ? "pooler" : "hidden"; }

std::optional<HeadSource> parse_head_source(std::string_view s) noexcept {
    if (s == "hidden") return HeadSource::hidden;
    if (s == "pooler") return HeadSource::pooler;
    return std::nullopt;
}

std::string HyperParams::describe() const {
    return fmt::format("OB:{} / Lr:{} / Bs:{} / Ne:{}", to_string(head_source), format_decimal(learning_rate),
                       batch_size, epochs);
}

std::string_view to_string(BackendKind k) noexcept { return k == BackendKind::transformer ? "transformer" : "baseline"; }

std::optional<BackendKind> parse_backend_kind(std::string_view s) noexcept {
    if (s == "transformer") return BackendKind::transformer;
    if (s == "baseline") return BackendKind::baseline;
    return std::nullopt;
}

void BackendSpec::validate() const {
    preprocess.validate();
    if (max_sequence_length < 2) throw ConfigError("max_sequence_length must be at least 2");
    if (kind == BackendKind::baseline) {
        if (hash_dim < 1) throw ConfigError("hash_dim must be positive");
        if (!(baseline_lr_scale > 0.0)) throw ConfigError("baseline_lr_scale must be positive");
    } else {
        if (checkpoint.empty()) throw ConfigError("transformer backend needs a checkpoint");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
        if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
        if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw ConfigError("warmup_fraction must lie in [0, 1)");
    }
}

std::string BackendSpec::describe() const {
    if (kind == BackendKind::baseline)
        return fmt::format("baseline;hash_dim={};bigrams={};lr_scale={};prep={}", hash_dim, int(bigrams),
                           format_real(baseline_lr_scale), preprocess.describe());
    return fmt::format("transformer;checkpoint={};max_len={};dropout={};wd={};warmup={};prep={}", checkpoint,
                       max_sequence_length, format_real(dropout), format_real(weight_decay),
                       format_real(warmup_fraction), preprocess.describe());
}

std::size_t ScoreVector::argmax() const noexcept {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

std::vector<double> softmax(std::span<const float> logits) {
    std::vector<double> p(logits.size());
    if (logits.empty()) return p;
    double m = logits[0];
    for (float z : logits) m = std::max(m, static_cast<double>(z));
    double s = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) s += p[i] = std::exp(static_cast<double>(logits[i]) - m);
    for (auto& v : p) v /= s;
    return p;
}

std::string training_fingerprint(const BackendSpec& backend, const Dataset& train, const HyperParams& hp,
                                  const LabelSpace& labels) {
    Fingerprinter fp;
    fp.add("model/1").add(backend.describe()).add(detail::checkpoint_digest(backend));
    fp.add(to_string(hp.head_source)).add(hp.learning_rate).add(std::int64_t{hp.batch_size});
    fp.add(std::int64_t{hp.epochs}).add(static_cast<std::int64_t>(hp.seed));
    fp.add(serialize(labels));
    fp.add(static_cast<std::int64_t>(train.size()));
    for (const auto& ex : train) {
        fp.add(ex.id).add(to_string(ex.language)).add(ex.text);
        fp.add(gold_label(ex, labels).value_or(""));
    }
    return fp.hex();
}

namespace {

void validate_hyperparams(const HyperParams& hp) {
    if (!(hp.learning_rate > 0.0) || !std::isfinite(hp.learning_rate))
        throw ArgumentError("learning rate must be positive");
    if (hp.batch_size < 1) throw ArgumentError("batch size must be positive");
    if (hp.epochs < 1) throw ArgumentError("epoch count must be positive");
}

TrainedModel wrap(const BackendSpec& backend, const HyperParams& hp, const LabelSpace& labels, std::string fingerprint,
                  std::shared_ptr<const Scorer> scorer) {
    TrainedModel m;
    m.backend = backend;
    m.hyperparams = hp;
    m.label_space = labels;
    m.fingerprint = std::move(fingerprint);
    m.scorer = std::move(scorer);
    return m;
}

}  // namespace

TrainedModel fit(const BackendSpec& backend, const Dataset& train, const HyperParams& hp, const LabelSpace& labels,
                 const EpochObserver& on_epoch) {
    backend.validate();
    validate_hyperparams(hp);
    if (train.empty()) throw ArgumentError("cannot train on an empty dataset");

    detail::LabeledBatch data;
    for (const auto& ex : train) {
        const auto gold = gold_label(ex, labels);
        if (!gold)
            throw ValidationError(fmt::format("training example {} has no {} label", ex.id, to_string(labels.kind())));
        const auto idx = labels.index_of(*gold);
        if (!idx)
            throw ValidationError(fmt::format("training example {}: label '{}' is not in the label space [{}]", ex.id,
                                              *gold, labels.joined()));
        data.examples.push_back(&ex);
        data.labels.push_back(static_cast<int>(*idx));
    }

    detail::ScorerObserver observer;
    if (on_epoch)
        observer = [&](int epoch, std::shared_ptr<const Scorer> scorer) {
            auto snapshot_hp = hp;
            snapshot_hp.epochs = epoch;
            on_epoch(epoch, wrap(backend, snapshot_hp, labels, training_fingerprint(backend, train, snapshot_hp, labels),
                                 std::move(scorer)));
        };

    auto scorer = backend.kind == BackendKind::baseline ? detail::fit_baseline(backend, data, hp, labels, observer)
                                                        : detail::fit_transformer(backend, data, hp, labels, observer);
    return wrap(backend, hp, labels, training_fingerprint(backend, train, hp, labels), std::move(scorer));
}

std::vector<ScoreVector> predict_scores(const TrainedModel& m, std::span<const Example> batch) {
    if (!m.scorer) throw ArgumentError("model has no trained parameters");
    std::vector<ScoreVector> out;
    out.reserve(batch.size());
    for (const auto& ex : batch) {
        auto p = m.scorer->probabilities(ex);
        if (p.size() != m.label_space.size())
            throw ConsistencyError(fmt::format("model produced {} scores for {} labels", p.size(), m.label_space.size()));
        out.push_back(ScoreVector{m.label_space, std::move(p)});
    }
    return out;
}

std::vector<PredictionRecord> predict_labels(const TrainedModel& m, std::span<const Example> batch,
                                             std::string_view model_id) {
    auto scores = predict_scores(m, batch);
    std::vector<PredictionRecord> out;
    out.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto label = scores[i].argmax_label();
        out.push_back(PredictionRecord{batch[i].id, std::string(model_id), std::move(scores[i]), std::move(label)});
    }
    return out;
}

// --- persistence ---------------------------------------------------------

namespace {

constexpr const char* kManifest = "manifest.txt";

std::string directory_checksum(const std::filesystem::path& dir) {
    std::vector<std::string> names;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().filename() != kManifest)
            names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());
    Fingerprinter fp;
    for (const auto& name : names) fp.add(name).add(sha256_hex(read_file(dir / name)));
    return fp.hex();
}

std::string flag(bool b) { return b ? "true" : "false"; }

std::uint64_t parse_u64(std::string_view s, std::string_view what) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw LoadError(fmt::format("bad {} '{}'", what, s));
    return v;
}

}  // namespace

void save_model(TrainedModel& m, const std::filesystem::path& dir) {
    if (!m.scorer) throw ArgumentError("model has no trained parameters");
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
    std::filesystem::create_directories(dir);
    m.scorer->save(dir);

    const auto& p = m.backend.preprocess;
    for (const auto& [lang, words] : p.stopword_lists) {
        std::string out;
        for (const auto& w : words) out += w + "\n";
        write_file(dir / fmt::format("stopwords.{}.txt", to_string(lang)), out);
    }
    for (const auto& [lang, table] : p.lemma_tables) {
        std::map<std::string, std::string> sorted(table.begin(), table.end());
        std::string out;
        for (const auto& [form, lemma] : sorted) out += form + "\t" + lemma + "\n";
        write_file(dir / fmt::format("lemmas.{}.tsv", to_string(lang)), out);
    }

    const auto& b = m.backend;
    const auto& hp = m.hyperparams;
    std::map<std::string, std::string> kv{
        {"format_version", std::to_string(kModelFormatVersion)},
        {"backend.kind", std::string(to_string(b.kind))},
        {"backend.checkpoint", b.checkpoint},
        {"backend.max_sequence_length", std::to_string(b.max_sequence_length)},
        {"backend.hash_dim", std::to_string(b.hash_dim)},
        {"backend.baseline_lr_scale", format_real(b.baseline_lr_scale)},
        {"backend.bigrams", flag(b.bigrams)},
        {"backend.dropout", format_real(b.dropout)},
        {"backend.weight_decay", format_real(b.weight_decay)},
        {"backend.warmup_fraction", format_real(b.warmup_fraction)},
        {"preprocess.lowercase", flag(p.lowercase)},
        {"preprocess.tokenize", flag(p.tokenize)},
        {"preprocess.lemmatize", flag(p.lemmatize)},
        {"preprocess.remove_stopwords", flag(p.remove_stopwords)},
        {"hp.head_source", std::string(to_string(hp.head_source))},
        {"hp.learning_rate", format_real(hp.learning_rate)},
        {"hp.batch_size", std::to_string(hp.batch_size)},
        {"hp.epochs", std::to_string(hp.epochs)},
        {"hp.seed", std::to_string(hp.seed)},
        {"label_space", serialize(m.label_space)},
        {"fingerprint", m.fingerprint},
        {"checksum", directory_checksum(dir)},
    };
    write_file(dir / kManifest, render_key_values(kv));
    m.storage = dir;
}

TrainedModel load_model(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw LoadError("model directory not found: " + dir.string());
    const auto manifest_path = dir / kManifest;
    if (!std::filesystem::exists(manifest_path)) throw LoadError("missing " + manifest_path.string());
    std::map<std::string, std::string> kv;
    try {
        kv = parse_key_values(read_file(manifest_path), manifest_path.string());
    } catch (const Error& e) {
        throw LoadError(e.what());
    }
    auto get = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw LoadError(fmt::format("{}: missing key {}", manifest_path.string(), key));
        return it->second;
    };
    if (get("format_version") != std::to_string(kModelFormatVersion))
        throw LoadError(fmt::format("{}: unsupported format version {} (expected {})", manifest_path.string(),
                                    get("format_version"), kModelFormatVersion));

    TrainedModel m;
    try {
        auto kind = parse_backend_kind(get("backend.kind"));
        auto head = parse_head_source(get("hp.head_source"));
        if (!kind || !head) throw LoadError(manifest_path.string() + ": bad backend kind or head source");
        auto& b = m.backend;
        b.kind = *kind;
        b.checkpoint = get("backend.checkpoint");
        b.max_sequence_length = static_cast<int>(parse_int(get("backend.max_sequence_length"), "max_sequence_length"));
        b.hash_dim = static_cast<int>(parse_int(get("backend.hash_dim"), "hash_dim"));
        b.baseline_lr_scale = parse_real(get("backend.baseline_lr_scale"), "baseline_lr_scale");
        b.bigrams = get("backend.bigrams") == "true";
        b.dropout = parse_real(get("backend.dropout"), "dropout");
        b.weight_decay = parse_real(get("backend.weight_decay"), "weight_decay");
        b.warmup_fraction = parse_real(get("backend.warmup_fraction"), "warmup_fraction");
        auto& p = b.preprocess;
        p.lowercase = get("preprocess.lowercase") == "true";
        p.tokenize = get("preprocess.tokenize") == "true";
        p.lemmatize = get("preprocess.lemmatize") == "true";
        p.remove_stopwords = get("preprocess.remove_stopwords") == "true";
        for (auto lang : kLanguages) {
            const auto stop = dir / fmt::format("stopwords.{}.txt", to_string(lang));
            if (std::filesystem::exists(stop)) p.stopword_lists[lang] = load_stopwords(stop);
            const auto lem = dir / fmt::format("lemmas.{}.tsv", to_string(lang));
            if (std::filesystem::exists(lem)) p.lemma_tables[lang] = load_lemmas(lem);
        }
        auto& hp = m.hyperparams;
        hp.head_source = *head;
        hp.learning_rate = parse_real(get("hp.learning_rate"), "learning_rate");
        hp.batch_size = static_cast<int>(parse_int(get("hp.batch_size"), "batch_size"));
        hp.epochs = static_cast<int>(parse_int(get("hp.epochs"), "epochs"));
        hp.seed = parse_u64(get("hp.seed"), "seed");
        m.label_space = parse_label_space(get("label_space"));
    } catch (const LoadError&) {
        throw;
    } catch (const Error& e) {
        throw LoadError(fmt::format("{}: {}", manifest_path.string(), e.what()));
    }
    m.fingerprint = get("fingerprint");
    m.storage = dir;

    if (directory_checksum(dir) != get("checksum")) {
        spdlog::warn("model {}: checksum mismatch, stored files were modified", dir.string());
        m.integrity_ok = false;
    }
    try {
        m.scorer = m.backend.kind == BackendKind::baseline ? detail::load_baseline(m.backend, m.label_space, dir)
                                                           : detail::load_transformer(m.backend, m.label_space, dir);
    } catch (const LoadError&) {
        throw;
    } catch (const Error& e) {
        throw LoadError(fmt::format("model {}: {}", dir.string(), e.what()));
    }
    return m;
}

}  // namespace sexid
