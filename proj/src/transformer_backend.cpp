#include <algorithm>
#include <cmath>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "backend_detail.hpp"
#include "sexid/encoder.hpp"
#include "sexid/errors.hpp"
#include "sexid/hashing.hpp"
#include "sexid/kernels.hpp"
#include "sexid/rng.hpp"
#include "sexid/text_util.hpp"

namespace sexid::detail {
namespace {

constexpr std::string_view kRandomPrefix = "random:";
// Gradients are accumulated in this many fixed chunks per batch and summed in
// chunk order, so results do not depend on the number of hardware threads.
constexpr std::size_t kGradientChunks = 4;

std::filesystem::path checkpoint_dir(const BackendSpec& spec) {
    std::filesystem::path p(spec.checkpoint);
    if (p.is_relative() && !spec.checkpoint_root.empty()) p = spec.checkpoint_root / p;
    return p;
}

struct RandomEncoderSpec {
    EncoderConfig config;
    std::size_t vocab_max = 8000;
};

RandomEncoderSpec parse_random_spec(const BackendSpec& spec) {
    RandomEncoderSpec r;
    r.config.max_positions = spec.max_sequence_length;
    const auto body = std::string_view(spec.checkpoint).substr(kRandomPrefix.size());
    for (const auto& item : split(body, ',')) {
        if (trim(item).empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError(fmt::format("bad encoder option '{}'", item));
        const auto key = std::string(trim(std::string_view(item).substr(0, eq)));
        const auto value = trim(std::string_view(item).substr(eq + 1));
        const auto v = parse_int(value, key);
        if (key == "layers") r.config.layers = static_cast<int>(v);
        else if (key == "hidden") r.config.hidden = static_cast<int>(v);
        else if (key == "heads") r.config.heads = static_cast<int>(v);
        else if (key == "intermediate") r.config.intermediate = static_cast<int>(v);
        else if (key == "vocab_max") r.vocab_max = static_cast<std::size_t>(std::max(8LL, v));
        else throw ConfigError(fmt::format("unknown encoder option '{}'", key));
    }
    return r;
}

std::string prepared_text(const Example& ex, const BackendSpec& spec) {
    return preprocess_text(ex.text, ex.language, spec.preprocess);
}

std::vector<int> encode_example(const Example& ex, const BackendSpec& spec, const Vocabulary& vocab,
                                const EncoderConfig& cfg) {
    const int limit = std::min(spec.max_sequence_length, cfg.max_positions);
    return encode_text(prepared_text(ex, spec), vocab, cfg.lowercase, limit);
}

class TransformerScorer final : public Scorer {
public:
    TransformerScorer(BackendSpec spec, HeadSource head, Vocabulary vocab, ParameterSet params)
        : spec_(std::move(spec)), head_(head), vocab_(std::move(vocab)), params_(std::move(params)) {}

    std::vector<double> probabilities(const Example& ex) const override {
        const Encoder enc(params_, head_);
        return softmax(enc.logits(encode_example(ex, spec_, vocab_, params_.config())));
    }

    void save(const std::filesystem::path& dir) const override {
        auto kv = params_.config().to_key_values();
        kv["head_source"] = std::string(to_string(head_));
        kv["num_labels"] = std::to_string(params_.num_labels());
        write_file(dir / "config.txt", render_key_values(kv));
        vocab_.save(dir / "vocab.txt");
        params_.save(dir / "weights.bin");
    }

private:
    BackendSpec spec_;
    HeadSource head_;
    Vocabulary vocab_;
    ParameterSet params_;
};

}  // namespace

std::string checkpoint_digest(const BackendSpec& spec) {
    if (spec.kind != BackendKind::transformer || starts_with(spec.checkpoint, kRandomPrefix)) return {};
    const auto dir = checkpoint_dir(spec);
    Fingerprinter fp;
    for (const char* name : {"config.txt", "vocab.txt", "weights.bin"}) {
        const auto p = dir / name;
        if (!std::filesystem::exists(p)) throw LoadError(fmt::format("checkpoint {} lacks {}", dir.string(), name));
        fp.add(name).add(sha256_hex(read_file(p)));
    }
    return fp.hex();
}

std::shared_ptr<const Scorer> fit_transformer(const BackendSpec& spec, const LabeledBatch& data,
                                              const HyperParams& hp, const LabelSpace& labels,
                                              const ScorerObserver& on_epoch) {
    const auto n = data.examples.size();
    Rng rng(hp.seed);

    std::optional<Vocabulary> vocab;
    EncoderConfig cfg;
    std::optional<std::filesystem::path> weights;
    if (starts_with(spec.checkpoint, kRandomPrefix)) {
        auto r = parse_random_spec(spec);
        std::vector<std::string> texts;
        for (const auto* ex : data.examples) texts.push_back(prepared_text(*ex, spec));
        vocab.emplace(build_vocabulary(texts, r.config.lowercase, r.vocab_max));
        cfg = r.config;
        cfg.vocab_size = static_cast<int>(vocab->size());
    } else {
        const auto dir = checkpoint_dir(spec);
        if (!std::filesystem::is_directory(dir)) throw LoadError("checkpoint directory not found: " + dir.string());
        cfg = EncoderConfig::from_key_values(parse_key_values(read_file(dir / "config.txt"), (dir / "config.txt").string()));
        vocab.emplace(Vocabulary::load(dir / "vocab.txt"));
        if (static_cast<std::size_t>(cfg.vocab_size) != vocab->size())
            throw LoadError(fmt::format("checkpoint {}: vocab_size {} but vocab.txt has {} entries", dir.string(),
                                        cfg.vocab_size, vocab->size()));
        weights = dir / "weights.bin";
    }

    ParameterSet params(cfg, static_cast<int>(labels.size()));
    params.init_random(rng);
    // Pretrained weights replace everything they cover; the classification
    // head (and a pooler the checkpoint may lack) keep their random init.
    if (weights) params.load(*weights, false);

    std::vector<std::vector<int>> ids;
    ids.reserve(n);
    for (const auto* ex : data.examples) ids.push_back(encode_example(*ex, spec, *vocab, cfg));

    const auto batch = static_cast<std::size_t>(hp.batch_size);
    const long steps_per_epoch = static_cast<long>((n + batch - 1) / batch);
    const long total_steps = steps_per_epoch * hp.epochs;
    AdamW opt(params.data().size(), hp.learning_rate, spec.weight_decay, total_steps,
              static_cast<long>(std::floor(spec.warmup_fraction * static_cast<double>(total_steps))));

    std::vector<ParameterSet> chunk_grads(kGradientChunks, ParameterSet(cfg, static_cast<int>(labels.size())));
    std::vector<float> grad(params.data().size());
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    const auto H = static_cast<std::size_t>(cfg.hidden);
    const auto keep = static_cast<float>(1.0 - spec.dropout);

    for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += batch) {
            const auto end = std::min(n, start + batch);
            const auto count = end - start;
            std::vector<std::vector<float>> masks(count);
            if (spec.dropout > 0.0)
                for (auto& m : masks) {
                    m.resize(H);
                    for (auto& v : m) v = rng.uniform() < spec.dropout ? 0.0f : 1.0f / keep;
                }

            const Encoder enc(params, hp.head_source);
            std::vector<double> chunk_loss(kGradientChunks, 0.0);
            auto work = [&](std::size_t chunk) {
                chunk_grads[chunk].zero();
                const auto lo = start + count * chunk / kGradientChunks;
                const auto hi = start + count * (chunk + 1) / kGradientChunks;
                for (auto k = lo; k < hi; ++k)
                    chunk_loss[chunk] += enc.loss_and_gradient(ids[order[k]], data.labels[order[k]], masks[k - start],
                                                               chunk_grads[chunk]);
            };
            std::vector<std::thread> threads;
            for (std::size_t c = 1; c < kGradientChunks; ++c) threads.emplace_back(work, c);
            work(0);
            for (auto& t : threads) t.join();

            std::fill(grad.begin(), grad.end(), 0.0f);
            for (std::size_t c = 0; c < kGradientChunks; ++c) {
                kernels::axpy(1.0f, chunk_grads[c].data(), grad);
                epoch_loss += chunk_loss[c];
            }
            kernels::scale(1.0f / static_cast<float>(count), grad);
            opt.step(params.data(), grad);
        }
        spdlog::debug("transformer epoch {}/{}: mean loss {:.4f}", epoch, hp.epochs, epoch_loss / static_cast<double>(n));
        if (on_epoch) on_epoch(epoch, std::make_shared<TransformerScorer>(spec, hp.head_source, *vocab, params));
    }
    return std::make_shared<TransformerScorer>(spec, hp.head_source, std::move(*vocab), std::move(params));
}

std::shared_ptr<const Scorer> load_transformer(const BackendSpec& spec, const LabelSpace& labels,
                                               const std::filesystem::path& dir) {
    const auto cfg_path = dir / "config.txt";
    if (!std::filesystem::exists(cfg_path)) throw LoadError("missing " + cfg_path.string());
    auto kv = parse_key_values(read_file(cfg_path), cfg_path.string());
    const auto cfg = EncoderConfig::from_key_values(kv);
    const auto head = parse_head_source(kv["head_source"]);
    if (!head) throw LoadError(cfg_path.string() + ": bad head_source");
    if (kv["num_labels"] != std::to_string(labels.size()))
        throw LoadError(cfg_path.string() + ": label count does not match the manifest");
    ParameterSet params(cfg, static_cast<int>(labels.size()));
    params.load(dir / "weights.bin", true);
    return std::make_shared<TransformerScorer>(spec, *head, Vocabulary::load(dir / "vocab.txt"), std::move(params));
}

}  // namespace sexid::detail
