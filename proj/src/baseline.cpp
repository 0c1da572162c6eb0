// Hashed bag-of-n-grams softmax regression. Fast, deterministic and free of
// pretrained resources, so the whole pipeline can run on small fixtures.

#include <cmath>

#include <fmt/format.h>

#include "backend_detail.hpp"
#include "sexid/encoder.hpp"
#include "sexid/errors.hpp"
#include "sexid/hashing.hpp"
#include "sexid/kernels.hpp"
#include "sexid/rng.hpp"
#include "sexid/text_util.hpp"

namespace sexid::detail {
namespace {

std::vector<float> featurize(const Example& ex, const BackendSpec& spec) {
    const auto dim = static_cast<std::size_t>(spec.hash_dim);
    std::vector<float> x(dim, 0.0f);
    const auto tokens = tokenize_words(preprocess_text(ex.text, ex.language, spec.preprocess));
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        x[fnv1a64("u:" + tokens[i]) % dim] += 1.0f;
        if (spec.bigrams && i + 1 < tokens.size()) x[fnv1a64("b:" + tokens[i] + " " + tokens[i + 1]) % dim] += 1.0f;
    }
    const float norm = std::sqrt(kernels::dot(x, x));
    if (norm > 0.0f) kernels::scale(1.0f / norm, x);
    return x;
}

class BaselineScorer final : public Scorer {
public:
    BaselineScorer(BackendSpec spec, std::size_t classes, std::vector<float> weights, std::vector<float> bias)
        : spec_(std::move(spec)), classes_(classes), w_(std::move(weights)), b_(std::move(bias)) {}

    std::vector<double> probabilities(const Example& ex) const override {
        return softmax(logits(featurize(ex, spec_)));
    }

    std::vector<float> logits(std::span<const float> x) const {
        const auto dim = x.size();
        std::vector<float> z(classes_);
        for (std::size_t c = 0; c < classes_; ++c)
            z[c] = kernels::dot(x, std::span<const float>(w_).subspan(c * dim, dim)) + b_[c];
        return z;
    }

    void save(const std::filesystem::path& dir) const override {
        std::string out = fmt::format("{} {}\n", classes_, spec_.hash_dim);
        for (std::size_t c = 0; c < classes_; ++c) {
            std::vector<std::string> row{format_real(b_[c])};
            for (std::size_t j = 0; j < static_cast<std::size_t>(spec_.hash_dim); ++j)
                row.push_back(format_real(w_[c * spec_.hash_dim + j]));
            out += join(row, " ") + "\n";
        }
        write_file(dir / "baseline.weights", out);
    }

private:
    BackendSpec spec_;
    std::size_t classes_;
    std::vector<float> w_, b_;  // w_ is classes x hash_dim, row-major
};

}  // namespace

std::shared_ptr<const Scorer> fit_baseline(const BackendSpec& spec, const LabeledBatch& data, const HyperParams& hp,
                                           const LabelSpace& labels, const ScorerObserver& on_epoch) {
    const auto n = data.examples.size();
    const auto dim = static_cast<std::size_t>(spec.hash_dim);
    const auto classes = labels.size();
    std::vector<std::vector<float>> features;
    features.reserve(n);
    for (const auto* ex : data.examples) features.push_back(featurize(*ex, spec));

    std::vector<float> w(classes * dim, 0.0f), b(classes, 0.0f);
    std::vector<float> gw(w.size()), gb(classes);
    // Constant rate so that every epoch prefix is an exact shorter run.
    AdamW opt_w(w.size(), hp.learning_rate * spec.baseline_lr_scale, spec.weight_decay, 0, 0);
    AdamW opt_b(b.size(), hp.learning_rate * spec.baseline_lr_scale, 0.0, 0, 0);
    Rng rng(hp.seed);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(hp.batch_size)) {
            const auto end = std::min(n, start + static_cast<std::size_t>(hp.batch_size));
            std::fill(gw.begin(), gw.end(), 0.0f);
            std::fill(gb.begin(), gb.end(), 0.0f);
            const BaselineScorer current(spec, classes, w, b);
            for (auto k = start; k < end; ++k) {
                const auto i = order[k];
                const auto p = softmax(current.logits(features[i]));
                for (std::size_t c = 0; c < classes; ++c) {
                    const auto g = static_cast<float>(p[c] - (static_cast<int>(c) == data.labels[i] ? 1.0 : 0.0));
                    gb[c] += g;
                    kernels::axpy(g, features[i], std::span<float>(gw).subspan(c * dim, dim));
                }
            }
            const float inv = 1.0f / static_cast<float>(end - start);
            kernels::scale(inv, gw);
            kernels::scale(inv, gb);
            opt_w.step(w, gw);
            opt_b.step(b, gb);
        }
        if (on_epoch) on_epoch(epoch, std::make_shared<BaselineScorer>(spec, classes, w, b));
    }
    return std::make_shared<BaselineScorer>(spec, classes, std::move(w), std::move(b));
}

std::shared_ptr<const Scorer> load_baseline(const BackendSpec& spec, const LabelSpace& labels,
                                            const std::filesystem::path& dir) {
    const auto path = dir / "baseline.weights";
    if (!std::filesystem::exists(path)) throw LoadError("missing " + path.string());
    auto lines = split(read_file(path), '\n');
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty()) throw LoadError(path.string() + ": empty weight file");
    const auto dims = split(lines[0], ' ');
    if (dims.size() != 2) throw LoadError(path.string() + ": bad header");
    const auto classes = static_cast<std::size_t>(parse_int(dims[0], "classes"));
    const auto dim = static_cast<std::size_t>(parse_int(dims[1], "hash_dim"));
    if (classes != labels.size() || dim != static_cast<std::size_t>(spec.hash_dim) || lines.size() != classes + 1)
        throw LoadError(path.string() + ": dimensions do not match the manifest");
    std::vector<float> w(classes * dim), b(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        const auto values = split(lines[c + 1], ' ');
        if (values.size() != dim + 1) throw LoadError(fmt::format("{}: row {} has wrong width", path.string(), c));
        try {
            b[c] = static_cast<float>(parse_real(values[0], "bias"));
            for (std::size_t j = 0; j < dim; ++j) w[c * dim + j] = static_cast<float>(parse_real(values[j + 1], "weight"));
        } catch (const Error& e) {
            throw LoadError(fmt::format("{}: {}", path.string(), e.what()));
        }
    }
    return std::make_shared<BaselineScorer>(spec, classes, std::move(w), std::move(b));
}

}  // namespace sexid::detail
