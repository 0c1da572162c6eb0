#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sexid/corpus.hpp"
#include "sexid/labels.hpp"
#include "sexid/textprep.hpp"

namespace sexid {

/// Which encoder representation feeds the classification head.
enum class HeadSource {
    hidden,  // final-layer hidden state at the [CLS] position
    pooler,  // tanh-pooled sentence representation
};

std::string_view to_string(HeadSource h) noexcept;
std::optional<HeadSource> parse_head_source(std::string_view s) noexcept;

struct HyperParams {
    HeadSource head_source = HeadSource::hidden;
    double learning_rate = 5e-5;
    int batch_size = 32;
    int epochs = 1;
    std::uint64_t seed = 0;

    std::string describe() const;  // "OB:hidden / Lr:0.00005 / Bs:32 / Ne:5"

    friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

enum class BackendKind { transformer, baseline };
std::string_view to_string(BackendKind k) noexcept;
std::optional<BackendKind> parse_backend_kind(std::string_view s) noexcept;

struct BackendSpec {
    BackendKind kind = BackendKind::baseline;
    /// Encoder identifier: a checkpoint directory (absolute, or relative to
    /// checkpoint_root) or "random:<key=value,...>" for a freshly initialized
    /// encoder. Ignored by the baseline.
    std::string checkpoint;
    std::filesystem::path checkpoint_root;
    int max_sequence_length = 128;
    PreprocessConfig preprocess;

    // Baseline knobs.
    int hash_dim = 1024;
    /// The baseline is a linear model trained with Adam at a constant rate;
    /// encoder-scale learning rates are multiplied by this factor before use.
    double baseline_lr_scale = 1e3;
    bool bigrams = true;

    // Transformer knobs.
    double dropout = 0.1;
    double weight_decay = 0.0;
    double warmup_fraction = 0.0;

    /// Throws ConfigError on an inconsistent spec.
    void validate() const;
    std::string describe() const;
};

/// Per-label scores for one example. Declaration order of the label space is
/// the tie-break for argmax.
struct ScoreVector {
    LabelSpace space = LabelSpace::task1();
    std::vector<double> values;

    std::size_t argmax() const noexcept;
    const std::string& argmax_label() const { return space[argmax()]; }
    double max_value() const noexcept { return values[argmax()]; }
    double at(std::string_view label) const { return values[space.require_index(label)]; }
};

/// One model's output for one example.
struct PredictionRecord {
    std::string example_id;
    std::string model_id;
    ScoreVector scores;
    std::string label;
};

/// The trained parameters behind a model. Immutable once built.
class Scorer {
public:
    virtual ~Scorer() = default;
    /// Probability distribution over the model's label space.
    virtual std::vector<double> probabilities(const Example& ex) const = 0;
    virtual void save(const std::filesystem::path& dir) const = 0;
};

struct TrainedModel {
    BackendSpec backend;
    HyperParams hyperparams;
    LabelSpace label_space = LabelSpace::task1();
    std::string fingerprint;
    std::filesystem::path storage;  // empty until saved
    bool integrity_ok = true;       // false when a stored checksum did not match
    std::shared_ptr<const Scorer> scorer;
};

/// Hash of everything that determines a fitted model: backend spec,
/// hyperparameters (including seed), label space and the training examples.
std::string training_fingerprint(const BackendSpec& backend, const Dataset& train, const HyperParams& hp,
                                 const LabelSpace& labels);

/// Called after every epoch with the model as it stands; the snapshot's
/// hyperparameters report epochs = the epoch just finished.
using EpochObserver = std::function<void(int epoch, const TrainedModel& snapshot)>;

/// Throws ValidationError for a training label outside the label space and
/// ArgumentError for an empty dataset.
TrainedModel fit(const BackendSpec& backend, const Dataset& train, const HyperParams& hp, const LabelSpace& labels,
                 const EpochObserver& on_epoch = {});

std::vector<ScoreVector> predict_scores(const TrainedModel& m, std::span<const Example> batch);
std::vector<PredictionRecord> predict_labels(const TrainedModel& m, std::span<const Example> batch,
                                             std::string_view model_id);

inline constexpr int kModelFormatVersion = 1;

/// Model directory: manifest.txt (key=value) plus backend weight blobs.
void save_model(TrainedModel& m, const std::filesystem::path& dir);
/// Throws LoadError for a missing directory, an unknown format version or
/// corrupted weights. A checksum mismatch only logs a warning and clears
/// integrity_ok.
TrainedModel load_model(const std::filesystem::path& dir);

/// Numerically stable softmax in double precision.
std::vector<double> softmax(std::span<const float> logits);

}  // namespace sexid
