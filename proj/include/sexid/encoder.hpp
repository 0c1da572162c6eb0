#pragma once

// BERT-style transformer encoder with a classification head, forward and
// backward passes written out by hand over the dense kernels. Parameter
// names and layout follow the usual BERT checkpoint structure so converted
// pretrained weights load directly.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sexid/backends.hpp"

namespace sexid {

class Rng;

struct EncoderConfig {
    int vocab_size = 0;
    int hidden = 32;
    int layers = 2;
    int heads = 2;
    int intermediate = 64;
    int max_positions = 128;
    int type_vocab = 2;
    float layer_norm_eps = 1e-12f;
    bool lowercase = true;

    void validate() const;
    std::map<std::string, std::string> to_key_values() const;
    static EncoderConfig from_key_values(const std::map<std::string, std::string>& kv);
};

// --- tokenizer -----------------------------------------------------------

/// WordPiece vocabulary with the usual special tokens.
class Vocabulary {
public:
    static constexpr std::string_view kPad = "[PAD]";
    static constexpr std::string_view kUnk = "[UNK]";
    static constexpr std::string_view kCls = "[CLS]";
    static constexpr std::string_view kSep = "[SEP]";

    explicit Vocabulary(std::vector<std::string> tokens);
    static Vocabulary load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::size_t size() const noexcept { return tokens_.size(); }
    const std::string& token(std::size_t id) const { return tokens_[id]; }
    std::optional<int> find(std::string_view token) const;
    int unk() const noexcept { return unk_; }
    int cls() const noexcept { return cls_; }
    int sep() const noexcept { return sep_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
    int unk_ = 0, cls_ = 0, sep_ = 0;
};

/// Whitespace split, punctuation split, optional lowercasing with accent
/// stripping (as uncased BERT checkpoints expect).
std::vector<std::string> basic_tokenize(std::string_view text, bool lowercase);

/// Greedy longest-match-first WordPiece ("##" continuation prefix).
std::vector<int> wordpiece(std::string_view word, const Vocabulary& vocab, std::size_t max_chars = 100);

/// [CLS] pieces... [SEP], truncated to max_length ids in total.
std::vector<int> encode_text(std::string_view text, const Vocabulary& vocab, bool lowercase, int max_length);

/// Word-level vocabulary from training texts, most frequent first; used when
/// the encoder starts from random weights rather than a checkpoint.
Vocabulary build_vocabulary(const std::vector<std::string>& texts, bool lowercase, std::size_t max_size);

// --- parameters ----------------------------------------------------------

/// One named tensor inside a flat parameter buffer.
struct TensorRef {
    std::size_t offset = 0;
    std::vector<int> shape;
    std::size_t numel() const noexcept;
};

/// All encoder + head parameters in one contiguous buffer, so optimizer
/// state and gradients share a single layout.
class ParameterSet {
public:
    ParameterSet() = default;
    ParameterSet(const EncoderConfig& cfg, int num_labels);

    const EncoderConfig& config() const noexcept { return cfg_; }
    int num_labels() const noexcept { return num_labels_; }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }
    std::span<float> view(std::string_view name);
    std::span<const float> view(std::string_view name) const;
    const TensorRef& ref(std::string_view name) const;
    const std::map<std::string, TensorRef, std::less<>>& tensors() const noexcept { return tensors_; }

    /// Gaussian(0, 0.02) weights, zero biases, unit layer-norm gains.
    void init_random(Rng& rng);
    /// Reinitializes only the classification head.
    void init_head(Rng& rng);

    /// Binary tensor file: "SXW1", count, then (name, dims, float32 data).
    void save(const std::filesystem::path& path) const;
    /// Copies tensors present in the file; with require_all, every tensor in
    /// this set must be present. Shape mismatches throw LoadError.
    void load(const std::filesystem::path& path, bool require_all);

    /// Zeroes every value.
    void zero();

private:
    void add(const std::string& name, std::vector<int> shape);

    EncoderConfig cfg_;
    int num_labels_ = 0;
    std::vector<float> data_;
    std::map<std::string, TensorRef, std::less<>> tensors_;
};

/// Forward/backward over one unpadded sequence at a time.
class Encoder {
public:
    Encoder(const ParameterSet& params, HeadSource head);

    /// Classification logits; no dropout.
    std::vector<float> logits(std::span<const int> ids) const;

    /// Final-layer hidden state at position 0 and pooled output, for parity
    /// checks against reference implementations.
    void representations(std::span<const int> ids, std::vector<float>& cls, std::vector<float>& pooled) const;

    /// Cross-entropy loss for one example. Accumulates d(loss)/d(params)
    /// into grads (same layout as the parameter set). dropout_mask, if
    /// non-empty, scales the head input elementwise.
    double loss_and_gradient(std::span<const int> ids, int gold, std::span<const float> dropout_mask,
                             ParameterSet& grads) const;

    /// Loss only, with the same dropout convention.
    double loss(std::span<const int> ids, int gold, std::span<const float> dropout_mask) const;

private:
    struct Cache;
    void forward(std::span<const int> ids, std::span<const float> dropout_mask, Cache& c) const;

    const ParameterSet& p_;
    HeadSource head_;
};

/// Adam with decoupled weight decay. The learning rate warms up linearly
/// and then decays linearly to zero at total_steps; total_steps <= 0 keeps
/// it constant.
class AdamW {
public:
    AdamW(std::size_t size, double learning_rate, double weight_decay, long total_steps, long warmup_steps);
    void step(std::span<float> params, std::span<const float> grads);
    double current_learning_rate() const noexcept;

private:
    std::vector<float> m_, v_;
    double lr_, wd_;
    long total_, warmup_, t_ = 0;
};

}  // namespace sexid
