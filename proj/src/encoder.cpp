#include "sexid/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include <fmt/format.h>

#include "sexid/errors.hpp"
#include "sexid/kernels.hpp"
#include "sexid/rng.hpp"
#include "sexid/text_util.hpp"

namespace sexid {

// --- config --------------------------------------------------------------

void EncoderConfig::validate() const {
    if (vocab_size <= 0 || hidden <= 0 || layers <= 0 || heads <= 0 || intermediate <= 0 || max_positions <= 0 ||
        type_vocab <= 0)
        throw ConfigError("encoder dimensions must be positive");
    if (hidden % heads != 0)
        throw ConfigError(fmt::format("hidden size {} is not divisible by {} heads", hidden, heads));
}

std::map<std::string, std::string> EncoderConfig::to_key_values() const {
    return {{"vocab_size", std::to_string(vocab_size)},
            {"hidden", std::to_string(hidden)},
            {"layers", std::to_string(layers)},
            {"heads", std::to_string(heads)},
            {"intermediate", std::to_string(intermediate)},
            {"max_positions", std::to_string(max_positions)},
            {"type_vocab", std::to_string(type_vocab)},
            {"layer_norm_eps", format_real(layer_norm_eps)},
            {"lowercase", lowercase ? "true" : "false"}};
}

EncoderConfig EncoderConfig::from_key_values(const std::map<std::string, std::string>& kv) {
    EncoderConfig c;
    auto get_int = [&](const char* key, int& out) {
        if (auto it = kv.find(key); it != kv.end()) out = static_cast<int>(parse_int(it->second, key));
    };
    get_int("vocab_size", c.vocab_size);
    get_int("hidden", c.hidden);
    get_int("layers", c.layers);
    get_int("heads", c.heads);
    get_int("intermediate", c.intermediate);
    get_int("max_positions", c.max_positions);
    get_int("type_vocab", c.type_vocab);
    if (auto it = kv.find("layer_norm_eps"); it != kv.end())
        c.layer_norm_eps = static_cast<float>(parse_real(it->second, "layer_norm_eps"));
    if (auto it = kv.find("lowercase"); it != kv.end()) c.lowercase = it->second == "true" || it->second == "1";
    return c;
}

// --- tokenizer -----------------------------------------------------------

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<int>(i));
    auto need = [&](std::string_view t) {
        auto id = find(t);
        if (!id) throw LoadError(fmt::format("vocabulary lacks special token {}", t));
        return *id;
    };
    unk_ = need(kUnk);
    cls_ = need(kCls);
    sep_ = need(kSep);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw LoadError("vocabulary not found: " + path.string());
    auto lines = split(read_file(path), '\n');
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    for (auto& l : lines)
        if (!l.empty() && l.back() == '\r') l.pop_back();
    return Vocabulary(std::move(lines));
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::string out;
    for (const auto& t : tokens_) out += t + "\n";
    write_file(path, out);
}

std::optional<int> Vocabulary::find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

namespace {

// Decodes one UTF-8 code point starting at i; invalid bytes decode as
// themselves so the tokenizer never throws on bad input.
char32_t decode_utf8(std::string_view s, std::size_t& i) {
    auto c = static_cast<unsigned char>(s[i]);
    auto cont = [&](std::size_t k) -> unsigned { return static_cast<unsigned char>(s[i + k]) & 0x3F; };
    if (c < 0x80) {
        i += 1;
        return c;
    }
    if ((c >> 5) == 0x6 && i + 1 < s.size()) {
        char32_t cp = ((c & 0x1F) << 6) | cont(1);
        i += 2;
        return cp;
    }
    if ((c >> 4) == 0xE && i + 2 < s.size()) {
        char32_t cp = ((c & 0x0F) << 12) | (cont(1) << 6) | cont(2);
        i += 3;
        return cp;
    }
    if ((c >> 3) == 0x1E && i + 3 < s.size()) {
        char32_t cp = ((c & 0x07) << 18) | (cont(1) << 12) | (cont(2) << 6) | cont(3);
        i += 4;
        return cp;
    }
    i += 1;
    return c;
}

void encode_utf8(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

bool is_whitespace(char32_t cp) {
    return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == 0xA0 || cp == 0x3000 ||
           (cp >= 0x2000 && cp <= 0x200A);
}

bool is_control(char32_t cp) {
    if (cp == '\t' || cp == '\n' || cp == '\r') return false;
    return cp < 0x20 || cp == 0x7F || (cp >= 0x80 && cp < 0xA0) || cp == 0xFFFD;
}

bool is_punctuation(char32_t cp) {
    if ((cp >= 33 && cp <= 47) || (cp >= 58 && cp <= 64) || (cp >= 91 && cp <= 96) || (cp >= 123 && cp <= 126))
        return true;
    // Latin-1 punctuation (¡ « · » ¿ ...) and the general punctuation block.
    if (cp == 0xA1 || cp == 0xA7 || cp == 0xAB || cp == 0xB6 || cp == 0xB7 || cp == 0xBB || cp == 0xBF) return true;
    return cp >= 0x2010 && cp <= 0x2027;
}

char32_t lower(char32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 32;
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;
    return cp;
}

// Base letter after canonical decomposition for the precomposed Latin-1
// lowercase letters; combining marks are dropped. Letters without a
// decomposition (ø, æ, ß) are kept.
char32_t strip_accent(char32_t cp) {
    if (cp >= 0x300 && cp <= 0x36F) return 0;  // combining diacritics
    switch (cp) {
        case 0xE0: case 0xE1: case 0xE2: case 0xE3: case 0xE4: case 0xE5: return 'a';
        case 0xE7: return 'c';
        case 0xE8: case 0xE9: case 0xEA: case 0xEB: return 'e';
        case 0xEC: case 0xED: case 0xEE: case 0xEF: return 'i';
        case 0xF1: return 'n';
        case 0xF2: case 0xF3: case 0xF4: case 0xF5: case 0xF6: return 'o';
        case 0xF9: case 0xFA: case 0xFB: case 0xFC: return 'u';
        case 0xFD: case 0xFF: return 'y';
        default: return cp;
    }
}

}  // namespace

std::vector<std::string> basic_tokenize(std::string_view text, bool lowercase) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) tokens.push_back(std::move(current));
        current.clear();
    };
    for (std::size_t i = 0; i < text.size();) {
        char32_t cp = decode_utf8(text, i);
        if (cp == 0 || is_control(cp)) continue;
        if (is_whitespace(cp)) {
            flush();
            continue;
        }
        if (lowercase) {
            cp = strip_accent(lower(cp));
            if (cp == 0) continue;
        }
        if (is_punctuation(cp)) {
            flush();
            std::string p;
            encode_utf8(cp, p);
            tokens.push_back(std::move(p));
            continue;
        }
        encode_utf8(cp, current);
    }
    flush();
    return tokens;
}

std::vector<int> wordpiece(std::string_view word, const Vocabulary& vocab, std::size_t max_chars) {
    std::vector<std::size_t> bounds;  // code point boundaries
    for (std::size_t i = 0; i < word.size();) {
        bounds.push_back(i);
        decode_utf8(word, i);
    }
    bounds.push_back(word.size());
    if (bounds.size() - 1 > max_chars) return {vocab.unk()};

    std::vector<int> pieces;
    std::size_t start = 0;
    const std::size_t n = bounds.size() - 1;
    while (start < n) {
        std::size_t end = n;
        std::optional<int> found;
        while (start < end) {
            std::string sub(word.substr(bounds[start], bounds[end] - bounds[start]));
            if (start > 0) sub = "##" + sub;
            if ((found = vocab.find(sub))) break;
            --end;
        }
        if (!found) return {vocab.unk()};
        pieces.push_back(*found);
        start = end;
    }
    return pieces;
}

std::vector<int> encode_text(std::string_view text, const Vocabulary& vocab, bool lowercase, int max_length) {
    if (max_length < 2) throw ConfigError("max sequence length must allow [CLS] and [SEP]");
    std::vector<int> ids{vocab.cls()};
    const auto budget = static_cast<std::size_t>(max_length - 1);
    for (const auto& word : basic_tokenize(text, lowercase)) {
        for (int id : wordpiece(word, vocab)) {
            if (ids.size() >= budget) break;
            ids.push_back(id);
        }
        if (ids.size() >= budget) break;
    }
    ids.push_back(vocab.sep());
    return ids;
}

Vocabulary build_vocabulary(const std::vector<std::string>& texts, bool lowercase, std::size_t max_size) {
    std::map<std::string, std::size_t> freq;
    for (const auto& t : texts)
        for (auto& w : basic_tokenize(t, lowercase)) ++freq[w];
    std::vector<std::pair<std::string, std::size_t>> words(freq.begin(), freq.end());
    std::stable_sort(words.begin(), words.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> tokens{std::string(Vocabulary::kPad), std::string(Vocabulary::kUnk),
                                    std::string(Vocabulary::kCls), std::string(Vocabulary::kSep), "[MASK]"};
    for (auto& [w, _] : words) {
        if (tokens.size() >= max_size) break;
        tokens.push_back(w);
    }
    return Vocabulary(std::move(tokens));
}

// --- parameters ----------------------------------------------------------

std::size_t TensorRef::numel() const noexcept {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

namespace {

std::string layer_name(int l, std::string_view suffix) { return fmt::format("layer.{}.{}", l, suffix); }

}  // namespace

ParameterSet::ParameterSet(const EncoderConfig& cfg, int num_labels) : cfg_(cfg), num_labels_(num_labels) {
    cfg.validate();
    if (num_labels < 1) throw ConfigError("classifier needs at least one label");
    const int H = cfg.hidden, I = cfg.intermediate;
    add("embeddings.word", {cfg.vocab_size, H});
    add("embeddings.position", {cfg.max_positions, H});
    add("embeddings.token_type", {cfg.type_vocab, H});
    add("embeddings.ln.gamma", {H});
    add("embeddings.ln.beta", {H});
    for (int l = 0; l < cfg.layers; ++l) {
        for (const char* proj : {"attn.query", "attn.key", "attn.value", "attn.output"}) {
            add(layer_name(l, std::string(proj) + ".weight"), {H, H});
            add(layer_name(l, std::string(proj) + ".bias"), {H});
        }
        add(layer_name(l, "attn.ln.gamma"), {H});
        add(layer_name(l, "attn.ln.beta"), {H});
        add(layer_name(l, "ffn.in.weight"), {I, H});
        add(layer_name(l, "ffn.in.bias"), {I});
        add(layer_name(l, "ffn.out.weight"), {H, I});
        add(layer_name(l, "ffn.out.bias"), {H});
        add(layer_name(l, "ffn.ln.gamma"), {H});
        add(layer_name(l, "ffn.ln.beta"), {H});
    }
    add("pooler.weight", {H, H});
    add("pooler.bias", {H});
    add("classifier.weight", {num_labels, H});
    add("classifier.bias", {num_labels});
}

void ParameterSet::add(const std::string& name, std::vector<int> shape) {
    TensorRef ref{data_.size(), std::move(shape)};
    data_.resize(data_.size() + ref.numel(), 0.0f);
    tensors_.emplace(name, std::move(ref));
}

const TensorRef& ParameterSet::ref(std::string_view name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ArgumentError(fmt::format("no tensor named '{}'", name));
    return it->second;
}

std::span<float> ParameterSet::view(std::string_view name) {
    const auto& r = ref(name);
    return std::span<float>(data_).subspan(r.offset, r.numel());
}

std::span<const float> ParameterSet::view(std::string_view name) const {
    const auto& r = ref(name);
    return std::span<const float>(data_).subspan(r.offset, r.numel());
}

namespace {

bool is_gain(std::string_view name) { return name.ends_with(".gamma"); }
bool is_bias(std::string_view name) { return name.ends_with(".bias") || name.ends_with(".beta"); }

void init_tensor(std::string_view name, std::span<float> v, Rng& rng) {
    if (is_gain(name)) std::fill(v.begin(), v.end(), 1.0f);
    else if (is_bias(name)) std::fill(v.begin(), v.end(), 0.0f);
    else
        for (auto& x : v) x = static_cast<float>(0.02 * rng.normal());
}

}  // namespace

void ParameterSet::init_random(Rng& rng) {
    // std::map iteration order is by name, so initialization is reproducible.
    for (const auto& [name, ref] : tensors_) init_tensor(name, view(name), rng);
}

void ParameterSet::init_head(Rng& rng) {
    init_tensor("classifier.weight", view("classifier.weight"), rng);
    init_tensor("classifier.bias", view("classifier.bias"), rng);
}

void ParameterSet::zero() { std::fill(data_.begin(), data_.end(), 0.0f); }

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}

std::uint32_t get_u32(std::string_view in, std::size_t& pos) {
    if (pos + 4 > in.size()) throw LoadError("truncated weight file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += 4;
    return v;
}

}  // namespace

void ParameterSet::save(const std::filesystem::path& path) const {
    static_assert(sizeof(float) == 4);
    std::string out = "SXW1";
    put_u32(out, static_cast<std::uint32_t>(tensors_.size()));
    for (const auto& [name, ref] : tensors_) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put_u32(out, static_cast<std::uint32_t>(ref.shape.size()));
        for (int d : ref.shape) put_u32(out, static_cast<std::uint32_t>(d));
        const auto v = view(name);
        for (float f : v) {
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32(out, bits);
        }
    }
    write_file(path, out);
}

void ParameterSet::load(const std::filesystem::path& path, bool require_all) {
    if (!std::filesystem::exists(path)) throw LoadError("weight file not found: " + path.string());
    const auto in = read_file(path);
    if (in.substr(0, 4) != "SXW1") throw LoadError(path.string() + ": not a weight file");
    std::size_t pos = 4;
    const auto count = get_u32(in, pos);
    std::set<std::string> seen;
    for (std::uint32_t t = 0; t < count; ++t) {
        const auto name_len = get_u32(in, pos);
        if (pos + name_len > in.size()) throw LoadError("truncated weight file");
        std::string name = in.substr(pos, name_len);
        pos += name_len;
        const auto ndims = get_u32(in, pos);
        std::vector<int> shape;
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < ndims; ++d) {
            shape.push_back(static_cast<int>(get_u32(in, pos)));
            numel *= static_cast<std::size_t>(shape.back());
        }
        if (pos + 4 * numel > in.size()) throw LoadError("truncated weight file");
        auto it = tensors_.find(name);
        if (it == tensors_.end()) {
            pos += 4 * numel;  // extra tensors (e.g. a pretraining head) are ignored
            continue;
        }
        if (it->second.shape != shape)
            throw LoadError(fmt::format("{}: tensor {} has shape mismatch", path.string(), name));
        auto dst = view(name);
        for (std::size_t i = 0; i < numel; ++i) {
            const auto bits = get_u32(in, pos);
            std::memcpy(&dst[i], &bits, 4);
        }
        seen.insert(name);
    }
    if (require_all)
        for (const auto& [name, _] : tensors_)
            if (!seen.count(name)) throw LoadError(fmt::format("{}: missing tensor {}", path.string(), name));
}

// --- forward / backward --------------------------------------------------

namespace {

using kernels::axpy;
using kernels::dot;

// Y[t, o] = X[t, :] . W[o, :] + b[o]
void linear(std::span<const float> X, int T, int in, std::span<const float> W, std::span<const float> b, int out,
            std::span<float> Y) {
    for (int t = 0; t < T; ++t) {
        const auto x = X.subspan(static_cast<std::size_t>(t) * in, in);
        for (int o = 0; o < out; ++o)
            Y[static_cast<std::size_t>(t) * out + o] = dot(x, W.subspan(static_cast<std::size_t>(o) * in, in)) + b[o];
    }
}

// Accumulates gradients of linear(); dX may be empty.
void linear_backward(std::span<const float> X, int T, int in, std::span<const float> W, int out,
                     std::span<const float> dY, std::span<float> dX, std::span<float> dW, std::span<float> db) {
    for (int t = 0; t < T; ++t) {
        const auto x = X.subspan(static_cast<std::size_t>(t) * in, in);
        for (int o = 0; o < out; ++o) {
            const float g = dY[static_cast<std::size_t>(t) * out + o];
            if (g == 0.0f) continue;
            db[o] += g;
            axpy(g, x, dW.subspan(static_cast<std::size_t>(o) * in, in));
            if (!dX.empty())
                axpy(g, W.subspan(static_cast<std::size_t>(o) * in, in), dX.subspan(static_cast<std::size_t>(t) * in, in));
        }
    }
}

void layer_norm(std::span<const float> X, int T, int H, std::span<const float> gamma, std::span<const float> beta,
                float eps, std::span<float> xhat, std::span<float> rstd, std::span<float> Y) {
    std::vector<float> centered(H);
    for (int t = 0; t < T; ++t) {
        const auto x = X.subspan(static_cast<std::size_t>(t) * H, H);
        const float mean = kernels::sum(x) / static_cast<float>(H);
        for (int i = 0; i < H; ++i) centered[i] = x[i] - mean;
        const float var = dot(centered, centered) / static_cast<float>(H);
        const float r = 1.0f / std::sqrt(var + eps);
        rstd[t] = r;
        for (int i = 0; i < H; ++i) {
            const float xh = centered[i] * r;
            xhat[static_cast<std::size_t>(t) * H + i] = xh;
            Y[static_cast<std::size_t>(t) * H + i] = xh * gamma[i] + beta[i];
        }
    }
}

// dX is overwritten; dgamma/dbeta accumulate.
void layer_norm_backward(std::span<const float> dY, std::span<const float> xhat, std::span<const float> rstd, int T,
                         int H, std::span<const float> gamma, std::span<float> dX, std::span<float> dgamma,
                         std::span<float> dbeta) {
    std::vector<float> dxhat(H);
    for (int t = 0; t < T; ++t) {
        const auto dy = dY.subspan(static_cast<std::size_t>(t) * H, H);
        const auto xh = xhat.subspan(static_cast<std::size_t>(t) * H, H);
        for (int i = 0; i < H; ++i) {
            dgamma[i] += dy[i] * xh[i];
            dbeta[i] += dy[i];
            dxhat[i] = dy[i] * gamma[i];
        }
        const float s1 = kernels::sum(dxhat);
        const float s2 = dot(dxhat, xh);
        const float scale = rstd[t] / static_cast<float>(H);
        for (int i = 0; i < H; ++i)
            dX[static_cast<std::size_t>(t) * H + i] = scale * (static_cast<float>(H) * dxhat[i] - s1 - xh[i] * s2);
    }
}

inline float gelu(float x) { return 0.5f * x * (1.0f + std::erf(x * static_cast<float>(std::numbers::sqrt2 / 2))); }

inline float gelu_grad(float x) {
    const float cdf = 0.5f * (1.0f + std::erf(x * static_cast<float>(std::numbers::sqrt2 / 2)));
    const float pdf = std::exp(-0.5f * x * x) * static_cast<float>(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
    return cdf + x * pdf;
}

void softmax_row(std::span<float> v) {
    const float m = kernels::max(v);
    float s = 0.0f;
    for (auto& x : v) {
        x = std::exp(x - m);
        s += x;
    }
    for (auto& x : v) x /= s;
}

}  // namespace

struct Encoder::Cache {
    struct Layer {
        std::vector<float> in, q, k, v, probs, ctx, r1_xhat, r1_rstd, h1, f, g, r2_xhat, r2_rstd, out;
    };
    int T = 0;
    std::vector<int> ids;
    std::vector<float> emb_xhat, emb_rstd, emb_out;
    std::vector<Layer> layers;
    std::vector<float> cls, pooled, head_in, logits;
};

Encoder::Encoder(const ParameterSet& params, HeadSource head) : p_(params), head_(head) {}

void Encoder::forward(std::span<const int> ids, std::span<const float> mask, Cache& c) const {
    const auto& cfg = p_.config();
    const int H = cfg.hidden, I = cfg.intermediate, NH = cfg.heads, dh = H / NH;
    const int T = static_cast<int>(ids.size());
    if (T == 0) throw ArgumentError("empty token sequence");
    if (T > cfg.max_positions)
        throw ArgumentError(fmt::format("sequence of {} tokens exceeds {} positions", T, cfg.max_positions));
    const auto TH = static_cast<std::size_t>(T) * H;
    c.T = T;
    c.ids.assign(ids.begin(), ids.end());

    std::vector<float> x0(TH);
    const auto word = p_.view("embeddings.word");
    const auto pos = p_.view("embeddings.position");
    const auto type = p_.view("embeddings.token_type").subspan(0, H);
    for (int t = 0; t < T; ++t) {
        if (ids[t] < 0 || ids[t] >= cfg.vocab_size) throw ArgumentError(fmt::format("token id {} out of range", ids[t]));
        for (int i = 0; i < H; ++i)
            x0[static_cast<std::size_t>(t) * H + i] = word[static_cast<std::size_t>(ids[t]) * H + i] +
                                                      pos[static_cast<std::size_t>(t) * H + i] + type[i];
    }
    c.emb_xhat.resize(TH);
    c.emb_rstd.resize(T);
    c.emb_out.resize(TH);
    layer_norm(x0, T, H, p_.view("embeddings.ln.gamma"), p_.view("embeddings.ln.beta"), cfg.layer_norm_eps, c.emb_xhat,
               c.emb_rstd, c.emb_out);

    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
    c.layers.resize(cfg.layers);
    std::span<const float> h = c.emb_out;
    for (int l = 0; l < cfg.layers; ++l) {
        auto& L = c.layers[l];
        auto w = [&](std::string_view s) { return p_.view(layer_name(l, s)); };
        L.in.assign(h.begin(), h.end());
        L.q.resize(TH);
        L.k.resize(TH);
        L.v.resize(TH);
        linear(L.in, T, H, w("attn.query.weight"), w("attn.query.bias"), H, L.q);
        linear(L.in, T, H, w("attn.key.weight"), w("attn.key.bias"), H, L.k);
        linear(L.in, T, H, w("attn.value.weight"), w("attn.value.bias"), H, L.v);

        L.probs.assign(static_cast<std::size_t>(NH) * T * T, 0.0f);
        L.ctx.assign(TH, 0.0f);
        for (int hd = 0; hd < NH; ++hd) {
            for (int i = 0; i < T; ++i) {
                auto row = std::span<float>(L.probs).subspan((static_cast<std::size_t>(hd) * T + i) * T, T);
                const auto qi = std::span<const float>(L.q).subspan(static_cast<std::size_t>(i) * H + hd * dh, dh);
                for (int j = 0; j < T; ++j)
                    row[j] = dot(qi, std::span<const float>(L.k).subspan(static_cast<std::size_t>(j) * H + hd * dh, dh)) *
                             scale;
                softmax_row(row);
                auto ci = std::span<float>(L.ctx).subspan(static_cast<std::size_t>(i) * H + hd * dh, dh);
                for (int j = 0; j < T; ++j)
                    axpy(row[j], std::span<const float>(L.v).subspan(static_cast<std::size_t>(j) * H + hd * dh, dh), ci);
            }
        }
        std::vector<float> r1(TH);
        linear(L.ctx, T, H, w("attn.output.weight"), w("attn.output.bias"), H, r1);
        for (std::size_t i = 0; i < TH; ++i) r1[i] += L.in[i];
        L.r1_xhat.resize(TH);
        L.r1_rstd.resize(T);
        L.h1.resize(TH);
        layer_norm(r1, T, H, w("attn.ln.gamma"), w("attn.ln.beta"), cfg.layer_norm_eps, L.r1_xhat, L.r1_rstd, L.h1);

        const auto TI = static_cast<std::size_t>(T) * I;
        L.f.resize(TI);
        L.g.resize(TI);
        linear(L.h1, T, H, w("ffn.in.weight"), w("ffn.in.bias"), I, L.f);
        for (std::size_t i = 0; i < TI; ++i) L.g[i] = gelu(L.f[i]);
        std::vector<float> r2(TH);
        linear(L.g, T, I, w("ffn.out.weight"), w("ffn.out.bias"), H, r2);
        for (std::size_t i = 0; i < TH; ++i) r2[i] += L.h1[i];
        L.r2_xhat.resize(TH);
        L.r2_rstd.resize(T);
        L.out.resize(TH);
        layer_norm(r2, T, H, w("ffn.ln.gamma"), w("ffn.ln.beta"), cfg.layer_norm_eps, L.r2_xhat, L.r2_rstd, L.out);
        h = L.out;
    }

    c.cls.assign(h.begin(), h.begin() + H);
    c.pooled.resize(H);
    linear(c.cls, 1, H, p_.view("pooler.weight"), p_.view("pooler.bias"), H, c.pooled);
    for (auto& x : c.pooled) x = std::tanh(x);

    c.head_in = head_ == HeadSource::pooler ? c.pooled : c.cls;
    if (!mask.empty()) kernels::mul(c.head_in, mask, c.head_in);
    c.logits.resize(p_.num_labels());
    linear(c.head_in, 1, H, p_.view("classifier.weight"), p_.view("classifier.bias"), p_.num_labels(), c.logits);
}

std::vector<float> Encoder::logits(std::span<const int> ids) const {
    Cache c;
    forward(ids, {}, c);
    return c.logits;
}

void Encoder::representations(std::span<const int> ids, std::vector<float>& cls, std::vector<float>& pooled) const {
    Cache c;
    forward(ids, {}, c);
    cls = c.cls;
    pooled = c.pooled;
}

namespace {

double cross_entropy(std::span<const float> logits, int gold, std::vector<double>* probs) {
    double m = logits[0];
    for (float z : logits) m = std::max(m, static_cast<double>(z));
    double s = 0.0;
    for (float z : logits) s += std::exp(static_cast<double>(z) - m);
    const double lse = m + std::log(s);
    if (probs) {
        probs->resize(logits.size());
        for (std::size_t i = 0; i < logits.size(); ++i) (*probs)[i] = std::exp(static_cast<double>(logits[i]) - lse);
    }
    return lse - static_cast<double>(logits[gold]);
}

}  // namespace

double Encoder::loss(std::span<const int> ids, int gold, std::span<const float> mask) const {
    Cache c;
    forward(ids, mask, c);
    return cross_entropy(c.logits, gold, nullptr);
}

double Encoder::loss_and_gradient(std::span<const int> ids, int gold, std::span<const float> mask,
                                  ParameterSet& grads) const {
    Cache c;
    forward(ids, mask, c);
    std::vector<double> probs;
    const double loss_value = cross_entropy(c.logits, gold, &probs);

    const auto& cfg = p_.config();
    const int H = cfg.hidden, I = cfg.intermediate, NH = cfg.heads, dh = H / NH, T = c.T;
    const int C = p_.num_labels();
    const auto TH = static_cast<std::size_t>(T) * H;

    std::vector<float> dlogits(C);
    for (int i = 0; i < C; ++i) dlogits[i] = static_cast<float>(probs[i] - (i == gold ? 1.0 : 0.0));

    std::vector<float> dhead(H, 0.0f);
    linear_backward(c.head_in, 1, H, p_.view("classifier.weight"), C, dlogits, dhead, grads.view("classifier.weight"),
                    grads.view("classifier.bias"));
    if (!mask.empty()) kernels::mul(dhead, mask, dhead);

    std::vector<float> dh_final(TH, 0.0f);
    auto dcls = std::span<float>(dh_final).subspan(0, H);
    if (head_ == HeadSource::pooler) {
        std::vector<float> dpre(H);
        for (int i = 0; i < H; ++i) dpre[i] = dhead[i] * (1.0f - c.pooled[i] * c.pooled[i]);
        linear_backward(c.cls, 1, H, p_.view("pooler.weight"), H, dpre, dcls, grads.view("pooler.weight"),
                        grads.view("pooler.bias"));
    } else {
        std::copy(dhead.begin(), dhead.end(), dcls.begin());
    }

    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
    std::vector<float> dstate = std::move(dh_final);
    for (int l = cfg.layers - 1; l >= 0; --l) {
        const auto& L = c.layers[l];
        auto w = [&](std::string_view s) { return p_.view(layer_name(l, s)); };
        auto gw = [&](std::string_view s) { return grads.view(layer_name(l, s)); };

        // out = LN2(g W2 + b2 + h1)
        std::vector<float> dr2(TH);
        layer_norm_backward(dstate, L.r2_xhat, L.r2_rstd, T, H, w("ffn.ln.gamma"), dr2, gw("ffn.ln.gamma"), gw("ffn.ln.beta"));
        const auto TI = static_cast<std::size_t>(T) * I;
        std::vector<float> dg(TI, 0.0f);
        linear_backward(L.g, T, I, w("ffn.out.weight"), H, dr2, dg, gw("ffn.out.weight"), gw("ffn.out.bias"));
        for (std::size_t i = 0; i < TI; ++i) dg[i] *= gelu_grad(L.f[i]);
        std::vector<float> dh1 = dr2;  // residual
        linear_backward(L.h1, T, H, w("ffn.in.weight"), I, dg, dh1, gw("ffn.in.weight"), gw("ffn.in.bias"));

        // h1 = LN1(ctx Wo + bo + in)
        std::vector<float> dr1(TH);
        layer_norm_backward(dh1, L.r1_xhat, L.r1_rstd, T, H, w("attn.ln.gamma"), dr1, gw("attn.ln.gamma"),
                            gw("attn.ln.beta"));
        std::vector<float> dctx(TH, 0.0f);
        linear_backward(L.ctx, T, H, w("attn.output.weight"), H, dr1, dctx, gw("attn.output.weight"),
                        gw("attn.output.bias"));

        std::vector<float> dq(TH, 0.0f), dk(TH, 0.0f), dv(TH, 0.0f), dA(T);
        for (int hd = 0; hd < NH; ++hd) {
            for (int i = 0; i < T; ++i) {
                const auto A = std::span<const float>(L.probs).subspan((static_cast<std::size_t>(hd) * T + i) * T, T);
                const auto dci = std::span<const float>(dctx).subspan(static_cast<std::size_t>(i) * H + hd * dh, dh);
                for (int j = 0; j < T; ++j) {
                    const auto off = static_cast<std::size_t>(j) * H + hd * dh;
                    dA[j] = dot(dci, std::span<const float>(L.v).subspan(off, dh));
                    axpy(A[j], dci, std::span<float>(dv).subspan(off, dh));
                }
                const float s = dot(A, dA);
                const auto qi = std::span<const float>(L.q).subspan(static_cast<std::size_t>(i) * H + hd * dh, dh);
                auto dqi = std::span<float>(dq).subspan(static_cast<std::size_t>(i) * H + hd * dh, dh);
                for (int j = 0; j < T; ++j) {
                    const float dS = A[j] * (dA[j] - s) * scale;
                    if (dS == 0.0f) continue;
                    const auto off = static_cast<std::size_t>(j) * H + hd * dh;
                    axpy(dS, std::span<const float>(L.k).subspan(off, dh), dqi);
                    axpy(dS, qi, std::span<float>(dk).subspan(off, dh));
                }
            }
        }
        std::vector<float> din = dr1;  // residual
        linear_backward(L.in, T, H, w("attn.query.weight"), H, dq, din, gw("attn.query.weight"), gw("attn.query.bias"));
        linear_backward(L.in, T, H, w("attn.key.weight"), H, dk, din, gw("attn.key.weight"), gw("attn.key.bias"));
        linear_backward(L.in, T, H, w("attn.value.weight"), H, dv, din, gw("attn.value.weight"), gw("attn.value.bias"));
        dstate = std::move(din);
    }

    std::vector<float> dx0(TH);
    layer_norm_backward(dstate, c.emb_xhat, c.emb_rstd, T, H, p_.view("embeddings.ln.gamma"), dx0,
                        grads.view("embeddings.ln.gamma"), grads.view("embeddings.ln.beta"));
    auto dword = grads.view("embeddings.word");
    auto dpos = grads.view("embeddings.position");
    auto dtype = grads.view("embeddings.token_type").subspan(0, H);
    for (int t = 0; t < T; ++t) {
        const auto row = std::span<const float>(dx0).subspan(static_cast<std::size_t>(t) * H, H);
        axpy(1.0f, row, dword.subspan(static_cast<std::size_t>(c.ids[t]) * H, H));
        axpy(1.0f, row, dpos.subspan(static_cast<std::size_t>(t) * H, H));
        axpy(1.0f, row, dtype);
    }
    return loss_value;
}

// --- optimizer -----------------------------------------------------------

AdamW::AdamW(std::size_t size, double learning_rate, double weight_decay, long total_steps, long warmup_steps)
    : m_(size, 0.0f), v_(size, 0.0f), lr_(learning_rate), wd_(weight_decay), total_(total_steps),
      warmup_(std::max(0L, warmup_steps)) {}

double AdamW::current_learning_rate() const noexcept {
    if (total_ <= 0) return lr_;
    if (t_ < warmup_) return lr_ * static_cast<double>(t_) / static_cast<double>(std::max(1L, warmup_));
    return lr_ * std::max(0.0, static_cast<double>(total_ - t_) / static_cast<double>(std::max(1L, total_ - warmup_)));
}

void AdamW::step(std::span<float> params, std::span<const float> grads) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const double lr = current_learning_rate();
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    const auto step_size = static_cast<float>(lr / bc1);
    const auto sqrt_bc2 = static_cast<float>(std::sqrt(bc2));
    const auto decay = static_cast<float>(1.0 - lr * wd_);
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] *= decay;
        m_[i] = static_cast<float>(beta1) * m_[i] + static_cast<float>(1.0 - beta1) * grads[i];
        v_[i] = static_cast<float>(beta2) * v_[i] + static_cast<float>(1.0 - beta2) * grads[i] * grads[i];
        params[i] -= step_size * m_[i] / (std::sqrt(v_[i]) / sqrt_bc2 + static_cast<float>(eps));
    }
}

}  // namespace sexid
