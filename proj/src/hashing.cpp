#include "sexid/hashing.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <stdexcept>

#include <openssl/evp.h>

namespace sexid {

namespace {

std::string to_hex(const unsigned char* data, std::size_t n) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(2 * n, '0');
    for (std::size_t i = 0; i < n; ++i) {
        out[2 * i] = digits[data[i] >> 4];
        out[2 * i + 1] = digits[data[i] & 0xf];
    }
    return out;
}

}  // namespace

struct Fingerprinter::Impl {
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    ~Impl() { EVP_MD_CTX_free(ctx); }
};

Fingerprinter::Fingerprinter() : impl_(std::make_unique<Impl>()) {
    if (!impl_->ctx || EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 init failed");
}

Fingerprinter::~Fingerprinter() = default;

Fingerprinter& Fingerprinter::add(std::string_view field) {
    std::uint64_t n = field.size();
    unsigned char len[8];
    for (int i = 0; i < 8; ++i) len[i] = static_cast<unsigned char>(n >> (8 * i));
    EVP_DigestUpdate(impl_->ctx, len, sizeof len);
    EVP_DigestUpdate(impl_->ctx, field.data(), field.size());
    return *this;
}

Fingerprinter& Fingerprinter::add(std::int64_t v) {
    return add(std::to_string(v));
}

Fingerprinter& Fingerprinter::add(double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    return add(std::to_string(bits));
}

std::string Fingerprinter::hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(impl_->ctx, md, &len);
    EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr);
    return to_hex(md, len);
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    return to_hex(md, len);
}

std::uint64_t derive_seed(std::uint64_t global_seed, std::initializer_list<std::string_view> path) {
    Fingerprinter fp;
    fp.add(static_cast<std::int64_t>(global_seed));
    for (auto p : path) fp.add(p);
    auto h = fp.hex();
    std::uint64_t seed = 0;
    for (int i = 0; i < 16; ++i) {
        char c = h[static_cast<std::size_t>(i)];
        seed = (seed << 4) | static_cast<std::uint64_t>(c <= '9' ? c - '0' : c - 'a' + 10);
    }
    return seed;
}

}  // namespace sexid
