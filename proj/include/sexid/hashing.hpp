#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

namespace sexid {

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// 64-bit FNV-1a. Used for feature hashing, where speed matters and
/// collisions only cost accuracy.
constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Incremental SHA-256 over length-prefixed fields, so ("ab","c") and
/// ("a","bc") hash differently.
class Fingerprinter {
public:
    Fingerprinter();
    ~Fingerprinter();
    Fingerprinter(const Fingerprinter&) = delete;
    Fingerprinter& operator=(const Fingerprinter&) = delete;

    Fingerprinter& add(std::string_view field);
    Fingerprinter& add(std::int64_t v);
    Fingerprinter& add(double v);

    std::string hex();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Stable 64-bit seed derived from a global seed and a path of names,
/// e.g. derive_seed(13, {"search", "M2-en"}).
std::uint64_t derive_seed(std::uint64_t global_seed, std::initializer_list<std::string_view> path);

}  // namespace sexid
