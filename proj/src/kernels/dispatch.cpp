#include <atomic>
#include <cassert>
#include <cstdlib>
#include <string_view>

#include "sexid/kernels.hpp"

namespace sexid::kernels {

namespace {

struct Table {
    float (*dot)(const float*, const float*, std::size_t) noexcept;
    float (*sum)(const float*, std::size_t) noexcept;
    float (*max)(const float*, std::size_t) noexcept;
    void (*axpy)(float, const float*, float*, std::size_t) noexcept;
    void (*scale)(float, float*, std::size_t) noexcept;
    void (*mul)(const float*, const float*, float*, std::size_t) noexcept;
};

constexpr Table kScalar{scalar::dot, scalar::sum, scalar::max, scalar::axpy, scalar::scale, scalar::mul};
#if SEXID_HAVE_AVX2
constexpr Table kAvx2{avx2::dot, avx2::sum, avx2::max, avx2::axpy, avx2::scale, avx2::mul};
#endif

const Table& table_for(Isa isa) noexcept {
#if SEXID_HAVE_AVX2
    if (isa == Isa::avx2) return kAvx2;
#endif
    (void)isa;
    return kScalar;
}

Isa detect() noexcept {
    Isa best = isa_available(Isa::avx2) ? Isa::avx2 : Isa::scalar;
    if (const char* env = std::getenv("SEXID_SIMD"); env && std::string_view(env) == "scalar") best = Isa::scalar;
    return best;
}

std::atomic<Isa>& selected() noexcept {
    static std::atomic<Isa> isa{detect()};
    return isa;
}

const Table& active() noexcept { return table_for(selected().load(std::memory_order_relaxed)); }

}  // namespace

std::string_view to_string(Isa isa) noexcept {
    return isa == Isa::avx2 ? "avx2" : "scalar";
}

bool isa_available(Isa isa) noexcept {
    if (isa == Isa::scalar) return true;
#if SEXID_HAVE_AVX2 && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

Isa active_isa() noexcept { return selected().load(std::memory_order_relaxed); }

Isa force_isa(Isa isa) {
    if (!isa_available(isa)) isa = Isa::scalar;
    return selected().exchange(isa);
}

float dot(std::span<const float> a, std::span<const float> b) noexcept {
    assert(a.size() == b.size());
    return active().dot(a.data(), b.data(), a.size());
}

float sum(std::span<const float> x) noexcept { return active().sum(x.data(), x.size()); }

float max(std::span<const float> x) noexcept { return active().max(x.data(), x.size()); }

void axpy(float alpha, std::span<const float> x, std::span<float> y) noexcept {
    assert(x.size() == y.size());
    active().axpy(alpha, x.data(), y.data(), x.size());
}

void scale(float alpha, std::span<float> x) noexcept { active().scale(alpha, x.data(), x.size()); }

void mul(std::span<const float> a, std::span<const float> b, std::span<float> out) noexcept {
    assert(a.size() == b.size() && a.size() == out.size());
    active().mul(a.data(), b.data(), out.data(), a.size());
}

}  // namespace sexid::kernels
