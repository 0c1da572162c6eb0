#include <doctest.h>

#include <bit>
#include <cmath>
#include <vector>

#include "sexid/kernels.hpp"
#include "sexid/rng.hpp"

using namespace sexid;
namespace k = sexid::kernels;

namespace {

std::vector<float> random_floats(Rng& rng, std::size_t n) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.normal() * std::pow(10.0, static_cast<double>(rng.below(5)) - 2.0));
    return v;
}

bool same_bits(float a, float b) { return std::bit_cast<std::uint32_t>(a) == std::bit_cast<std::uint32_t>(b); }

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!same_bits(a[i], b[i])) return false;
    return true;
}

}  // namespace

TEST_CASE("scalar kernels agree with a double-precision oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = static_cast<std::size_t>(rng.below(70));
        const auto a = random_floats(rng, n), b = random_floats(rng, n);
        double dot = 0.0, sum = 0.0, mag = 0.0, smag = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            dot += static_cast<double>(a[i]) * b[i];
            sum += a[i];
            mag += std::abs(static_cast<double>(a[i]) * b[i]);
            smag += std::abs(a[i]);
        }
        CHECK(std::abs(k::scalar::dot(a.data(), b.data(), n) - dot) <= 1e-5 * (mag + 1.0));
        CHECK(std::abs(k::scalar::sum(a.data(), n) - sum) <= 1e-5 * (smag + 1.0));
        if (n > 0) {
            float mx = a[0];
            for (auto x : a) mx = std::max(mx, x);
            CHECK(k::scalar::max(a.data(), n) == mx);
        }
        auto y = b;
        k::scalar::axpy(0.5f, a.data(), y.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == b[i] + 0.5f * a[i]);
        auto z = a;
        k::scalar::mul(a.data(), b.data(), z.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(z[i] == a[i] * b[i]);
    }
}

TEST_CASE("avx2 kernels are bit-identical to the scalar reference") {
    if (!k::isa_available(k::Isa::avx2)) {
        MESSAGE("AVX2 not available on this CPU; equivalence check skipped");
        return;
    }
    Rng rng(12);
    for (int trial = 0; trial < 500; ++trial) {
        const auto n = static_cast<std::size_t>(rng.below(300));
        // Odd offsets exercise unaligned loads.
        const auto off = static_cast<std::size_t>(rng.below(3));
        auto abuf = random_floats(rng, n + off), bbuf = random_floats(rng, n + off);
        const float* a = abuf.data() + off;
        const float* b = bbuf.data() + off;
        CHECK(same_bits(k::scalar::dot(a, b, n), k::avx2::dot(a, b, n)));
        CHECK(same_bits(k::scalar::sum(a, n), k::avx2::sum(a, n)));
        if (n > 0) CHECK(k::scalar::max(a, n) == k::avx2::max(a, n));

        const auto alpha = static_cast<float>(rng.normal());
        std::vector<float> y1(b, b + n), y2(b, b + n);
        k::scalar::axpy(alpha, a, y1.data(), n);
        k::avx2::axpy(alpha, a, y2.data(), n);
        CHECK(same_bits(y1, y2));

        std::vector<float> s1(a, a + n), s2(a, a + n);
        k::scalar::scale(alpha, s1.data(), n);
        k::avx2::scale(alpha, s2.data(), n);
        CHECK(same_bits(s1, s2));

        std::vector<float> m1(n), m2(n);
        k::scalar::mul(a, b, m1.data(), n);
        k::avx2::mul(a, b, m2.data(), n);
        CHECK(same_bits(m1, m2));
    }
}

TEST_CASE("dispatch can be forced and restored") {
    const auto before = k::active_isa();
    const auto prev = k::force_isa(k::Isa::scalar);
    CHECK(prev == before);
    CHECK(k::active_isa() == k::Isa::scalar);
    std::vector<float> a{1, 2, 3, 4, 5, 6, 7, 8, 9}, b(9, 1.0f);
    CHECK(k::dot(a, b) == 45.0f);
    CHECK(k::sum(a) == 45.0f);
    CHECK(k::max(a) == 9.0f);
    k::force_isa(before);
    CHECK(k::active_isa() == before);
    CHECK(k::dot(a, b) == 45.0f);
}

TEST_CASE("empty inputs") {
    std::vector<float> none;
    CHECK(k::dot(none, none) == 0.0f);
    CHECK(k::sum(none) == 0.0f);
}
