// Compiled with -mavx2 only (no -mfma) and -ffp-contract=off; see kernels.hpp
// for the bit-equivalence contract with the scalar reference.

#include <immintrin.h>

#include <algorithm>

#include "sexid/kernels.hpp"

namespace sexid::kernels::avx2 {

namespace {

inline float reduce(__m256 v) noexcept {
    const __m128 lo = _mm256_castps256_ps128(v);
    const __m128 hi = _mm256_extractf128_ps(v, 1);
    const __m128 t = _mm_add_ps(lo, hi);               // l0+l4 .. l3+l7
    const __m128 u = _mm_add_ps(t, _mm_movehl_ps(t, t));  // t0+t2, t1+t3
    const __m128 r = _mm_add_ss(u, _mm_shuffle_ps(u, u, 0x1));
    return _mm_cvtss_f32(r);
}

}  // namespace

float dot(const float* a, const float* b, std::size_t n) noexcept {
    __m256 acc = _mm256_setzero_ps();
    const std::size_t blocked = n - n % kLanes;
    for (std::size_t i = 0; i < blocked; i += kLanes) {
        const __m256 p = _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
        acc = _mm256_add_ps(acc, p);
    }
    float r = reduce(acc);
    for (std::size_t i = blocked; i < n; ++i) {
        const float p = a[i] * b[i];
        r = r + p;
    }
    return r;
}

float sum(const float* x, std::size_t n) noexcept {
    __m256 acc = _mm256_setzero_ps();
    const std::size_t blocked = n - n % kLanes;
    for (std::size_t i = 0; i < blocked; i += kLanes) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    float r = reduce(acc);
    for (std::size_t i = blocked; i < n; ++i) r = r + x[i];
    return r;
}

float max(const float* x, std::size_t n) noexcept {
    if (n == 0) return -__builtin_inff();
    if (n < kLanes) {
        float m = x[0];
        for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
        return m;
    }
    __m256 m = _mm256_loadu_ps(x);
    const std::size_t blocked = n - n % kLanes;
    for (std::size_t i = kLanes; i < blocked; i += kLanes) m = _mm256_max_ps(m, _mm256_loadu_ps(x + i));
    alignas(32) float lanes[kLanes];
    _mm256_store_ps(lanes, m);
    float r = lanes[0];
    for (std::size_t l = 1; l < kLanes; ++l) r = std::max(r, lanes[l]);
    for (std::size_t i = blocked; i < n; ++i) r = std::max(r, x[i]);
    return r;
}

void axpy(float alpha, const float* x, float* y, std::size_t n) noexcept {
    const __m256 va = _mm256_set1_ps(alpha);
    const std::size_t blocked = n - n % kLanes;
    for (std::size_t i = 0; i < blocked; i += kLanes) {
        const __m256 p = _mm256_mul_ps(va, _mm256_loadu_ps(x + i));
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), p));
    }
    for (std::size_t i = blocked; i < n; ++i) {
        const float p = alpha * x[i];
        y[i] = y[i] + p;
    }
}

void scale(float alpha, float* x, std::size_t n) noexcept {
    const __m256 va = _mm256_set1_ps(alpha);
    const std::size_t blocked = n - n % kLanes;
    for (std::size_t i = 0; i < blocked; i += kLanes)
        _mm256_storeu_ps(x + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), va));
    for (std::size_t i = blocked; i < n; ++i) x[i] *= alpha;
}

void mul(const float* a, const float* b, float* out, std::size_t n) noexcept {
    const std::size_t blocked = n - n % kLanes;
    for (std::size_t i = 0; i < blocked; i += kLanes)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (std::size_t i = blocked; i < n; ++i) out[i] = a[i] * b[i];
}

}  // namespace sexid::kernels::avx2
