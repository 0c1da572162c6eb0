#include <algorithm>

#include "sexid/kernels.hpp"

namespace sexid::kernels::scalar {

namespace {

// Lane tree: (l0+l4, l1+l5, l2+l6, l3+l7) -> (.0+.2, .1+.3) -> .0+.1
// This is exactly the order the AVX2 horizontal reduction uses.
float reduce_lanes(const float (&l)[kLanes]) noexcept {
    const float t0 = l[0] + l[4], t1 = l[1] + l[5], t2 = l[2] + l[6], t3 = l[3] + l[7];
    const float u0 = t0 + t2, u1 = t1 + t3;
    return u0 + u1;
}

}  // namespace

float dot(const float* a, const float* b, std::size_t n) noexcept {
    float acc[kLanes] = {};
    const std::size_t blocked = n - n % kLanes;
    for (std::size_t i = 0; i < blocked; i += kLanes)
        for (std::size_t l = 0; l < kLanes; ++l) {
            const float p = a[i + l] * b[i + l];
            acc[l] = acc[l] + p;
        }
    float r = reduce_lanes(acc);
    for (std::size_t i = blocked; i < n; ++i) {
        const float p = a[i] * b[i];
        r = r + p;
    }
    return r;
}

float sum(const float* x, std::size_t n) noexcept {
    float acc[kLanes] = {};
    const std::size_t blocked = n - n % kLanes;
    for (std::size_t i = 0; i < blocked; i += kLanes)
        for (std::size_t l = 0; l < kLanes; ++l) acc[l] = acc[l] + x[i + l];
    float r = reduce_lanes(acc);
    for (std::size_t i = blocked; i < n; ++i) r = r + x[i];
    return r;
}

float max(const float* x, std::size_t n) noexcept {
    if (n == 0) return -__builtin_inff();
    float m = x[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
    return m;
}

void axpy(float alpha, const float* x, float* y, std::size_t n) noexcept {
    for (std::size_t i = 0; i < n; ++i) {
        const float p = alpha * x[i];
        y[i] = y[i] + p;
    }
}

void scale(float alpha, float* x, std::size_t n) noexcept {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void mul(const float* a, const float* b, float* out, std::size_t n) noexcept {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

}  // namespace sexid::kernels::scalar
