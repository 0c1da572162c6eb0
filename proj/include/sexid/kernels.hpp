#pragma once

// Dense float kernels behind the baseline classifier and the encoder.
//
// Every variant accumulates in the same 8-lane blocked order and reduces the
// lanes with the same pairwise tree, without fused multiply-add, so all
// variants return bit-identical results (max returns equal values, though
// the sign of a zero maximum may differ). The dispatcher is free to pick any
// of them without breaking reproducibility.

#include <cstddef>
#include <span>
#include <string_view>

namespace sexid::kernels {

inline constexpr std::size_t kLanes = 8;

enum class Isa { scalar, avx2 };

std::string_view to_string(Isa isa) noexcept;

/// Variant chosen at first use: the best the CPU supports, unless the
/// SEXID_SIMD environment variable names a lower one ("scalar").
Isa active_isa() noexcept;
bool isa_available(Isa isa) noexcept;
/// Testing hook. Returns the previous selection.
Isa force_isa(Isa isa);

float dot(std::span<const float> a, std::span<const float> b) noexcept;
float sum(std::span<const float> x) noexcept;
float max(std::span<const float> x) noexcept;
/// y += alpha * x
void axpy(float alpha, std::span<const float> x, std::span<float> y) noexcept;
/// x *= alpha
void scale(float alpha, std::span<float> x) noexcept;
/// out = a * b elementwise (out may alias a)
void mul(std::span<const float> a, std::span<const float> b, std::span<float> out) noexcept;

/// Per-ISA entry points, exposed for equivalence tests. Sizes of the span
/// arguments must match; the dispatching wrappers above assert this.
namespace scalar {
float dot(const float* a, const float* b, std::size_t n) noexcept;
float sum(const float* x, std::size_t n) noexcept;
float max(const float* x, std::size_t n) noexcept;
void axpy(float alpha, const float* x, float* y, std::size_t n) noexcept;
void scale(float alpha, float* x, std::size_t n) noexcept;
void mul(const float* a, const float* b, float* out, std::size_t n) noexcept;
}  // namespace scalar

namespace avx2 {
float dot(const float* a, const float* b, std::size_t n) noexcept;
float sum(const float* x, std::size_t n) noexcept;
float max(const float* x, std::size_t n) noexcept;
void axpy(float alpha, const float* x, float* y, std::size_t n) noexcept;
void scale(float alpha, float* x, std::size_t n) noexcept;
void mul(const float* a, const float* b, float* out, std::size_t n) noexcept;
}  // namespace avx2

}  // namespace sexid::kernels
