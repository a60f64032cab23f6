#pragma once

#include <cstdint>
#include <span>

// GF(2^8) arithmetic under x^8 + x^4 + x^3 + x^2 + 1.
namespace ecpipe::gf {

using Element = std::uint8_t;

inline constexpr unsigned kPolynomial = 0x11D;
inline constexpr int kWordBits = 8;

inline constexpr Element add(Element a, Element b) { return a ^ b; }

Element mul(Element a, Element b) noexcept;
/// Throws Error(invalid_argument) for a == 0.
Element inv(Element a);
Element div(Element a, Element b);
Element pow(Element a, unsigned e) noexcept;
/// Generator of the multiplicative group (2) raised to e.
Element exp(unsigned e) noexcept;

/// dst[i] = c * src[i]
void mul_region(Element c, std::span<const std::uint8_t> src,
                std::span<std::uint8_t> dst);
/// dst[i] ^= c * src[i]
void mul_add_region(Element c, std::span<const std::uint8_t> src,
                    std::span<std::uint8_t> dst);
/// dst[i] ^= src[i]
void add_region(std::span<const std::uint8_t> src, std::span<std::uint8_t> dst);

/// True when the AVX2 region kernels are in use.
bool simd_enabled() noexcept;

}  // namespace ecpipe::gf
