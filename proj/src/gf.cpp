#include "ecpipe/gf.hpp"

#include <array>
#include <cstring>

#include <immintrin.h>

#include "ecpipe/error.hpp"

namespace ecpipe::gf {
namespace {

struct Tables {
  std::array<Element, 512> exp{};
  std::array<int, 256> log{};
  // mul[a][b]
  std::array<std::array<Element, 256>, 256> mul{};
  // Split-nibble tables: lo[c][x] = c*x, hi[c][x] = c*(x << 4), x < 16.
  std::array<std::array<Element, 16>, 256> lo{};
  std::array<std::array<Element, 16>, 256> hi{};

  Tables() {
    unsigned x = 1;
    for (int i = 0; i < 255; ++i) {
      exp[i] = static_cast<Element>(x);
      log[x] = i;
      x <<= 1;
      if (x & 0x100) x ^= kPolynomial;
    }
    for (int i = 255; i < 512; ++i) exp[i] = exp[i - 255];
    log[0] = -1;

    for (int a = 0; a < 256; ++a) {
      for (int b = 0; b < 256; ++b) {
        mul[a][b] = (a == 0 || b == 0) ? 0 : exp[log[a] + log[b]];
      }
      for (int n = 0; n < 16; ++n) {
        lo[a][n] = mul[a][n];
        hi[a][n] = mul[a][n << 4];
      }
    }
  }
};

const Tables& tables() {
  static const Tables t;
  return t;
}

bool detect_avx2() noexcept {
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2");
}

const bool kHaveAvx2 = detect_avx2();

__attribute__((target("avx2"))) std::size_t mul_region_avx2(
    Element c, const std::uint8_t* src, std::uint8_t* dst, std::size_t len,
    bool accumulate) {
  const auto& t = tables();
  const __m128i lo128 =
      _mm_loadu_si128(reinterpret_cast<const __m128i*>(t.lo[c].data()));
  const __m128i hi128 =
      _mm_loadu_si128(reinterpret_cast<const __m128i*>(t.hi[c].data()));
  const __m256i lo = _mm256_broadcastsi128_si256(lo128);
  const __m256i hi = _mm256_broadcastsi128_si256(hi128);
  const __m256i mask = _mm256_set1_epi8(0x0f);

  std::size_t i = 0;
  for (; i + 32 <= len; i += 32) {
    __m256i in = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(src + i));
    __m256i l = _mm256_and_si256(in, mask);
    __m256i h = _mm256_and_si256(_mm256_srli_epi64(in, 4), mask);
    __m256i prod = _mm256_xor_si256(_mm256_shuffle_epi8(lo, l),
                                    _mm256_shuffle_epi8(hi, h));
    if (accumulate) {
      prod = _mm256_xor_si256(
          prod, _mm256_loadu_si256(reinterpret_cast<const __m256i*>(dst + i)));
    }
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(dst + i), prod);
  }
  return i;
}

__attribute__((target("avx2"))) std::size_t add_region_avx2(
    const std::uint8_t* src, std::uint8_t* dst, std::size_t len) {
  std::size_t i = 0;
  for (; i + 32 <= len; i += 32) {
    __m256i a = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(src + i));
    __m256i b = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(dst + i));
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(dst + i),
                        _mm256_xor_si256(a, b));
  }
  return i;
}

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) {
    raise(ErrorCode::length_mismatch, "region length mismatch: " +
                                          std::to_string(a) + " vs " +
                                          std::to_string(b));
  }
}

}  // namespace

Element mul(Element a, Element b) noexcept { return tables().mul[a][b]; }

Element inv(Element a) {
  if (a == 0) raise(ErrorCode::invalid_argument, "zero has no inverse in GF(256)");
  const auto& t = tables();
  return t.exp[255 - t.log[a]];
}

Element div(Element a, Element b) { return mul(a, inv(b)); }

Element pow(Element a, unsigned e) noexcept {
  if (e == 0) return 1;
  if (a == 0) return 0;
  const auto& t = tables();
  return t.exp[(static_cast<unsigned>(t.log[a]) * (e % 255)) % 255];
}

Element exp(unsigned e) noexcept { return tables().exp[e % 255]; }

void mul_region(Element c, std::span<const std::uint8_t> src,
                std::span<std::uint8_t> dst) {
  check_lengths(src.size(), dst.size());
  if (c == 0) {
    std::memset(dst.data(), 0, dst.size());
    return;
  }
  if (c == 1) {
    if (src.data() != dst.data()) std::memmove(dst.data(), src.data(), src.size());
    return;
  }
  std::size_t i = 0;
  if (kHaveAvx2) i = mul_region_avx2(c, src.data(), dst.data(), src.size(), false);
  const auto& row = tables().mul[c];
  for (; i < src.size(); ++i) dst[i] = row[src[i]];
}

void mul_add_region(Element c, std::span<const std::uint8_t> src,
                    std::span<std::uint8_t> dst) {
  check_lengths(src.size(), dst.size());
  if (c == 0) return;
  if (c == 1) {
    add_region(src, dst);
    return;
  }
  std::size_t i = 0;
  if (kHaveAvx2) i = mul_region_avx2(c, src.data(), dst.data(), src.size(), true);
  const auto& row = tables().mul[c];
  for (; i < src.size(); ++i) dst[i] ^= row[src[i]];
}

void add_region(std::span<const std::uint8_t> src, std::span<std::uint8_t> dst) {
  check_lengths(src.size(), dst.size());
  std::size_t i = 0;
  if (kHaveAvx2) i = add_region_avx2(src.data(), dst.data(), src.size());
  for (; i < src.size(); ++i) dst[i] ^= src[i];
}

bool simd_enabled() noexcept { return kHaveAvx2; }

}  // namespace ecpipe::gf
