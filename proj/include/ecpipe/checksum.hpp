#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace ecpipe {

/// CRC-32C (Castagnoli). Uses the SSE4.2 crc32 instruction when available.
std::uint32_t crc32c(std::span<const std::uint8_t> data, std::uint32_t crc = 0) noexcept;

/// Hex-encoded SHA-256 of a block, used for end-to-end repair verification.
std::string content_hash(std::span<const std::uint8_t> data);

}  // namespace ecpipe
