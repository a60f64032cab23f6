#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "ecpipe/types.hpp"

namespace ecpipe {

/// Target index used by frames that carry an unscaled helper block
/// (conventional repair) rather than a partial combination.
inline constexpr std::uint16_t kRawTarget = 0xFFFF;
/// Stream control frames used by socket transports: a clean end of stream,
/// and an abort whose payload is the reason text.
inline constexpr std::uint16_t kEndTarget = 0xFFFE;
inline constexpr std::uint16_t kAbortTarget = 0xFFFD;

/// One slice of partially combined data in flight between two nodes.
struct SliceFrame {
  SessionId session;
  std::uint16_t target = 0;
  std::uint32_t slice = 0;
  std::uint8_t hop = 0;  // number of helper terms folded into payload
  Bytes payload;
};

// Wire layout, big-endian:
//   magic 0xEC 0x01 | session[16] | target u16 | slice u32 | hop u8 |
//   length u32 | payload[length] | crc32c u32 (over everything before it)
inline constexpr std::uint8_t kFrameMagic0 = 0xEC;
inline constexpr std::uint8_t kFrameMagic1 = 0x01;
inline constexpr std::size_t kFrameHeaderSize = 2 + 16 + 2 + 4 + 1 + 4;
inline constexpr std::size_t kFrameTrailerSize = 4;
inline constexpr std::size_t kMaxFramePayload = 256u << 20;

inline std::size_t wire_size(const SliceFrame& f) {
  return kFrameHeaderSize + f.payload.size() + kFrameTrailerSize;
}

struct FrameHeader {
  SessionId session;
  std::uint16_t target = 0;
  std::uint32_t slice = 0;
  std::uint8_t hop = 0;
  std::uint32_t length = 0;
};

Bytes encode_frame(const SliceFrame& frame);
/// Parses and validates one complete encoded frame; throws Error(corrupt_frame).
SliceFrame decode_frame(std::span<const std::uint8_t> wire);
/// Parses the fixed header; throws Error(corrupt_frame) on bad magic/length.
FrameHeader decode_frame_header(std::span<const std::uint8_t> header);
/// Validates the trailing CRC of a frame whose header and payload were read
/// separately.
void verify_frame_crc(std::span<const std::uint8_t> header,
                      std::span<const std::uint8_t> payload, std::uint32_t crc);

// Big-endian helpers shared with the control protocol.
void put_u16(Bytes& out, std::uint16_t v);
void put_u32(Bytes& out, std::uint32_t v);
std::uint16_t get_u16(const std::uint8_t* p);
std::uint32_t get_u32(const std::uint8_t* p);

}  // namespace ecpipe
