#include "ecpipe/frame.hpp"

#include <algorithm>

#include "ecpipe/checksum.hpp"
#include "ecpipe/error.hpp"

namespace ecpipe {

void put_u16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_u32(Bytes& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
         (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

Bytes encode_frame(const SliceFrame& frame) {
  if (frame.payload.size() > kMaxFramePayload) {
    raise(ErrorCode::invalid_argument, "frame payload too large");
  }
  Bytes out;
  out.reserve(wire_size(frame));
  out.push_back(kFrameMagic0);
  out.push_back(kFrameMagic1);
  out.insert(out.end(), frame.session.bytes.begin(), frame.session.bytes.end());
  put_u16(out, frame.target);
  put_u32(out, frame.slice);
  out.push_back(frame.hop);
  put_u32(out, static_cast<std::uint32_t>(frame.payload.size()));
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  put_u32(out, crc32c(out));
  return out;
}

FrameHeader decode_frame_header(std::span<const std::uint8_t> header) {
  if (header.size() < kFrameHeaderSize) raise(ErrorCode::corrupt_frame, "short frame header");
  if (header[0] != kFrameMagic0 || header[1] != kFrameMagic1) {
    raise(ErrorCode::corrupt_frame, "bad frame magic");
  }
  FrameHeader h;
  std::copy_n(header.begin() + 2, 16, h.session.bytes.begin());
  const std::uint8_t* p = header.data() + 18;
  h.target = get_u16(p);
  h.slice = get_u32(p + 2);
  h.hop = p[6];
  h.length = get_u32(p + 7);
  if (h.length > kMaxFramePayload) raise(ErrorCode::corrupt_frame, "frame payload length too large");
  return h;
}

void verify_frame_crc(std::span<const std::uint8_t> header,
                      std::span<const std::uint8_t> payload, std::uint32_t crc) {
  const std::uint32_t actual = crc32c(payload, crc32c(header));
  if (actual != crc) raise(ErrorCode::corrupt_frame, "frame checksum mismatch");
}

SliceFrame decode_frame(std::span<const std::uint8_t> wire) {
  const FrameHeader h = decode_frame_header(wire);
  if (wire.size() != kFrameHeaderSize + h.length + kFrameTrailerSize) {
    raise(ErrorCode::corrupt_frame, "frame length does not match header");
  }
  auto header = wire.first(kFrameHeaderSize);
  auto payload = wire.subspan(kFrameHeaderSize, h.length);
  verify_frame_crc(header, payload, get_u32(wire.data() + kFrameHeaderSize + h.length));
  SliceFrame f;
  f.session = h.session;
  f.target = h.target;
  f.slice = h.slice;
  f.hop = h.hop;
  f.payload.assign(payload.begin(), payload.end());
  return f;
}

}  // namespace ecpipe
