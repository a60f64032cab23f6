#include "ecpipe/types.hpp"

#include <algorithm>
#include <charconv>
#include <random>

#include "ecpipe/error.hpp"

namespace ecpipe {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::length_mismatch: return "length_mismatch";
    case ErrorCode::singular_matrix: return "singular_matrix";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::duplicate: return "duplicate";
    case ErrorCode::unrecoverable: return "unrecoverable";
    case ErrorCode::insufficient_helpers: return "insufficient_helpers";
    case ErrorCode::transport: return "transport";
    case ErrorCode::timeout: return "timeout";
    case ErrorCode::corrupt_frame: return "corrupt_frame";
    case ErrorCode::io: return "io";
    case ErrorCode::protocol: return "protocol";
    case ErrorCode::session_aborted: return "session_aborted";
  }
  return "unknown";
}

void raise(ErrorCode code, const std::string& what) { throw Error(code, what); }

SessionId SessionId::random() {
  thread_local std::mt19937_64 rng{std::random_device{}()};
  SessionId id;
  for (int half = 0; half < 2; ++half) {
    std::uint64_t v = rng();
    for (int i = 0; i < 8; ++i) id.bytes[half * 8 + i] = static_cast<std::uint8_t>(v >> (8 * i));
  }
  return id;
}

std::string SessionId::hex() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(32);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

SessionId SessionId::from_hex(std::string_view hex) {
  if (hex.size() != 32) raise(ErrorCode::invalid_argument, "session id must be 32 hex digits");
  SessionId id;
  for (int i = 0; i < 16; ++i) {
    unsigned v = 0;
    auto [ptr, ec] = std::from_chars(hex.data() + 2 * i, hex.data() + 2 * i + 2, v, 16);
    if (ec != std::errc() || ptr != hex.data() + 2 * i + 2) {
      raise(ErrorCode::invalid_argument, "bad session id: " + std::string(hex));
    }
    id.bytes[i] = static_cast<std::uint8_t>(v);
  }
  return id;
}

SliceSpec SliceSpec::make(std::size_t block_size, std::size_t slice_size) {
  if (slice_size == 0 || block_size == 0) {
    raise(ErrorCode::invalid_argument, "block and slice size must be positive");
  }
  if (block_size % slice_size != 0) {
    raise(ErrorCode::invalid_argument, "block size " + std::to_string(block_size) +
                                           " is not a multiple of slice size " +
                                           std::to_string(slice_size));
  }
  return SliceSpec{block_size, slice_size};
}

int StripeMetadata::index_of(BlockId block) const {
  auto it = std::find(blocks.begin(), blocks.end(), block);
  return it == blocks.end() ? -1 : static_cast<int>(it - blocks.begin());
}

int StripeMetadata::index_of_node(NodeId node) const {
  auto it = std::find(nodes.begin(), nodes.end(), node);
  return it == nodes.end() ? -1 : static_cast<int>(it - nodes.begin());
}

std::string scheme_name(int n, int k) {
  return "rs-" + std::to_string(n) + "-" + std::to_string(k);
}

std::pair<int, int> parse_scheme_name(std::string_view name) {
  auto bad = [&] { raise(ErrorCode::invalid_argument, "bad scheme name: " + std::string(name)); };
  if (name.substr(0, 3) != "rs-") bad();
  auto rest = name.substr(3);
  auto dash = rest.find('-');
  if (dash == std::string_view::npos) bad();
  int n = 0;
  int k = 0;
  auto r1 = std::from_chars(rest.data(), rest.data() + dash, n);
  auto r2 = std::from_chars(rest.data() + dash + 1, rest.data() + rest.size(), k);
  if (r1.ec != std::errc() || r2.ec != std::errc() || r1.ptr != rest.data() + dash ||
      r2.ptr != rest.data() + rest.size()) {
    bad();
  }
  return {n, k};
}

}  // namespace ecpipe
