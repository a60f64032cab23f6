#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ecpipe {

using NodeId = std::uint32_t;
using BlockId = std::uint64_t;
using StripeId = std::uint64_t;
using Bytes = std::vector<std::uint8_t>;

/// 128-bit session identifier carried on every slice frame.
struct SessionId {
  std::array<std::uint8_t, 16> bytes{};

  static SessionId random();
  static SessionId from_hex(std::string_view hex);
  std::string hex() const;

  auto operator<=>(const SessionId&) const = default;
};

/// Block/slice geometry of one repair. The block length is always a whole
/// number of slices; writers zero-pad the tail of a stripe.
struct SliceSpec {
  std::size_t block_size = 0;
  std::size_t slice_size = 0;

  static SliceSpec make(std::size_t block_size, std::size_t slice_size);

  std::uint32_t slices() const {
    return static_cast<std::uint32_t>(block_size / slice_size);
  }
  std::size_t offset(std::uint32_t slice) const { return slice * slice_size; }
};

inline constexpr std::size_t kDefaultSliceSize = 32 * 1024;
inline constexpr std::size_t kDefaultBlockSize = 64 * 1024 * 1024;

/// The coordinator's unit of bookkeeping: where each block of a stripe lives.
struct StripeMetadata {
  StripeId id = 0;
  std::string scheme;  // e.g. "rs-14-10"
  int n = 0;
  int k = 0;
  std::size_t block_size = 0;
  std::uint64_t data_length = 0;  // unpadded payload bytes across the k data blocks
  std::vector<BlockId> blocks;    // n entries, index = position in stripe
  std::vector<NodeId> nodes;      // n entries
  std::vector<std::string> hashes;  // optional, n entries of hex SHA-256

  int index_of(BlockId block) const;
  int index_of_node(NodeId node) const;
};

std::string scheme_name(int n, int k);
/// Parses "rs-<n>-<k>".
std::pair<int, int> parse_scheme_name(std::string_view name);

}  // namespace ecpipe
