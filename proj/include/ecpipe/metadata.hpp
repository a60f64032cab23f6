#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <unordered_map>
#include <vector>

#include "ecpipe/pathsel.hpp"
#include "ecpipe/types.hpp"

namespace ecpipe::coord {

struct Location {
  StripeId stripe = 0;
  NodeId node = 0;
  int index = 0;
  bool missing = false;
};

/// Stripe map of the coordinator. Reads are shared, changes exclusive; every
/// change is appended to the journal (one JSON object per line) before it
/// takes effect in memory, and replayed on construction.
class MetadataStore {
 public:
  /// An empty journal path keeps everything in memory. With a topology, every
  /// stripe must keep at most n-k blocks in any rack.
  explicit MetadataStore(std::filesystem::path journal = {},
                         std::optional<pathsel::RackTopology> rack_limit = std::nullopt);

  /// Registering an identical record again is a no-op. Throws Error(duplicate)
  /// if the stripe ID or a block ID is taken by a different record, and
  /// Error(invalid_argument) on a malformed placement.
  StripeId register_stripe(const StripeMetadata& stripe);

  Location locate(BlockId block) const;
  StripeMetadata stripe(StripeId id) const;
  std::vector<StripeId> stripe_ids() const;
  std::size_t stripe_count() const;
  StripeId next_stripe_id() const;

  /// Missing blocks of a stripe, as stripe positions.
  std::vector<int> missing(StripeId id) const;
  /// Blocks placed on `node`, missing or not.
  std::vector<BlockId> blocks_on(NodeId node) const;

  void mark_missing(const std::vector<BlockId>& blocks);
  /// A repaired block now lives on `node`; clears its missing flag and stores
  /// its content hash if the stripe has none recorded.
  void relocate(BlockId block, NodeId node, const std::string& hash = {});

  void mark_dead(NodeId node);
  bool dead(NodeId node) const;

  /// Loads "<stripe_id> <scheme> <block_id>:<node_id> ..." records, one stripe
  /// per line; '#' starts a comment. Returns the number of stripes loaded.
  std::size_t load_placement(std::istream& in, std::size_t block_size);
  std::size_t load_placement_file(const std::filesystem::path& file, std::size_t block_size);

 private:
  struct Entry {
    StripeMetadata meta;
    std::vector<bool> missing;
  };

  void validate(const StripeMetadata& stripe) const;
  bool register_locked(const StripeMetadata& stripe);
  void append(const std::string& line);
  void replay();
  void apply_line(const std::string& line);

  std::filesystem::path journal_path_;
  std::ofstream journal_;
  std::optional<pathsel::RackTopology> rack_limit_;
  mutable std::shared_mutex mu_;
  std::map<StripeId, Entry> stripes_;
  std::unordered_map<BlockId, std::pair<StripeId, int>> blocks_;
  std::set<NodeId> dead_;
};

}  // namespace ecpipe::coord
