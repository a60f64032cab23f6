#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecpipe/config.hpp"
#include "ecpipe/net.hpp"
#include "ecpipe/pathsel.hpp"
#include "ecpipe/plan.hpp"
#include "ecpipe/protocol.hpp"

namespace ecpipe::client {

struct PlacedBlock {
  StripeId stripe = 0;
  int index = 0;
  BlockId block = 0;
  NodeId node = 0;
  std::string hash;
};

struct WriteOptions {
  std::size_t stripes = 0;                   // random stripes, when no input file
  std::optional<std::filesystem::path> input;  // file split across as many stripes as needed
  std::uint64_t seed = 1;
  bool verify = true;  // read every block back and compare hashes
};

struct WriteReport {
  std::vector<PlacedBlock> blocks;
  std::size_t stripes = 0;
  std::uint64_t bytes = 0;
  bool verified = false;
  double seconds = 0;
};

struct ErasedBlock {
  BlockId block = 0;
  StripeId stripe = 0;
  NodeId node = 0;
  bool deleted = false;
  std::string error;
};

struct RepairOptions {
  std::vector<BlockId> blocks;
  std::vector<NodeId> requestors;  // empty: pick configured nodes outside the stripe
  std::optional<pipeline::Scheme> scheme;
  std::optional<pathsel::PathMode> path;
  std::optional<bool> greedy;
  bool aggregate_requestors = false;  // experimental, weighted multi-block paths
  bool verify = true;  // read the rebuilt blocks back from their requestors
  std::chrono::milliseconds timeout{120000};
};

struct RepairRecord {
  std::string session;
  std::string scheme;
  std::vector<BlockId> blocks;
  std::vector<NodeId> requestors;
  std::vector<NodeId> helpers;  // path order
  std::string state;
  double seconds = 0;              // request to completion, as seen by the client
  double session_seconds = 0;      // dispatch to completion, as seen by the coordinator
  std::map<BlockId, std::string> hashes;
  bool verified = false;
  std::string failure;
};

struct RecoverOptions {
  NodeId node = 0;
  std::vector<NodeId> requestors;
  bool scheduling = true;  // greedy helper selection
  std::size_t fanout = 8;  // concurrent repair sessions
  std::optional<pipeline::Scheme> scheme;
  std::optional<pathsel::PathMode> path;
  bool verify = true;
};

struct RecoveryRecord {
  NodeId node = 0;
  std::size_t blocks = 0;
  std::size_t repaired = 0;
  std::size_t verified = 0;
  std::uint64_t bytes = 0;
  double seconds = 0;
  double rate_mb_s = 0;  // recovered MB (1e6 bytes) per second
  std::map<NodeId, int> helper_load;
  std::vector<RepairRecord> repairs;
};

nlohmann::json to_json(const WriteReport& r);
nlohmann::json to_json(const RepairRecord& r);
nlohmann::json to_json(const RecoveryRecord& r);

/// Talks to a running coordinator and its helpers.
class Client {
 public:
  Client(net::Endpoint coordinator, ClusterConfig config);

  nlohmann::json ping();
  WriteReport write(const WriteOptions& options);
  std::vector<ErasedBlock> fail_node(NodeId node);
  std::vector<ErasedBlock> fail_blocks(const std::vector<BlockId>& blocks);
  RepairRecord repair(const RepairOptions& options);
  RecoveryRecord recover_node(const RecoverOptions& options);
  std::size_t probe_import(const std::vector<LinkOverride>& links);

  nlohmann::json locate(BlockId block);
  /// Stripes as JSON records with a "missing" list; optionally only those
  /// with a block placed on `node`.
  std::vector<nlohmann::json> stripes(std::optional<NodeId> node = std::nullopt);
  StripeMetadata stripe(StripeId id);
  Bytes read_block(NodeId node, BlockId block);

  const ClusterConfig& config() const { return config_; }

 private:
  nlohmann::json call(proto::MsgType type, nlohmann::json meta, std::chrono::milliseconds timeout);
  std::vector<ErasedBlock> erase(const nlohmann::json& located);
  const net::Endpoint& address(NodeId node) const;

  net::Endpoint coordinator_;
  ClusterConfig config_;
};

/// Node order for writing stripes: racks interleaved so that consecutive
/// nodes sit in different racks where possible.
std::vector<NodeId> placement_order(const ClusterConfig& config);

/// Block ID of position `index` in stripe `stripe`.
inline BlockId block_id(StripeId stripe, int index) { return (stripe << 8) | static_cast<BlockId>(index); }

}  // namespace ecpipe::client
