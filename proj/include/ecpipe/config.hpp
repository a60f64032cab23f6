#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecpipe/net.hpp"
#include "ecpipe/pathsel.hpp"
#include "ecpipe/plan.hpp"
#include "ecpipe/transport.hpp"

namespace ecpipe {

struct NodeConfig {
  NodeId id = 0;
  net::Endpoint address;
  int rack = 0;
  std::filesystem::path root;  // block directory
};

struct LinkOverride {
  NodeId src = 0;
  NodeId dst = 0;
  double mbps = 0;
};

/// One JSON file configures the coordinator, the helpers, the CLI and
/// simulator scenarios:
///
///   {
///     "coordinator": "127.0.0.1:7000",
///     "journal": "/var/lib/ecpipe/journal.jsonl",
///     "nodes": [{"id": 1, "address": "127.0.0.1:7101", "rack": 0, "root": "/data/n1"}, ...],
///     "code": "rs-14-10",
///     "block_size": 67108864, "slice_size": 32768,
///     "scheme": "rp-basic", "path": "plain", "greedy": true,
///     "links": {"default_mbps": 1000, "shape": false,
///               "overrides": [{"src": 1, "dst": 2, "mbps": 100}]},
///     "node_weights": {"3": 10.0},
///     "session_timeout_s": 30, "window": 64
///   }
///
/// Every key is optional except where a command needs it.
struct ClusterConfig {
  std::optional<net::Endpoint> coordinator;
  std::filesystem::path journal;
  std::vector<NodeConfig> nodes;
  std::string code = "rs-14-10";
  std::size_t block_size = kDefaultBlockSize;
  std::size_t slice_size = kDefaultSliceSize;
  pipeline::Scheme scheme = pipeline::Scheme::rp_basic;
  pathsel::PathMode path = pathsel::PathMode::plain;
  bool greedy = true;
  double default_mbps = 1000;
  bool shape = false;
  std::vector<LinkOverride> links;
  std::map<NodeId, double> node_weights;
  std::chrono::milliseconds session_timeout{30000};
  std::size_t window = 64;

  static ClusterConfig from_json(const nlohmann::json& j);
  static ClusterConfig load(const std::filesystem::path& file);
  nlohmann::json to_json() const;

  const NodeConfig& node(NodeId id) const;
  std::map<NodeId, net::Endpoint> directory() const;
  pathsel::RackTopology topology() const;
  /// Block-time weights from the link bandwidths, with node weights folded in.
  pathsel::LinkWeightMatrix weights() const;
  /// Port and link rates for shaped transports, in bytes per second.
  LinkProfile link_profile() const;
  SliceSpec slice_spec() const { return SliceSpec::make(block_size, slice_size); }
};

/// Probe results: one "src,dst,mbps" row per measured link; a header row and
/// blank lines are skipped.
std::vector<LinkOverride> parse_probe_csv(const std::string& text);

}  // namespace ecpipe
