#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ecpipe/types.hpp"

namespace ecpipe::pathsel {

/// Last-selected stamps for helper scheduling. A node never selected has
/// stamp 0. A selection hands the chosen nodes the next k counter values in
/// their previous stamp order, so recency stays a strict order.
class HelperTimestamps {
 public:
  /// Picks the k nodes of `available` with the smallest (stamp, node ID) and
  /// restamps them, as one atomic step. Returned in ascending node ID.
  std::vector<NodeId> select(std::span<const NodeId> available, int k);

  std::uint64_t stamp(NodeId node) const;
  std::uint64_t counter() const;
  std::map<NodeId, std::uint64_t> snapshot() const;
  /// Number of times each node has been selected.
  std::map<NodeId, std::uint64_t> selections() const;

 private:
  mutable std::mutex mu_;
  std::uint64_t counter_ = 0;
  std::map<NodeId, std::uint64_t> stamps_;
  std::map<NodeId, std::uint64_t> selections_;
};

std::vector<NodeId> select_helpers_greedy(std::span<const NodeId> available,
                                          HelperTimestamps& ts, int k);

using RackTopology = std::map<NodeId, int>;

/// Helper path N_1..N_k (N_k sends to the requestor) that crosses as few
/// racks as possible: helpers sharing the requestor's rack sit next to it,
/// then remote racks follow largest first, each rack contiguous.
std::vector<NodeId> rack_aware_path(const RackTopology& topology, NodeId requestor,
                                    std::span<const NodeId> available, int k);

/// Links between consecutive nodes of path + requestor that join different racks.
int cross_rack_links(const RackTopology& topology, std::span<const NodeId> path, NodeId requestor);

/// Directed link weights, e.g. seconds per block. Unlisted links take the
/// default weight.
class LinkWeightMatrix {
 public:
  explicit LinkWeightMatrix(double default_weight = 1.0);

  void set(NodeId src, NodeId dst, double weight);
  double weight(NodeId src, NodeId dst) const;
  double default_weight() const { return default_; }
  const std::map<std::pair<NodeId, NodeId>, double>& overrides() const { return weights_; }

  /// Folds per-node weights into every out-edge of the node: the edge keeps
  /// the larger of its own weight and the node's.
  LinkWeightMatrix with_node_weights(const std::map<NodeId, double>& node_weights,
                                     std::span<const NodeId> nodes) const;

  /// Weights as block transfer times from bandwidths in Mb/s.
  static LinkWeightMatrix from_bandwidth(double default_mbps,
                                         const std::map<std::pair<NodeId, NodeId>, double>& mbps,
                                         std::size_t block_size);

 private:
  double default_;
  std::map<std::pair<NodeId, NodeId>, double> weights_;
};

struct PathSearch {
  std::vector<NodeId> path;  // N_1..N_k
  double max_weight = std::numeric_limits<double>::infinity();
  std::uint64_t expanded = 0;  // calls of the recursive extension step
};

/// Minimax path of k helpers into the requestor. Extends the path backwards
/// from the requestor, trying helpers in ascending ID and skipping any link
/// not strictly lighter than the best complete path so far.
PathSearch weighted_path(const LinkWeightMatrix& weights, NodeId requestor,
                         std::span<const NodeId> available, int k);

/// Multi-block repair: the last helper feeds every requestor. Folds the
/// requestors into one node `aggregate` whose in-edge from each helper weighs
/// as much as that helper's heaviest edge into a real requestor. Experimental;
/// the path found this way has no optimality guarantee for f > 1.
LinkWeightMatrix aggregate_requestors(const LinkWeightMatrix& weights, std::span<const NodeId> requestors,
                                      std::span<const NodeId> helpers, NodeId aggregate);

/// Maximum link weight along path + requestor.
double path_max_weight(const LinkWeightMatrix& weights, std::span<const NodeId> path,
                       NodeId requestor);

/// Candidate count of exhaustive search: m!/(m-k)!.
double permutation_count(int m, int k);

enum class PathMode { plain, rack_aware, weighted };
std::string_view to_string(PathMode mode);
PathMode parse_path_mode(std::string_view name);

struct RecoveryTask {
  StripeId stripe = 0;
  int target = 0;
  NodeId requestor = 0;
  std::vector<NodeId> available;  // live helpers in stripe order
};

struct RecoveryChoice {
  StripeId stripe = 0;
  int target = 0;
  NodeId requestor = 0;
  std::vector<NodeId> path;
};

struct SelectionPolicy {
  PathMode mode = PathMode::plain;
  bool greedy = true;
  const RackTopology* topology = nullptr;
  const LinkWeightMatrix* weights = nullptr;
};

/// Helpers and path for one repair. With greedy scheduling the k least
/// recently selected helpers are chosen first and only they are ordered;
/// without it, plain mode takes the first k available.
std::vector<NodeId> choose_path(const RecoveryTask& task, int k, HelperTimestamps& ts,
                                const SelectionPolicy& policy);

std::vector<RecoveryChoice> select_full_recovery(std::span<const RecoveryTask> tasks, int k,
                                                 HelperTimestamps& ts,
                                                 const SelectionPolicy& policy);

/// Sessions each helper takes part in.
std::map<NodeId, int> helper_load(std::span<const RecoveryChoice> choices);

}  // namespace ecpipe::pathsel
