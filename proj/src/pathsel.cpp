#include "ecpipe/pathsel.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ecpipe/error.hpp"

namespace ecpipe::pathsel {

namespace {

void require_enough(std::size_t available, int k) {
  if (k < 1) raise(ErrorCode::invalid_argument, "k must be at least 1");
  if (available < static_cast<std::size_t>(k)) {
    raise(ErrorCode::insufficient_helpers, "need " + std::to_string(k) + " helpers, have " +
                                               std::to_string(available));
  }
}

void require_distinct(std::span<const NodeId> nodes) {
  std::set<NodeId> seen(nodes.begin(), nodes.end());
  if (seen.size() != nodes.size()) raise(ErrorCode::invalid_argument, "duplicate helper node");
}

}  // namespace

std::vector<NodeId> HelperTimestamps::select(std::span<const NodeId> available, int k) {
  require_enough(available.size(), k);
  require_distinct(available);
  std::lock_guard lock(mu_);
  std::vector<std::pair<std::uint64_t, NodeId>> keyed;
  keyed.reserve(available.size());
  for (NodeId node : available) {
    auto it = stamps_.find(node);
    keyed.emplace_back(it == stamps_.end() ? 0 : it->second, node);
  }
  std::nth_element(keyed.begin(), keyed.begin() + (k - 1), keyed.end());
  // Restamp in the old order so ties within one selection do not pile up.
  std::sort(keyed.begin(), keyed.begin() + k);
  std::vector<NodeId> chosen;
  chosen.reserve(k);
  for (int i = 0; i < k; ++i) {
    NodeId node = keyed[i].second;
    stamps_[node] = ++counter_;
    ++selections_[node];
    chosen.push_back(node);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::uint64_t HelperTimestamps::stamp(NodeId node) const {
  std::lock_guard lock(mu_);
  auto it = stamps_.find(node);
  return it == stamps_.end() ? 0 : it->second;
}

std::uint64_t HelperTimestamps::counter() const {
  std::lock_guard lock(mu_);
  return counter_;
}

std::map<NodeId, std::uint64_t> HelperTimestamps::snapshot() const {
  std::lock_guard lock(mu_);
  return stamps_;
}

std::map<NodeId, std::uint64_t> HelperTimestamps::selections() const {
  std::lock_guard lock(mu_);
  return selections_;
}

std::vector<NodeId> select_helpers_greedy(std::span<const NodeId> available,
                                          HelperTimestamps& ts, int k) {
  return ts.select(available, k);
}

// ---- rack awareness ----

namespace {

int rack_of(const RackTopology& topology, NodeId node) {
  auto it = topology.find(node);
  if (it == topology.end()) {
    raise(ErrorCode::not_found, "node " + std::to_string(node) + " has no rack");
  }
  return it->second;
}

}  // namespace

std::vector<NodeId> rack_aware_path(const RackTopology& topology, NodeId requestor,
                                    std::span<const NodeId> available, int k) {
  require_enough(available.size(), k);
  require_distinct(available);
  int home = rack_of(topology, requestor);

  std::map<int, std::vector<NodeId>> racks;
  for (NodeId node : available) racks[rack_of(topology, node)].push_back(node);
  for (auto& [rack, nodes] : racks) std::sort(nodes.begin(), nodes.end());

  std::vector<const std::vector<NodeId>*> order;
  if (auto it = racks.find(home); it != racks.end()) order.push_back(&it->second);
  std::vector<std::pair<int, const std::vector<NodeId>*>> remote;
  for (auto& [rack, nodes] : racks) {
    if (rack != home) remote.emplace_back(rack, &nodes);
  }
  std::stable_sort(remote.begin(), remote.end(), [](const auto& a, const auto& b) {
    return a.second->size() > b.second->size();
  });
  for (auto& [rack, nodes] : remote) order.push_back(nodes);

  // Helpers are prepended to the path, so the requestor's neighbours come first.
  std::vector<NodeId> reversed;
  for (const auto* nodes : order) {
    for (NodeId node : *nodes) {
      if (static_cast<int>(reversed.size()) == k) break;
      reversed.push_back(node);
    }
  }
  return {reversed.rbegin(), reversed.rend()};
}

int cross_rack_links(const RackTopology& topology, std::span<const NodeId> path,
                     NodeId requestor) {
  int count = 0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    NodeId next = i + 1 < path.size() ? path[i + 1] : requestor;
    if (rack_of(topology, path[i]) != rack_of(topology, next)) ++count;
  }
  return count;
}

// ---- weighted paths ----

namespace {

void check_weight(double w) {
  if (!std::isfinite(w) || w < 0) {
    raise(ErrorCode::invalid_argument, "link weights must be finite and nonnegative");
  }
}

}  // namespace

LinkWeightMatrix::LinkWeightMatrix(double default_weight) : default_(default_weight) {
  check_weight(default_weight);
}

void LinkWeightMatrix::set(NodeId src, NodeId dst, double weight) {
  check_weight(weight);
  weights_[{src, dst}] = weight;
}

double LinkWeightMatrix::weight(NodeId src, NodeId dst) const {
  auto it = weights_.find({src, dst});
  return it == weights_.end() ? default_ : it->second;
}

LinkWeightMatrix LinkWeightMatrix::with_node_weights(
    const std::map<NodeId, double>& node_weights, std::span<const NodeId> nodes) const {
  LinkWeightMatrix out = *this;
  for (auto [node, w] : node_weights) {
    check_weight(w);
    for (NodeId dst : nodes) {
      if (dst == node) continue;
      out.set(node, dst, std::max(weight(node, dst), w));
    }
  }
  return out;
}

LinkWeightMatrix LinkWeightMatrix::from_bandwidth(
    double default_mbps, const std::map<std::pair<NodeId, NodeId>, double>& mbps,
    std::size_t block_size) {
  auto seconds = [block_size](double rate) {
    if (!(rate > 0) || !std::isfinite(rate)) {
      raise(ErrorCode::invalid_argument, "bandwidth must be positive");
    }
    return static_cast<double>(block_size) * 8.0 / (rate * 1e6);
  };
  LinkWeightMatrix out(seconds(default_mbps));
  for (auto& [link, rate] : mbps) out.set(link.first, link.second, seconds(rate));
  return out;
}

namespace {

struct Search {
  const LinkWeightMatrix& weights;
  std::span<const NodeId> candidates;  // ascending
  int k;
  std::vector<NodeId> path;  // reversed: path[0] is the requestor
  std::vector<bool> used;
  PathSearch best;

  void extend() {
    ++best.expanded;
    if (static_cast<int>(path.size()) < k + 1) {
      NodeId head = path.back();
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (used[i]) continue;
        if (!(weights.weight(candidates[i], head) < best.max_weight)) continue;
        used[i] = true;
        path.push_back(candidates[i]);
        extend();
        path.pop_back();
        used[i] = false;
      }
      return;
    }
    // Every link passed the strict check, so this path beats the incumbent.
    double w = 0;
    for (std::size_t i = 1; i < path.size(); ++i) {
      w = std::max(w, weights.weight(path[i], path[i - 1]));
    }
    best.max_weight = w;
    best.path.assign(path.rbegin(), path.rend() - 1);
  }
};

}  // namespace

PathSearch weighted_path(const LinkWeightMatrix& weights, NodeId requestor,
                         std::span<const NodeId> available, int k) {
  require_enough(available.size(), k);
  require_distinct(available);
  std::vector<NodeId> sorted(available.begin(), available.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::find(sorted.begin(), sorted.end(), requestor) != sorted.end()) {
    raise(ErrorCode::invalid_argument, "requestor cannot be a helper");
  }
  Search search{weights, sorted, k, {requestor}, std::vector<bool>(sorted.size()), {}};
  search.extend();
  return search.best;
}

double path_max_weight(const LinkWeightMatrix& weights, std::span<const NodeId> path,
                       NodeId requestor) {
  double w = 0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    NodeId next = i + 1 < path.size() ? path[i + 1] : requestor;
    w = std::max(w, weights.weight(path[i], next));
  }
  return w;
}

double permutation_count(int m, int k) {
  double count = 1;
  for (int i = 0; i < k; ++i) count *= m - i;
  return count;
}

// ---- full-node recovery ----

std::string_view to_string(PathMode mode) {
  switch (mode) {
    case PathMode::plain: return "plain";
    case PathMode::rack_aware: return "rack-aware";
    case PathMode::weighted: return "weighted";
  }
  return "?";
}

PathMode parse_path_mode(std::string_view name) {
  if (name == "plain") return PathMode::plain;
  if (name == "rack-aware" || name == "rack") return PathMode::rack_aware;
  if (name == "weighted") return PathMode::weighted;
  raise(ErrorCode::invalid_argument, "unknown path mode '" + std::string(name) + "'");
}

LinkWeightMatrix aggregate_requestors(const LinkWeightMatrix& weights, std::span<const NodeId> requestors,
                                      std::span<const NodeId> helpers, NodeId aggregate) {
  if (requestors.empty()) raise(ErrorCode::invalid_argument, "no requestors to aggregate");
  LinkWeightMatrix out = weights;
  for (NodeId h : helpers) {
    double worst = 0;
    for (NodeId r : requestors) worst = std::max(worst, weights.weight(h, r));
    out.set(h, aggregate, worst);
  }
  return out;
}

std::vector<NodeId> choose_path(const RecoveryTask& task, int k, HelperTimestamps& ts,
                                const SelectionPolicy& policy) {
  require_enough(task.available.size(), k);
  std::vector<NodeId> pool;
  if (policy.greedy) {
    pool = ts.select(task.available, k);
  } else if (policy.mode == PathMode::plain) {
    pool.assign(task.available.begin(), task.available.begin() + k);
  } else {
    pool = task.available;
  }
  switch (policy.mode) {
    case PathMode::plain:
      return pool;
    case PathMode::rack_aware:
      if (!policy.topology) raise(ErrorCode::invalid_argument, "rack-aware mode needs a topology");
      return rack_aware_path(*policy.topology, task.requestor, pool, k);
    case PathMode::weighted:
      if (!policy.weights) raise(ErrorCode::invalid_argument, "weighted mode needs link weights");
      return weighted_path(*policy.weights, task.requestor, pool, k).path;
  }
  return pool;
}

std::vector<RecoveryChoice> select_full_recovery(std::span<const RecoveryTask> tasks, int k,
                                                 HelperTimestamps& ts,
                                                 const SelectionPolicy& policy) {
  std::vector<RecoveryChoice> out;
  out.reserve(tasks.size());
  for (const auto& task : tasks) {
    out.push_back({task.stripe, task.target, task.requestor, choose_path(task, k, ts, policy)});
  }
  return out;
}

std::map<NodeId, int> helper_load(std::span<const RecoveryChoice> choices) {
  std::map<NodeId, int> load;
  for (const auto& choice : choices) {
    for (NodeId node : choice.path) ++load[node];
  }
  return load;
}

}  // namespace ecpipe::pathsel
