#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include "ecpipe/error.hpp"
#include "ecpipe/pathsel.hpp"

using namespace ecpipe;
using namespace ecpipe::pathsel;

namespace {

std::vector<NodeId> iota_nodes(int count, NodeId first = 1) {
  std::vector<NodeId> out(count);
  std::iota(out.begin(), out.end(), first);
  return out;
}

// Calls fn on every ordered selection of k distinct nodes.
template <class Fn>
void for_each_arrangement(const std::vector<NodeId>& nodes, int k, Fn fn) {
  std::vector<NodeId> current;
  std::vector<bool> used(nodes.size());
  auto rec = [&](auto& self) -> void {
    if (static_cast<int>(current.size()) == k) {
      fn(current);
      return;
    }
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (used[i]) continue;
      used[i] = true;
      current.push_back(nodes[i]);
      self(self);
      current.pop_back();
      used[i] = false;
    }
  };
  rec(rec);
}

double brute_force_minimax(const LinkWeightMatrix& w, NodeId requestor,
                           const std::vector<NodeId>& helpers, int k) {
  double best = std::numeric_limits<double>::infinity();
  for_each_arrangement(helpers, k, [&](const std::vector<NodeId>& path) {
    double m = 0;
    for (std::size_t i = 0; i < path.size(); ++i) {
      m = std::max(m, w.weight(path[i], i + 1 < path.size() ? path[i + 1] : requestor));
    }
    best = std::min(best, m);
  });
  return best;
}

LinkWeightMatrix random_weights(std::mt19937_64& rng, const std::vector<NodeId>& nodes) {
  std::uniform_real_distribution<double> dist(0.1, 10.0);
  LinkWeightMatrix w(1.0);
  for (NodeId a : nodes) {
    for (NodeId b : nodes) {
      if (a != b) w.set(a, b, dist(rng));
    }
  }
  return w;
}

}  // namespace

// ---- greedy selection ----

TEST(Greedy, EqualStampsPickLowestIds) {
  HelperTimestamps ts;
  std::vector<NodeId> available = {9, 3, 7, 1, 5, 2};
  EXPECT_EQ(select_helpers_greedy(available, ts, 3), (std::vector<NodeId>{1, 2, 3}));
  EXPECT_EQ(ts.stamp(1), 1u);
  EXPECT_EQ(ts.stamp(3), 3u);
  EXPECT_EQ(ts.stamp(9), 0u);
}

TEST(Greedy, SecondSelectionIsAsDisjointAsPossible) {
  HelperTimestamps ts;
  auto available = iota_nodes(13);
  auto first = ts.select(available, 10);
  auto second = ts.select(available, 10);
  std::vector<NodeId> overlap;
  std::set_intersection(first.begin(), first.end(), second.begin(), second.end(),
                        std::back_inserter(overlap));
  EXPECT_EQ(overlap.size(), 7u);  // 2k - available
  for (NodeId n : {11u, 12u, 13u}) {
    EXPECT_TRUE(std::binary_search(second.begin(), second.end(), n));
  }
  // Replay: the overlap is the lowest IDs among the once-selected nodes.
  EXPECT_EQ(overlap, iota_nodes(7));
}

TEST(Greedy, QuickSelectMatchesFullSort) {
  std::mt19937_64 rng(11);
  HelperTimestamps ts;
  auto nodes = iota_nodes(30);
  for (int round = 0; round < 500; ++round) {
    std::shuffle(nodes.begin(), nodes.end(), rng);
    int m = 5 + static_cast<int>(rng() % 25);
    int k = 1 + static_cast<int>(rng() % m);
    std::vector<NodeId> available(nodes.begin(), nodes.begin() + m);

    std::vector<std::pair<std::uint64_t, NodeId>> keyed;
    for (NodeId n : available) keyed.emplace_back(ts.stamp(n), n);
    std::sort(keyed.begin(), keyed.end());
    std::vector<NodeId> expected;
    for (int i = 0; i < k; ++i) expected.push_back(keyed[i].second);
    std::sort(expected.begin(), expected.end());

    std::map<std::uint64_t, NodeId> old_order;
    for (NodeId n : expected) old_order[ts.stamp(n) * 100 + n] = n;
    auto before = ts.counter();
    ASSERT_EQ(ts.select(available, k), expected);
    EXPECT_EQ(ts.counter(), before + k);
    // Chosen nodes are restamped in their previous recency order.
    std::uint64_t next = before;
    for (auto& [key, n] : old_order) EXPECT_EQ(ts.stamp(n), ++next);
  }
}

TEST(Greedy, FairnessBound) {
  // A node's count never trails the maximum by more than the number of
  // selections it was ineligible for plus k.
  std::mt19937_64 rng(5);
  const int nodes = 16, width = 14, k = 10;
  auto all = iota_nodes(nodes);
  HelperTimestamps ts;
  std::map<NodeId, int> ineligible;
  for (int stripe = 0; stripe < 400; ++stripe) {
    std::shuffle(all.begin(), all.end(), rng);
    std::vector<NodeId> available(all.begin(), all.begin() + width - 1);
    for (NodeId n = 1; n <= nodes; ++n) {
      if (std::find(available.begin(), available.end(), n) == available.end()) ++ineligible[n];
    }
    ts.select(available, k);
    auto counts = ts.selections();
    std::uint64_t max = 0;
    for (auto& [n, c] : counts) max = std::max(max, c);
    for (NodeId n = 1; n <= nodes; ++n) {
      std::uint64_t c = counts.count(n) ? counts[n] : 0;
      ASSERT_LE(max - c, static_cast<std::uint64_t>(ineligible[n] + k)) << "node " << n;
    }
  }
}

TEST(Greedy, ConcurrentSelectionsGetDistinctStamps) {
  HelperTimestamps ts;
  auto available = iota_nodes(20);
  std::vector<std::vector<NodeId>> picks(8);
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] { picks[t] = ts.select(available, 5); });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(ts.counter(), 40u);
  std::set<std::uint64_t> stamps;
  for (auto& [n, st] : ts.snapshot()) stamps.insert(st);
  EXPECT_EQ(stamps.size(), 20u);
  std::uint64_t total = 0;
  for (auto& [n, c] : ts.selections()) total += c;
  EXPECT_EQ(total, 40u);
  // 8 picks of 5 over 20 nodes in stamp order: each node picked exactly twice.
  for (auto& [n, c] : ts.selections()) EXPECT_EQ(c, 2u);
}

TEST(Greedy, Errors) {
  HelperTimestamps ts;
  std::vector<NodeId> three = {1, 2, 3};
  EXPECT_THROW(ts.select(three, 4), Error);
  try {
    ts.select(three, 4);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::insufficient_helpers);
  }
  std::vector<NodeId> dup = {1, 1, 2};
  EXPECT_THROW(ts.select(dup, 2), Error);
  EXPECT_THROW(ts.select(three, 0), Error);
}

// ---- rack-aware paths ----

TEST(RackAware, AllInRequestorRack) {
  RackTopology topo;
  for (NodeId n = 1; n <= 8; ++n) topo[n] = 0;
  auto path = rack_aware_path(topo, 8, iota_nodes(7), 4);
  EXPECT_EQ(path.size(), 4u);
  EXPECT_EQ(cross_rack_links(topo, path, 8), 0);
}

TEST(RackAware, SplitTwoOneOne) {
  // Requestor rack holds two helpers; two remote racks hold one each.
  RackTopology topo{{100, 0}, {1, 0}, {2, 0}, {3, 1}, {4, 2}};
  std::vector<NodeId> helpers = {1, 2, 3, 4};
  auto path = rack_aware_path(topo, 100, helpers, 4);
  EXPECT_EQ(cross_rack_links(topo, path, 100), 2);
  // The requestor's rack-mates sit next to it.
  EXPECT_EQ(topo[path[2]], 0);
  EXPECT_EQ(topo[path[3]], 0);
}

TEST(RackAware, LargestRemoteRackFirst) {
  RackTopology topo{{100, 0}, {1, 1}, {2, 2}, {3, 2}, {4, 2}, {5, 3}, {6, 3}};
  std::vector<NodeId> helpers = {1, 2, 3, 4, 5, 6};
  auto path = rack_aware_path(topo, 100, helpers, 4);
  // Rack 2 (three helpers) next to the requestor, then one from rack 3.
  EXPECT_EQ(path, (std::vector<NodeId>{5, 4, 3, 2}));
  EXPECT_EQ(cross_rack_links(topo, path, 100), 2);
}

TEST(RackAware, MatchesExhaustiveMinimum) {
  std::mt19937_64 rng(99);
  for (int instance = 0; instance < 300; ++instance) {
    int n = 3 + static_cast<int>(rng() % 7);  // 3..9 nodes incl. requestor
    int k = 1 + static_cast<int>(rng() % (n - 1));
    RackTopology topo;
    NodeId requestor = 1;
    auto helpers = iota_nodes(n - 1, 2);
    for (NodeId node = 1; node <= static_cast<NodeId>(n); ++node) topo[node] = rng() % 3;

    auto path = rack_aware_path(topo, requestor, helpers, k);
    ASSERT_EQ(static_cast<int>(path.size()), k);
    ASSERT_EQ(std::set<NodeId>(path.begin(), path.end()).size(), path.size());

    int best = std::numeric_limits<int>::max();
    for_each_arrangement(helpers, k, [&](const std::vector<NodeId>& p) {
      best = std::min(best, cross_rack_links(topo, p, requestor));
    });
    ASSERT_EQ(cross_rack_links(topo, path, requestor), best) << "instance " << instance;
  }
}

TEST(RackAware, Errors) {
  RackTopology topo{{1, 0}, {2, 0}};
  std::vector<NodeId> helpers = {2};
  EXPECT_THROW(rack_aware_path(topo, 1, helpers, 2), Error);
  std::vector<NodeId> unknown = {2, 3};
  EXPECT_THROW(rack_aware_path(topo, 1, unknown, 2), Error);
}

// ---- weighted paths ----

TEST(Weighted, UniformWeights) {
  LinkWeightMatrix w(2.5);
  auto result = weighted_path(w, 100, iota_nodes(9), 6);
  EXPECT_EQ(result.path.size(), 6u);
  EXPECT_DOUBLE_EQ(result.max_weight, 2.5);
  // The first complete path is optimal and everything after is pruned.
  EXPECT_EQ(result.expanded, 7u);
}

TEST(Weighted, MatchesBruteForce) {
  std::mt19937_64 rng(2024);
  for (int instance = 0; instance < 1000; ++instance) {
    int n = 3 + static_cast<int>(rng() % 6);  // up to 8 nodes incl. requestor
    int k = 1 + static_cast<int>(rng() % (n - 1));
    auto nodes = iota_nodes(n);
    auto w = random_weights(rng, nodes);
    NodeId requestor = nodes.back();
    std::vector<NodeId> helpers(nodes.begin(), nodes.end() - 1);

    auto result = weighted_path(w, requestor, helpers, k);
    ASSERT_EQ(static_cast<int>(result.path.size()), k);
    EXPECT_DOUBLE_EQ(result.max_weight, path_max_weight(w, result.path, requestor));
    ASSERT_EQ(result.max_weight, brute_force_minimax(w, requestor, helpers, k))
        << "instance " << instance;
  }
}

TEST(Weighted, PrunedSearchIsSmall) {
  std::mt19937_64 rng(7);
  auto nodes = iota_nodes(15);
  auto w = random_weights(rng, nodes);
  std::vector<NodeId> helpers(nodes.begin(), nodes.end() - 1);
  auto result = weighted_path(w, 15, helpers, 10);
  double brute = permutation_count(14, 10);
  EXPECT_DOUBLE_EQ(brute, 3632428800.0);
  EXPECT_LE(static_cast<double>(result.expanded), 0.01 * brute);
}

TEST(Weighted, AggregateRequestorTakesWorstEdge) {
  std::mt19937_64 rng(11);
  for (int instance = 0; instance < 100; ++instance) {
    auto nodes = iota_nodes(9);
    auto w = random_weights(rng, nodes);
    const std::vector<NodeId> requestors = {8, 9};
    const std::vector<NodeId> helpers(nodes.begin(), nodes.end() - 2);
    auto folded = aggregate_requestors(w, requestors, helpers, 999);
    for (NodeId h : helpers) EXPECT_EQ(folded.weight(h, 999), std::max(w.weight(h, 8), w.weight(h, 9)));
    auto result = weighted_path(folded, 999, helpers, 4);
    // Minimax over paths whose last helper feeds both requestors.
    double best = std::numeric_limits<double>::infinity();
    for_each_arrangement(helpers, 4, [&](const std::vector<NodeId>& p) {
      double m = std::max(path_max_weight(w, p, 8), path_max_weight(w, p, 9));
      best = std::min(best, m);
    });
    ASSERT_EQ(result.max_weight, best);
  }
  EXPECT_THROW(aggregate_requestors(LinkWeightMatrix{}, {}, iota_nodes(3), 999), Error);
}

TEST(Weighted, StragglerExcluded) {
  std::mt19937_64 rng(3);
  for (int instance = 0; instance < 50; ++instance) {
    auto nodes = iota_nodes(8);
    auto base = random_weights(rng, nodes);
    NodeId straggler = 1 + rng() % 7;
    auto w = base.with_node_weights({{straggler, 100.0}}, nodes);
    for (NodeId other : nodes) {
      if (other != straggler) w.set(other, straggler, 100.0);
    }
    std::vector<NodeId> helpers(nodes.begin(), nodes.end() - 1);
    auto result = weighted_path(w, 8, helpers, 5);
    EXPECT_EQ(std::count(result.path.begin(), result.path.end(), straggler), 0);
    EXPECT_EQ(result.max_weight, brute_force_minimax(w, 8, helpers, 5));
  }
}

TEST(Weighted, NodeWeightFolding) {
  LinkWeightMatrix w(1.0);
  w.set(1, 2, 5.0);
  std::vector<NodeId> nodes = {1, 2, 3};
  auto folded = w.with_node_weights({{1, 3.0}}, nodes);
  EXPECT_EQ(folded.weight(1, 2), 5.0);  // link heavier than node keeps its weight
  EXPECT_EQ(folded.weight(1, 3), 3.0);
  EXPECT_EQ(folded.weight(2, 1), 1.0);  // in-edges untouched
}

TEST(Weighted, FromBandwidth) {
  auto w = LinkWeightMatrix::from_bandwidth(1000, {{{1, 2}, 100}}, 64 << 20);
  EXPECT_NEAR(w.weight(2, 1), 64.0 * (1 << 20) * 8 / 1e9, 1e-12);
  EXPECT_NEAR(w.weight(1, 2) / w.weight(2, 1), 10.0, 1e-12);
  EXPECT_THROW(LinkWeightMatrix::from_bandwidth(0, {}, 1), Error);
  LinkWeightMatrix m;
  EXPECT_THROW(m.set(1, 2, -1), Error);
  EXPECT_THROW(m.set(1, 2, std::numeric_limits<double>::infinity()), Error);
}

TEST(Weighted, RequestorNotHelper) {
  LinkWeightMatrix w;
  std::vector<NodeId> helpers = {1, 2, 3};
  EXPECT_THROW(weighted_path(w, 2, helpers, 2), Error);
}

// ---- full-node recovery ----

namespace {

std::vector<RecoveryTask> random_recovery(std::mt19937_64& rng, int stripes, int nodes,
                                          int width) {
  std::vector<RecoveryTask> tasks;
  auto all = iota_nodes(nodes);
  for (int s = 0; s < stripes; ++s) {
    std::shuffle(all.begin(), all.end(), rng);
    RecoveryTask task;
    task.stripe = s;
    task.target = 0;
    task.requestor = 1000 + s % 16;
    task.available.assign(all.begin() + 1, all.begin() + width);
    tasks.push_back(task);
  }
  return tasks;
}

}  // namespace

TEST(Recovery, PlainSingleStripeIsGreedyComposition) {
  RecoveryTask task{1, 0, 500, {4, 9, 2, 7, 5}};
  HelperTimestamps a, b;
  auto path = choose_path(task, 3, a, {});
  EXPECT_EQ(path, select_helpers_greedy(task.available, b, 3));
}

TEST(Recovery, UnscheduledTakesFirstK) {
  RecoveryTask task{1, 0, 500, {4, 9, 2, 7, 5}};
  HelperTimestamps ts;
  SelectionPolicy policy;
  policy.greedy = false;
  EXPECT_EQ(choose_path(task, 3, ts, policy), (std::vector<NodeId>{4, 9, 2}));
  EXPECT_EQ(ts.counter(), 0u);
}

TEST(Recovery, LoadIsSpreadEvenly) {
  std::mt19937_64 rng(64);
  auto tasks = random_recovery(rng, 64, 16, 14);
  HelperTimestamps ts;
  auto choices = select_full_recovery(tasks, 10, ts, {});
  ASSERT_EQ(choices.size(), 64u);
  auto load = helper_load(choices);
  int total = 0;
  for (auto& [n, c] : load) total += c;
  EXPECT_EQ(total, 640);
  double mean = 640.0 / 16;
  for (auto& [n, c] : load) EXPECT_NEAR(c, mean, 10.0) << "node " << n;
}

TEST(Recovery, GreedyNeverWorseThanUnscheduled) {
  std::mt19937_64 rng(1);
  int strict = 0;
  for (int placement = 0; placement < 100; ++placement) {
    auto tasks = random_recovery(rng, 64, 16, 14);
    HelperTimestamps ts_greedy, ts_plain;
    SelectionPolicy off;
    off.greedy = false;
    auto greedy = helper_load(select_full_recovery(tasks, 10, ts_greedy, {}));
    auto plain = helper_load(select_full_recovery(tasks, 10, ts_plain, off));
    int gmax = 0, pmax = 0;
    for (auto& [n, c] : greedy) gmax = std::max(gmax, c);
    for (auto& [n, c] : plain) pmax = std::max(pmax, c);
    ASSERT_LE(gmax, pmax);
    strict += gmax < pmax;
  }
  EXPECT_GE(strict, 90);
}

TEST(Recovery, WeightedModeAvoidsStraggler) {
  auto nodes = iota_nodes(16);
  LinkWeightMatrix w(1.0);
  auto folded = w.with_node_weights({{3, 10.0}}, nodes);
  for (NodeId n : nodes) folded.set(n, 3, 10.0);
  folded.set(3, 1000, 10.0);
  RecoveryTask task{1, 0, 1000, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13}};
  HelperTimestamps ts;
  SelectionPolicy policy;
  policy.mode = PathMode::weighted;
  policy.greedy = false;
  policy.weights = &folded;
  auto path = choose_path(task, 10, ts, policy);
  EXPECT_EQ(std::count(path.begin(), path.end(), 3u), 0);
}

TEST(Recovery, RackAwareModeNeedsTopology) {
  RecoveryTask task{1, 0, 1000, {1, 2, 3}};
  HelperTimestamps ts;
  SelectionPolicy policy;
  policy.mode = PathMode::rack_aware;
  EXPECT_THROW(choose_path(task, 2, ts, policy), Error);
  RackTopology topo{{1000, 0}, {1, 1}, {2, 0}, {3, 1}};
  policy.topology = &topo;
  policy.greedy = false;
  auto path = choose_path(task, 2, ts, policy);
  EXPECT_EQ(path.back(), 2u);
}

TEST(Recovery, ModeNames) {
  for (auto mode : {PathMode::plain, PathMode::rack_aware, PathMode::weighted}) {
    EXPECT_EQ(parse_path_mode(to_string(mode)), mode);
  }
  EXPECT_THROW(parse_path_mode("zigzag"), Error);
}
