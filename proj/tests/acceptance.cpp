// Runs the eight acceptance checks and prints one PASS/FAIL line per check.
// Usage: acceptance [check numbers...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "ecpipe/bench.hpp"
#include "ecpipe/block_store.hpp"
#include "ecpipe/codec.hpp"
#include "ecpipe/executor.hpp"
#include "ecpipe/pathsel.hpp"
#include "ecpipe/plan.hpp"
#include "ecpipe/sim.hpp"
#include "ecpipe/transport.hpp"

using namespace ecpipe;
using pipeline::Scheme;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail << "first failure: " << what << "; ";
      pass = false;
    }
  }
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Bytes random_bytes(std::mt19937_64& rng, std::size_t n) {
  Bytes b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(rng());
  return b;
}

std::vector<NodeId> iota_nodes(int count, NodeId first = 1) {
  std::vector<NodeId> out(count);
  std::iota(out.begin(), out.end(), first);
  return out;
}

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

// ---- 1: any n-k erasures decode ----

void codec_mds(Outcome& out) {
  const std::pair<int, int> codes[] = {{9, 6}, {14, 10}, {16, 12}};
  std::mt19937_64 rng(1);
  std::size_t decodes = 0;
  for (auto [n, k] : codes) {
    codec::CodingScheme code(n, k);
    for (int stripe = 0; stripe < 1000; ++stripe) {
      std::vector<Bytes> data;
      for (int i = 0; i < k; ++i) data.push_back(random_bytes(rng, 4096));
      auto blocks = codec::encode_stripe(code, data);
      for (int i = 0; i < k; ++i) out.require(blocks[i] == data[i], "encoding is not systematic");

      std::set<std::vector<int>> seen;
      while (seen.size() < 50) {
        const int lost = 1 + static_cast<int>(rng() % (n - k));
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<int> erased(order.begin(), order.begin() + lost);
        std::sort(erased.begin(), erased.end());
        if (!seen.insert(erased).second) continue;
        // Decode from a random k of the survivors.
        std::map<int, Bytes> available;
        for (int i = lost; i < lost + k; ++i) available[order[i]] = blocks[order[i]];
        auto rebuilt = codec::decode(code, available, erased);
        for (std::size_t j = 0; j < erased.size(); ++j) {
          if (rebuilt[j] != blocks[erased[j]]) {
            out.require(false, code.name() + " stripe " + std::to_string(stripe) + " block " +
                                   std::to_string(erased[j]));
          }
        }
        ++decodes;
      }
    }
  }
  out.detail << decodes << " erasure patterns decoded over 3000 stripes";
}

// ---- 2: simulator equals the closed forms ----

Rational pipelined(int k, std::uint32_t s) { return Rational(1) + Rational(k - 1, s); }

int ceil_log2(int x) {
  int r = 0;
  while ((1 << r) < x) ++r;
  return r;
}

void sim_closed_forms(Outcome& out) {
  const std::uint32_t slices[] = {1, 6, 64, 2048};
  int compared = 0;
  auto check = [&](Scheme scheme, int k, std::uint32_t s, int f, Rational expected) {
    auto plan = pipeline::RepairPlan::build(scheme, pipeline::synthetic_plan_inputs(k, f, s));
    auto got = sim::simulate(plan).completion_time;
    std::ostringstream what;
    what << pipeline::to_string(scheme) << " k=" << k << " s=" << s << " f=" << f << ": simulated " << got
         << ", expected " << expected;
    out.require(got == expected, what.str());
    ++compared;
  };
  for (int k = 2; k <= 16; ++k) {
    for (std::uint32_t s : slices) {
      for (int f = 1; f <= 4; ++f) {
        check(Scheme::conventional, k, s, f, Rational(k + f - 1));
        check(Scheme::rp_multi, k, s, f, Rational(f) * pipelined(k, s));
        if (s == 1) check(Scheme::rp_multi, k, s, f, Rational(f * k));
        if (f > 1) continue;
        check(Scheme::rp_basic, k, s, f, pipelined(k, s));
        check(Scheme::ppr, k, s, f, Rational(ceil_log2(k + 1)));
        if (s % (k - 1) == 0) check(Scheme::rp_cyclic, k, s, f, pipelined(k, s));
      }
    }
  }
  out.detail << compared << " exact comparisons";
}

// ---- 3: weighted path is the minimax path ----

void weighted_optimality(Outcome& out) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(0.1, 10.0);
  auto random_weights = [&](const std::vector<NodeId>& nodes) {
    pathsel::LinkWeightMatrix w(1.0);
    for (NodeId a : nodes) {
      for (NodeId b : nodes) {
        if (a != b) w.set(a, b, dist(rng));
      }
    }
    return w;
  };
  for (int instance = 0; instance < 200; ++instance) {
    const int n = 3 + static_cast<int>(rng() % 6);  // 3..8 nodes including the requestor
    const int k = 1 + static_cast<int>(rng() % (n - 1));
    auto nodes = iota_nodes(n);
    auto w = random_weights(nodes);
    const NodeId requestor = nodes.back();
    std::vector<NodeId> helpers(nodes.begin(), nodes.end() - 1);
    auto found = pathsel::weighted_path(w, requestor, helpers, k);
    double best = std::numeric_limits<double>::infinity();
    for_each_arrangement(helpers, k, [&](const std::vector<NodeId>& p) {
      best = std::min(best, pathsel::path_max_weight(w, p, requestor));
    });
    out.require(static_cast<int>(found.path.size()) == k, "path length");
    out.require(pathsel::path_max_weight(w, found.path, requestor) == found.max_weight, "reported weight");
    out.require(found.max_weight == best, "instance " + std::to_string(instance) + " is not minimax");
  }

  auto nodes = iota_nodes(15);
  auto w = random_weights(nodes);
  std::vector<NodeId> helpers(nodes.begin(), nodes.end() - 1);
  auto big = pathsel::weighted_path(w, 15, helpers, 10);
  const double brute = pathsel::permutation_count(14, 10);
  const double fraction = static_cast<double>(big.expanded) / brute;
  out.require(fraction <= 0.01, "14-helper search expanded too much");
  out.detail << "200 instances minimax; 14 helpers, k=10: " << big.expanded << " expansions = " << fraction * 100
             << "% of " << brute;
}

// ---- 4: rack-aware path ----

void rack_aware(Outcome& out) {
  std::mt19937_64 rng(4);
  for (int instance = 0; instance < 500; ++instance) {
    const int n = 3 + static_cast<int>(rng() % 7);  // 3..9 nodes including the requestor
    const int k = 1 + static_cast<int>(rng() % (n - 1));
    pathsel::RackTopology topo;
    for (NodeId node = 1; node <= static_cast<NodeId>(n); ++node) topo[node] = static_cast<int>(rng() % 3);
    const NodeId requestor = 1;
    auto helpers = iota_nodes(n - 1, 2);
    auto path = pathsel::rack_aware_path(topo, requestor, helpers, k);

    int best = std::numeric_limits<int>::max();
    for_each_arrangement(helpers, k, [&](const std::vector<NodeId>& p) {
      best = std::min(best, pathsel::cross_rack_links(topo, p, requestor));
    });
    const std::string tag = "instance " + std::to_string(instance);
    out.require(static_cast<int>(path.size()) == k, tag + " path length");
    out.require(pathsel::cross_rack_links(topo, path, requestor) == best, tag + " is not the minimum");

    std::map<int, int> in, outd;
    std::vector<NodeId> chain = path;
    chain.push_back(requestor);
    for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
      const int a = topo[chain[i]], b = topo[chain[i + 1]];
      if (a == b) continue;
      ++outd[a];
      ++in[b];
    }
    for (auto& [rack, d] : in) out.require(d <= 1, tag + " rack entered twice");
    for (auto& [rack, d] : outd) out.require(d <= 1, tag + " rack left twice");
  }
  out.detail << "500 topologies at the exhaustive minimum, every rack entered and left at most once";
}

// ---- 5 and 6: shaped in-process repairs ----

constexpr double kBenchRate = 50e6;  // bytes per second on every port

bench::BenchScenario shaped(int n, int k, int f, std::vector<Scheme> schemes) {
  bench::BenchScenario s;
  s.schemes = std::move(schemes);
  s.n = n;
  s.k = k;
  s.f = f;
  s.block_size = 64 << 20;
  s.slice_size = 32 << 10;
  s.link_rate = kBenchRate;
  s.repetitions = 10;
  return s;
}

void shaped_ratios(Outcome& out) {
  char buf[512];
  double direct, basic10, conventional;
  {
    bench::Harness h(shaped(14, 10, 1, {Scheme::rp_basic, Scheme::conventional}));
    direct = h.direct_send().mean();
    basic10 = h.repair(Scheme::rp_basic).mean();
    conventional = h.repair(Scheme::conventional).mean();
  }
  out.require(basic10 <= 1.35 * direct, "(a) rp-basic vs direct send");
  out.require(basic10 <= 0.35 * conventional, "(b) rp-basic vs conventional");

  double basic6, basic12;
  {
    bench::Harness h(shaped(9, 6, 1, {Scheme::rp_basic}));
    basic6 = h.repair(Scheme::rp_basic).mean();
  }
  {
    bench::Harness h(shaped(16, 12, 1, {Scheme::rp_basic}));
    basic12 = h.repair(Scheme::rp_basic).mean();
  }
  const double spread = std::max({basic6, basic10, basic12}) / std::min({basic6, basic10, basic12});
  out.require(spread <= 1.25, "(c) rp-basic across k");

  double edge_basic, edge_cyclic;
  {
    auto s = shaped(14, 10, 1, {Scheme::rp_basic, Scheme::rp_cyclic});
    s.requestor_edge = 0.1;
    bench::Harness h(s);
    edge_basic = h.repair(Scheme::rp_basic).mean();
    edge_cyclic = h.repair(Scheme::rp_cyclic).mean();
  }
  out.require(edge_basic >= 2 * edge_cyclic, "(d) cyclic vs basic at a slow requestor edge");

  double multi, conventional4;
  {
    bench::Harness h(shaped(14, 10, 4, {Scheme::rp_multi, Scheme::conventional}));
    multi = h.repair(Scheme::rp_multi).mean();
    conventional4 = h.repair(Scheme::conventional).mean();
  }
  out.require(multi <= 0.6 * conventional4, "(e) rp-multi vs conventional, f=4");

  std::snprintf(buf, sizeof buf,
                "(a) basic/direct %.3f (%.2fs/%.2fs) (b) basic/conventional %.3f (%.2fs) "
                "(c) k=6,10,12 %.2fs %.2fs %.2fs max/min %.3f (d) basic/cyclic at 1/10 edge %.2f (%.2fs/%.2fs) "
                "(e) multi/conventional f=4 %.3f (%.2fs/%.2fs)",
                basic10 / direct, basic10, direct, basic10 / conventional, conventional, basic6, basic10, basic12,
                spread, edge_basic / edge_cyclic, edge_basic, edge_cyclic, multi / conventional4, multi,
                conventional4);
  out.detail << buf;
}

void slice_sweep(Outcome& out) {
  const std::size_t sizes[] = {1 << 10, 4 << 10, 32 << 10, 1 << 20, 16 << 20};
  std::vector<double> times;
  for (std::size_t size : sizes) {
    auto s = shaped(14, 10, 1, {Scheme::rp_basic});
    s.slice_size = size;
    s.repetitions = 3;
    bench::Harness h(s);
    times.push_back(h.repair(Scheme::rp_basic).mean());
  }
  const auto argmin = std::min_element(times.begin(), times.end()) - times.begin();
  out.require(argmin != 0 && argmin != static_cast<long>(times.size()) - 1, "minimum at an end of the sweep");
  char buf[256];
  std::snprintf(buf, sizeof buf, "1K %.2fs, 4K %.2fs, 32K %.2fs, 1M %.2fs, 16M %.2fs", times[0], times[1],
                times[2], times[3], times[4]);
  out.detail << buf;
}

// ---- 7: every scheme rebuilds the same bytes ----

void scheme_equivalence(Outcome& out) {
  const std::pair<int, int> codes[] = {{9, 6}, {14, 10}, {16, 12}};
  const Scheme schemes[] = {Scheme::conventional, Scheme::ppr, Scheme::rp_basic, Scheme::rp_cyclic,
                            Scheme::rp_multi};
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    auto [n, k] = codes[trial % 3];
    codec::CodingScheme code(n, k);
    const std::size_t slice = 4096;
    const std::size_t block = slice * (4 + rng() % 29);
    std::vector<Bytes> data;
    for (int i = 0; i < k; ++i) data.push_back(random_bytes(rng, block));
    auto blocks = codec::encode_stripe(code, data);

    StripeMetadata stripe;
    stripe.id = trial + 1;
    stripe.scheme = code.name();
    stripe.n = n;
    stripe.k = k;
    stripe.block_size = block;
    stripe.data_length = k * block;
    MemoryBlockStore store;
    for (int i = 0; i < n; ++i) {
      stripe.blocks.push_back(stripe.id * 100 + i);
      stripe.nodes.push_back(static_cast<NodeId>(i + 1));
      store.put(stripe.blocks.back(), blocks[i]);
    }
    const int target = static_cast<int>(rng() % n);
    std::vector<NodeId> others;
    for (int i = 0; i < n; ++i) {
      if (i != target) others.push_back(stripe.nodes[i]);
    }
    std::shuffle(others.begin(), others.end(), rng);
    others.resize(k);
    const int targets[] = {target};
    const NodeId requestors[] = {1001};

    for (Scheme scheme : schemes) {
      auto inputs = pipeline::make_plan_inputs(code, stripe, targets, others, requestors, SliceSpec::make(block, slice));
      auto plan = pipeline::RepairPlan::build(scheme, std::move(inputs));
      InProcTransport transport(16);
      auto result = pipeline::execute(plan, transport, store);
      out.require(result.blocks.at(0) == blocks[target], "stripe " + std::to_string(trial) + " " +
                                                             std::string(pipeline::to_string(scheme)));
    }
  }
  out.detail << "100 stripes, 5 schemes, all rebuilt blocks equal the lost block";
}

// ---- 8: greedy scheduling for full-node recovery ----

void recovery_scheduling(Outcome& out) {
  std::mt19937_64 rng(8);
  int strict = 0;
  for (int placement = 0; placement < 100; ++placement) {
    std::vector<pathsel::RecoveryTask> tasks;
    auto all = iota_nodes(16);
    for (int s = 0; s < 64; ++s) {
      std::shuffle(all.begin(), all.end(), rng);
      pathsel::RecoveryTask task;
      task.stripe = s;
      task.requestor = 1000 + s % 16;
      task.available.assign(all.begin() + 1, all.begin() + 14);  // width 14, one block lost
      tasks.push_back(task);
    }
    pathsel::HelperTimestamps greedy_ts, plain_ts;
    pathsel::SelectionPolicy off;
    off.greedy = false;
    auto peak = [](const std::map<NodeId, int>& load) {
      int m = 0;
      for (auto& [node, c] : load) m = std::max(m, c);
      return m;
    };
    const int g = peak(pathsel::helper_load(pathsel::select_full_recovery(tasks, 10, greedy_ts, {})));
    const int p = peak(pathsel::helper_load(pathsel::select_full_recovery(tasks, 10, plain_ts, off)));
    out.require(g <= p, "placement " + std::to_string(placement) + ": greedy peak above baseline");
    strict += g < p;
  }
  out.require(strict >= 90, "strict improvement in fewer than 90 placements");
  out.detail << "greedy peak below the unscheduled peak in " << strict << "/100 placements, never above";
}

struct Check {
  int number;
  const char* name;
  double budget_s;  // 0: no stated bound
  std::function<void(Outcome&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Check> checks = {
      {1, "codec MDS property", 60, codec_mds},
      {2, "simulator equals closed forms", 10, sim_closed_forms},
      {3, "weighted path optimality", 120, weighted_optimality},
      {4, "rack-aware path", 60, rack_aware},
      {5, "shaped end-to-end ratios", 0, shaped_ratios},
      {6, "slice-size sweep shape", 0, slice_sweep},
      {7, "scheme equivalence", 60, scheme_equivalence},
      {8, "full-node recovery scheduling", 0, recovery_scheduling},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : checks) {
    if (!only.empty() && !only.count(c.number)) continue;
    Outcome out;
    const auto t0 = Clock::now();
    try {
      c.run(out);
    } catch (const std::exception& e) {
      out.require(false, std::string("exception: ") + e.what());
    }
    const double took = since(t0);
    if (c.budget_s > 0) out.require(took < c.budget_s, "over the time budget");
    std::printf("%s %d %s: %s [%.1fs%s]\n", out.pass ? "PASS" : "FAIL", c.number, c.name, out.detail.str().c_str(),
                took, c.budget_s > 0 ? (" of " + std::to_string(static_cast<int>(c.budget_s)) + "s").c_str() : "");
    std::fflush(stdout);
    failed += !out.pass;
  }
  return failed == 0 ? 0 : 1;
}
