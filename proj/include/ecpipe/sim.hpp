#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ecpipe/plan.hpp"
#include "ecpipe/rational.hpp"

namespace ecpipe::sim {

using pipeline::RepairPlan;
using pipeline::Scheme;

/// Every node has one uplink and one downlink. A transfer u->v holds u's
/// uplink and v's downlink for size * weight(u, v) / capacity timeslots.
struct LinkModel {
  Rational capacity = 1;  // blocks per timeslot on each port
  std::map<std::pair<NodeId, NodeId>, Rational> weights;

  Rational weight(NodeId src, NodeId dst) const {
    auto it = weights.find({src, dst});
    return it == weights.end() ? Rational(1) : it->second;
  }
};

struct TransferSpan {
  std::uint32_t transfer = 0;
  Rational start;
  Rational end;
};

struct SimResult {
  Rational completion_time;
  std::map<std::pair<NodeId, NodeId>, Rational> link_busy;
  std::map<NodeId, int> reads;  // local block reads per helper
  std::vector<TransferSpan> trace;  // indexed by transfer id
};

/// Event-driven list scheduling of the plan: among ready transfers whose
/// ports are both free, the one with the smallest planned order starts first.
SimResult simulate(const RepairPlan& plan, const LinkModel& links = {});

/// Closed-form repair time in timeslots. Throws Error(invalid_argument) where
/// no closed form applies (e.g. rp-cyclic when k-1 does not divide s).
Rational analytic_time(Scheme scheme, int k, std::uint32_t s, int f);

struct SweepRow {
  Scheme scheme;
  int k = 0;
  std::uint32_t s = 0;
  int f = 0;
  Rational timeslots;
  std::optional<Rational> analytic;
};

struct SweepGrid {
  std::vector<Scheme> schemes;
  std::vector<int> k;
  std::vector<std::uint32_t> s;
  std::vector<int> f;
};

/// Simulates the cartesian product of the grid. Combinations a scheme does not
/// support (single-block schemes with f > 1, cyclic with k < 2) are skipped.
/// Rows are sorted by (scheme, k, s, f).
std::vector<SweepRow> sweep(const SweepGrid& grid);

/// Columns: scheme,k,s,f,timeslots,exact,analytic
std::string to_csv(const std::vector<SweepRow>& rows);

}  // namespace ecpipe::sim
