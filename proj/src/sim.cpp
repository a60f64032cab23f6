#include "ecpipe/sim.hpp"

#include <algorithm>
#include <cstdio>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_map>

#include "ecpipe/error.hpp"

namespace ecpipe::sim {

using pipeline::Transfer;

SimResult simulate(const RepairPlan& plan, const LinkModel& links) {
  const auto& transfers = plan.transfers();
  const std::uint32_t s = plan.spec().slices();
  const std::size_t count = transfers.size();

  std::vector<std::uint32_t> pending(count);
  std::vector<std::vector<std::uint32_t>> dependents(count);
  for (const auto& t : transfers) {
    pending[t.id] = static_cast<std::uint32_t>(t.deps.size());
    for (auto d : t.deps) {
      if (d >= count) raise(ErrorCode::invalid_argument, "transfer depends on unknown transfer");
      dependents[d].push_back(t.id);
    }
  }

  using Key = std::pair<std::uint64_t, std::uint32_t>;  // (order, id)
  std::unordered_map<NodeId, std::set<Key>> ready;       // by source node
  for (const auto& t : transfers) {
    if (pending[t.id] == 0) ready[t.src].insert({t.order, t.id});
  }
  std::unordered_map<NodeId, bool> up_busy;
  std::unordered_map<NodeId, bool> down_busy;

  using Running = std::pair<Rational, std::uint32_t>;
  std::priority_queue<Running, std::vector<Running>, std::greater<>> running;

  SimResult result;
  result.trace.resize(count);
  Rational now = 0;
  std::size_t done = 0;

  while (done < count) {
    // Start transfers in priority order until nothing else fits.
    for (;;) {
      std::optional<Key> best;
      for (auto& [src, keys] : ready) {
        if (keys.empty() || up_busy[src]) continue;
        for (const auto& key : keys) {
          if (!down_busy[transfers[key.second].dst]) {
            if (!best || key < *best) best = key;
            break;
          }
        }
      }
      if (!best) break;
      const Transfer& t = transfers[best->second];
      ready[t.src].erase(*best);
      up_busy[t.src] = true;
      down_busy[t.dst] = true;
      const Rational duration = t.size(s) * links.weight(t.src, t.dst) / links.capacity;
      result.trace[t.id] = TransferSpan{t.id, now, now + duration};
      result.link_busy[{t.src, t.dst}] += duration;
      running.push({now + duration, t.id});
    }

    if (running.empty()) {
      raise(ErrorCode::invalid_argument, "plan has a dependency cycle; " +
                                             std::to_string(count - done) +
                                             " transfers can never start");
    }
    now = running.top().first;
    while (!running.empty() && running.top().first == now) {
      const Transfer& t = transfers[running.top().second];
      running.pop();
      up_busy[t.src] = false;
      down_busy[t.dst] = false;
      ++done;
      for (auto next : dependents[t.id]) {
        if (--pending[next] == 0) ready[transfers[next].src].insert({transfers[next].order, next});
      }
    }
  }

  result.completion_time = now;
  for (const auto& h : plan.inputs().helpers) result.reads[h.node] = 1;
  return result;
}

Rational analytic_time(Scheme scheme, int k, std::uint32_t s, int f) {
  if (k < 1 || s < 1 || f < 1) raise(ErrorCode::invalid_argument, "k, s and f must be positive");
  const Rational pipelined = Rational(1) + Rational(k - 1, s);
  auto single = [&] {
    if (f != 1) {
      raise(ErrorCode::invalid_argument,
            std::string(pipeline::to_string(scheme)) + " repairs a single block");
    }
  };
  switch (scheme) {
    case Scheme::rp_basic:
      single();
      return pipelined;
    case Scheme::rp_cyclic:
      single();
      if (k < 2) raise(ErrorCode::invalid_argument, "rp-cyclic needs k >= 2");
      if (s % static_cast<std::uint32_t>(k - 1) != 0) {
        raise(ErrorCode::invalid_argument, "no closed form for rp-cyclic when k-1 does not divide s");
      }
      return pipelined;
    case Scheme::rp_multi:
      return Rational(f) * pipelined;
    case Scheme::conventional:
      return Rational(k + f - 1);
    case Scheme::ppr: {
      single();
      std::int64_t rounds = 0;
      while ((std::int64_t{1} << rounds) < k + 1) ++rounds;
      return Rational(rounds);
    }
  }
  raise(ErrorCode::invalid_argument, "unknown scheme");
}

std::vector<SweepRow> sweep(const SweepGrid& grid) {
  std::vector<SweepRow> rows;
  for (Scheme scheme : grid.schemes) {
    for (int k : grid.k) {
      for (std::uint32_t s : grid.s) {
        for (int f : grid.f) {
          const bool single = scheme != Scheme::rp_multi && scheme != Scheme::conventional;
          if (single && f != 1) continue;
          if (scheme == Scheme::rp_cyclic && k < 2) continue;
          auto plan = RepairPlan::build(scheme, pipeline::synthetic_plan_inputs(k, f, s));
          SweepRow row{scheme, k, s, f, simulate(plan).completion_time, std::nullopt};
          try {
            row.analytic = analytic_time(scheme, k, s, f);
          } catch (const Error&) {
          }
          rows.push_back(std::move(row));
        }
      }
    }
  }
  std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::make_tuple(pipeline::to_string(a.scheme), a.k, a.s, a.f) <
           std::make_tuple(pipeline::to_string(b.scheme), b.k, b.s, b.f);
  });
  return rows;
}

std::string to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "scheme,k,s,f,timeslots,exact,analytic\n";
  for (const auto& r : rows) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9f", r.timeslots.to_double());
    out << pipeline::to_string(r.scheme) << ',' << r.k << ',' << r.s << ',' << r.f << ',' << buf
        << ',' << r.timeslots.str() << ',' << (r.analytic ? r.analytic->str() : "") << '\n';
  }
  return out.str();
}

}  // namespace ecpipe::sim
