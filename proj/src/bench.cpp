#include "ecpipe/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "ecpipe/error.hpp"
#include "ecpipe/executor.hpp"

namespace ecpipe::bench {

void BenchScenario::validate() const {
  if (k < 1 || n <= k) raise(ErrorCode::invalid_argument, "need 1 <= k < n");
  if (f < 1 || f > n - k) raise(ErrorCode::unrecoverable, "f must be in [1, n-k]");
  SliceSpec::make(block_size, slice_size);
  if (repetitions < 1) raise(ErrorCode::invalid_argument, "repetitions must be at least 1");
  if (link_rate < 0 || !(requestor_edge > 0)) {
    raise(ErrorCode::invalid_argument, "link rates must be positive");
  }
  if (schemes.empty()) raise(ErrorCode::invalid_argument, "no schemes to run");
  for (Scheme s : schemes) {
    bool multi = s == Scheme::rp_multi || s == Scheme::conventional;
    if (f > 1 && !multi) {
      raise(ErrorCode::invalid_argument,
            std::string(pipeline::to_string(s)) + " repairs a single block only");
    }
  }
}

double Measurement::mean() const {
  if (seconds.empty()) return 0;
  return std::accumulate(seconds.begin(), seconds.end(), 0.0) / seconds.size();
}

double Measurement::stddev() const {
  if (seconds.size() < 2) return 0;
  double m = mean(), acc = 0;
  for (double s : seconds) acc += (s - m) * (s - m);
  return std::sqrt(acc / (seconds.size() - 1));
}

double Measurement::min() const {
  return seconds.empty() ? 0 : *std::min_element(seconds.begin(), seconds.end());
}

double Measurement::max() const {
  return seconds.empty() ? 0 : *std::max_element(seconds.begin(), seconds.end());
}

namespace {

Bytes random_block(std::mt19937_64& rng, std::size_t size) {
  Bytes out(size);
  std::size_t i = 0;
  for (; i + 8 <= size; i += 8) {
    std::uint64_t v = rng();
    std::memcpy(out.data() + i, &v, 8);
  }
  for (; i < size; ++i) out[i] = static_cast<std::uint8_t>(rng());
  return out;
}

}  // namespace

Harness::Harness(BenchScenario scenario)
    : scenario_(std::move(scenario)), code_(scenario_.n, scenario_.k) {
  scenario_.validate();
  const int n = scenario_.n, k = scenario_.k, f = scenario_.f;

  stripe_.id = 1;
  stripe_.scheme = code_.name();
  stripe_.n = n;
  stripe_.k = k;
  stripe_.block_size = scenario_.block_size;
  stripe_.data_length = static_cast<std::uint64_t>(k) * scenario_.block_size;
  for (int i = 0; i < n; ++i) {
    stripe_.blocks.push_back(static_cast<BlockId>(i + 1));
    stripe_.nodes.push_back(static_cast<NodeId>(i + 1));
  }

  // Only blocks 0..f+k-1 are needed: the targets and the helpers after them.
  std::mt19937_64 rng(scenario_.seed);
  std::vector<Bytes> data;
  for (int i = 0; i < k; ++i) data.push_back(random_block(rng, scenario_.block_size));
  for (int i = 0; i < f + k; ++i) {
    Bytes block;
    if (i < k) {
      block = data[i];
    } else {
      block.assign(scenario_.block_size, 0);
      for (int d = 0; d < k; ++d) codec::combine_into(block, data[d], code_.generator().at(i, d));
    }
    if (i < f) {
      expected_.push_back(std::move(block));
    } else {
      store_.put(stripe_.blocks[i], std::move(block));
    }
  }
}

LinkProfile Harness::profile() const {
  LinkProfile p;
  p.default_rate = scenario_.link_rate;
  if (scenario_.link_rate > 0 && scenario_.requestor_edge != 1.0) {
    for (int j = 0; j < scenario_.f; ++j) {
      for (int i = scenario_.f; i < scenario_.f + scenario_.k; ++i) {
        p.link[{stripe_.nodes[i], kFirstRequestor + j}] =
            scenario_.link_rate * scenario_.requestor_edge;
      }
    }
  }
  return p;
}

double Harness::direct_once() {
  InProcTransport transport(scenario_.window, profile());
  const SessionId session = SessionId::random();
  const NodeId src = stripe_.nodes[scenario_.f];
  const NodeId dst = stripe_.nodes[scenario_.f + 1];
  const SliceSpec spec = SliceSpec::make(scenario_.block_size, scenario_.slice_size);
  auto handle = store_.open(stripe_.blocks[scenario_.f]);

  const auto start = Clock::now();
  std::size_t received = 0;
  std::thread receiver([&] {
    auto source = transport.accept(session, src, dst);
    while (auto frame = source->receive(std::chrono::milliseconds(60000))) {
      received += frame->payload.size();
    }
  });
  {
    auto sink = transport.connect(session, src, dst);
    for (std::uint32_t t = 0; t < spec.slices(); ++t) {
      Bytes payload(spec.slice_size);
      handle->read(spec.offset(t), payload);
      sink->send(SliceFrame{session, 0, t, 1, std::move(payload)});
    }
    sink->close();
  }
  receiver.join();
  const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
  if (received != scenario_.block_size) raise(ErrorCode::length_mismatch, "direct send lost data");
  return elapsed;
}

double Harness::repair_once(Scheme scheme) {
  const int f = scenario_.f, k = scenario_.k;
  std::vector<int> targets(f);
  std::iota(targets.begin(), targets.end(), 0);
  std::vector<NodeId> path(stripe_.nodes.begin() + f, stripe_.nodes.begin() + f + k);
  std::vector<NodeId> requestors;
  for (int j = 0; j < f; ++j) requestors.push_back(kFirstRequestor + j);
  auto inputs = pipeline::make_plan_inputs(code_, stripe_, targets, path, requestors,
                                           SliceSpec::make(scenario_.block_size, scenario_.slice_size));
  auto plan = pipeline::RepairPlan::build(scheme, std::move(inputs));

  InProcTransport transport(scenario_.window, profile());
  pipeline::ExecOptions options;
  options.window = scenario_.window;
  options.timeout = std::chrono::milliseconds(120000);
  auto result = pipeline::execute(plan, transport, store_, options);
  const double elapsed = std::chrono::duration<double>(result.elapsed).count();
  for (int j = 0; j < f; ++j) {
    if (result.blocks.at(j) != expected_[j]) {
      raise(ErrorCode::corrupt_frame, std::string(pipeline::to_string(scheme)) +
                                          " rebuilt a wrong block for target " + std::to_string(j));
    }
  }
  return elapsed;
}

Measurement Harness::direct_send() {
  Measurement m{"direct", {}};
  for (int r = 0; r < scenario_.repetitions; ++r) m.seconds.push_back(direct_once());
  return m;
}

Measurement Harness::repair(Scheme scheme) {
  Measurement m{std::string(pipeline::to_string(scheme)), {}};
  for (int r = 0; r < scenario_.repetitions; ++r) m.seconds.push_back(repair_once(scheme));
  return m;
}

std::vector<Measurement> Harness::run_all() {
  std::vector<Measurement> out;
  out.push_back(direct_send());
  for (Scheme s : scenario_.schemes) out.push_back(repair(s));
  return out;
}

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string to_csv(const BenchScenario& scenario, const std::vector<Measurement>& rows) {
  std::ostringstream out;
  out << "label,n,k,f,block_size,slice_size,link_mbps,requestor_edge,run,seconds\n";
  auto prefix = [&](const Measurement& m) {
    out << m.label << ',' << scenario.n << ',' << scenario.k << ',' << scenario.f << ','
        << scenario.block_size << ',' << scenario.slice_size << ','
        << scenario.link_rate * 8 / 1e6 << ',' << scenario.requestor_edge << ',';
  };
  for (const auto& m : rows) {
    for (std::size_t r = 0; r < m.seconds.size(); ++r) {
      prefix(m);
      out << r << ',' << fixed6(m.seconds[r]) << '\n';
    }
    prefix(m);
    out << "mean," << fixed6(m.mean()) << '\n';
    prefix(m);
    out << "stddev," << fixed6(m.stddev()) << '\n';
  }
  return out.str();
}

}  // namespace ecpipe::bench
