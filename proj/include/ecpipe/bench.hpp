#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ecpipe/block_store.hpp"
#include "ecpipe/codec.hpp"
#include "ecpipe/plan.hpp"
#include "ecpipe/transport.hpp"

namespace ecpipe::bench {

using pipeline::Scheme;

/// One in-process benchmark configuration. Every port and link runs at
/// link_rate; links from helpers into requestors run at link_rate * requestor_edge.
struct BenchScenario {
  std::vector<Scheme> schemes{Scheme::rp_basic, Scheme::conventional};
  int n = 14;
  int k = 10;
  int f = 1;
  std::size_t block_size = kDefaultBlockSize;
  std::size_t slice_size = kDefaultSliceSize;
  double link_rate = 50e6;  // bytes per second, 0 = unshaped
  double requestor_edge = 1.0;
  int repetitions = 10;
  std::uint64_t seed = 1;
  std::size_t window = 64;

  void validate() const;
};

struct Measurement {
  std::string label;  // scheme name, or "direct" for the single-link baseline
  std::vector<double> seconds;

  double mean() const;
  double stddev() const;  // sample standard deviation
  double min() const;
  double max() const;
};

/// Generates one random stripe in memory and times repairs of its first f
/// blocks from the next k. Each run uses a fresh session and fresh shaping
/// state, and checks the rebuilt blocks byte for byte.
class Harness {
 public:
  explicit Harness(BenchScenario scenario);

  const BenchScenario& scenario() const { return scenario_; }
  LinkProfile profile() const;

  /// One block streamed over a single link in slice-sized frames.
  Measurement direct_send();
  Measurement repair(Scheme scheme);
  /// direct_send() followed by repair() of every scheme in the scenario.
  std::vector<Measurement> run_all();

  static constexpr NodeId kFirstRequestor = 1001;

 private:
  double direct_once();
  double repair_once(Scheme scheme);

  BenchScenario scenario_;
  codec::CodingScheme code_;
  StripeMetadata stripe_;
  MemoryBlockStore store_;
  std::vector<Bytes> expected_;  // targets 0..f-1
};

/// Per-run rows followed by mean and stddev rows. Columns:
/// label,n,k,f,block_size,slice_size,link_mbps,requestor_edge,run,seconds
std::string to_csv(const BenchScenario& scenario, const std::vector<Measurement>& rows);

}  // namespace ecpipe::bench
