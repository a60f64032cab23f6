#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ecpipe/codec.hpp"
#include "ecpipe/rational.hpp"
#include "ecpipe/types.hpp"

namespace ecpipe::pipeline {

enum class Scheme { conventional, ppr, rp_basic, rp_cyclic, rp_multi };

std::string_view to_string(Scheme scheme);
Scheme parse_scheme(std::string_view name);
const std::vector<Scheme>& all_schemes();

/// Slice index of a transfer that moves a whole block; dependents wait for
/// the complete block before they start.
inline constexpr std::uint32_t kWholeBlock = std::numeric_limits<std::uint32_t>::max();

enum class PayloadKind : std::uint8_t {
  partial,  // partial linear combination for targets [target_begin, +target_count)
  raw,      // the sender's unscaled local block
};

/// One edge of the repair schedule.
struct Transfer {
  std::uint32_t id = 0;
  NodeId src = 0;
  NodeId dst = 0;
  std::uint32_t slice = kWholeBlock;
  PayloadKind kind = PayloadKind::partial;
  std::uint16_t target_begin = 0;
  std::uint16_t target_count = 1;
  /// Planned start step in units of one slice transmission; lower runs first.
  std::uint64_t order = 0;
  std::vector<std::uint32_t> deps;

  bool whole_block() const { return slice == kWholeBlock; }
  bool carries_target(int target) const {
    return kind == PayloadKind::raw ||
           (target >= target_begin && target < target_begin + target_count);
  }
  /// Transfer size in blocks.
  Rational size(std::uint32_t slices_per_block) const;
};

struct HelperRef {
  NodeId node = 0;
  int index = 0;  // position of the helper's block in the stripe
  BlockId block = 0;

  bool operator==(const HelperRef&) const = default;
};

/// Everything a plan is derived from. This is what travels in PLAN_DISPATCH;
/// every participant rebuilds the identical transfer list locally.
struct PlanInputs {
  SessionId session;
  StripeId stripe = 0;
  std::vector<int> targets;
  std::vector<BlockId> target_blocks;
  std::vector<HelperRef> helpers;  // path order N_1..N_k
  std::vector<NodeId> requestors;  // requestors[j] receives targets[j]
  codec::Matrix coefficients;      // targets x helpers
  SliceSpec spec;
};

/// Resolves a path of helper nodes against a stripe and computes decoding
/// coefficients.
PlanInputs make_plan_inputs(const codec::CodingScheme& scheme, const StripeMetadata& stripe,
                            std::span<const int> targets, std::span<const NodeId> path,
                            std::span<const NodeId> requestors, SliceSpec spec);

/// Inputs for timing-only use: helpers 1..k, requestors 1001..1000+f, all
/// coefficients 1.
PlanInputs synthetic_plan_inputs(int k, int f, std::uint32_t slices);

class RepairPlan {
 public:
  static RepairPlan build(Scheme scheme, PlanInputs inputs);

  Scheme scheme() const { return scheme_; }
  const PlanInputs& inputs() const { return inputs_; }
  const SessionId& session() const { return inputs_.session; }
  const SliceSpec& spec() const { return inputs_.spec; }
  int k() const { return static_cast<int>(inputs_.helpers.size()); }
  int f() const { return static_cast<int>(inputs_.targets.size()); }
  const std::vector<Transfer>& transfers() const { return transfers_; }

  /// Position of `node` on the helper path, or -1.
  int helper_position(NodeId node) const;
  /// Target positions delivered to `node`.
  std::vector<int> targets_for(NodeId node) const;
  /// Helpers followed by requestors, without duplicates.
  std::vector<NodeId> participants() const;

 private:
  RepairPlan(Scheme scheme, PlanInputs inputs) : scheme_(scheme), inputs_(std::move(inputs)) {}
  void add(NodeId src, NodeId dst, std::uint32_t slice, PayloadKind kind,
           std::uint16_t target_begin, std::uint16_t target_count, std::uint64_t order);
  void compute_dependencies();

  void build_basic();
  void build_cyclic();
  void build_multi();
  void build_conventional();
  void build_ppr();

  Scheme scheme_;
  PlanInputs inputs_;
  std::vector<Transfer> transfers_;
};

// Convenience builders mirroring the operator-facing operations.
RepairPlan plan_basic(const codec::CodingScheme& scheme, const StripeMetadata& stripe,
                      int target, std::span<const NodeId> path, NodeId requestor,
                      SliceSpec spec);
RepairPlan plan_cyclic(const codec::CodingScheme& scheme, const StripeMetadata& stripe,
                       int target, std::span<const NodeId> helpers, NodeId requestor,
                       SliceSpec spec);
RepairPlan plan_multiblock(const codec::CodingScheme& scheme, const StripeMetadata& stripe,
                           std::span<const int> targets, std::span<const NodeId> path,
                           std::span<const NodeId> requestors, SliceSpec spec);
RepairPlan plan_conventional(const codec::CodingScheme& scheme, const StripeMetadata& stripe,
                             std::span<const int> targets, std::span<const NodeId> helpers,
                             std::span<const NodeId> requestors, SliceSpec spec);
RepairPlan plan_ppr(const codec::CodingScheme& scheme, const StripeMetadata& stripe,
                    int target, std::span<const NodeId> helpers, NodeId requestor,
                    SliceSpec spec);

}  // namespace ecpipe::pipeline
