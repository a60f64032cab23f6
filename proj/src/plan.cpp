#include "ecpipe/plan.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include "ecpipe/error.hpp"
#include "ecpipe/frame.hpp"

namespace ecpipe::pipeline {

std::string_view to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::conventional: return "conventional";
    case Scheme::ppr: return "ppr";
    case Scheme::rp_basic: return "rp-basic";
    case Scheme::rp_cyclic: return "rp-cyclic";
    case Scheme::rp_multi: return "rp-multi";
  }
  return "unknown";
}

Scheme parse_scheme(std::string_view name) {
  for (Scheme s : all_schemes()) {
    if (to_string(s) == name) return s;
  }
  raise(ErrorCode::invalid_argument, "unknown repair scheme: " + std::string(name));
}

const std::vector<Scheme>& all_schemes() {
  static const std::vector<Scheme> kAll = {Scheme::conventional, Scheme::ppr, Scheme::rp_basic,
                                           Scheme::rp_cyclic, Scheme::rp_multi};
  return kAll;
}

Rational Transfer::size(std::uint32_t slices_per_block) const {
  const std::int64_t units = kind == PayloadKind::raw ? 1 : target_count;
  if (whole_block()) return Rational(units);
  return Rational(units, slices_per_block);
}

PlanInputs make_plan_inputs(const codec::CodingScheme& scheme, const StripeMetadata& stripe,
                            std::span<const int> targets, std::span<const NodeId> path,
                            std::span<const NodeId> requestors, SliceSpec spec) {
  if (stripe.n != scheme.n() || stripe.k != scheme.k()) {
    raise(ErrorCode::invalid_argument, "stripe does not match coding scheme");
  }
  if (targets.empty()) raise(ErrorCode::invalid_argument, "repair needs at least one target");
  if (static_cast<int>(targets.size()) > scheme.n() - scheme.k()) {
    raise(ErrorCode::unrecoverable, std::to_string(targets.size()) +
                                        " failed blocks exceed the tolerance n-k=" +
                                        std::to_string(scheme.n() - scheme.k()));
  }
  if (static_cast<int>(path.size()) < scheme.k()) {
    raise(ErrorCode::insufficient_helpers, "path has " + std::to_string(path.size()) +
                                               " helpers, need k=" + std::to_string(scheme.k()));
  }
  if (static_cast<int>(path.size()) > scheme.k()) {
    raise(ErrorCode::invalid_argument, "path has more than k helpers");
  }
  if (requestors.size() != targets.size()) {
    raise(ErrorCode::invalid_argument, "need exactly one requestor per target");
  }

  PlanInputs in;
  in.session = SessionId::random();
  in.stripe = stripe.id;
  in.spec = spec;
  in.targets.assign(targets.begin(), targets.end());
  for (int t : targets) {
    if (t < 0 || t >= stripe.n) raise(ErrorCode::invalid_argument, "target index out of range");
    in.target_blocks.push_back(stripe.blocks[t]);
  }
  std::vector<int> helper_indices;
  for (NodeId node : path) {
    const int index = stripe.index_of_node(node);
    if (index < 0) {
      raise(ErrorCode::invalid_argument,
            "node " + std::to_string(node) + " holds no block of stripe " + std::to_string(stripe.id));
    }
    if (std::find(targets.begin(), targets.end(), index) != targets.end()) {
      raise(ErrorCode::invalid_argument, "target block lies on the helper path");
    }
    helper_indices.push_back(index);
    in.helpers.push_back(HelperRef{node, index, stripe.blocks[index]});
  }
  in.requestors.assign(requestors.begin(), requestors.end());
  in.coefficients =
      codec::decoding_coefficients(scheme, in.targets, helper_indices).coefficients;
  return in;
}

PlanInputs synthetic_plan_inputs(int k, int f, std::uint32_t slices) {
  if (k < 1 || f < 1 || slices < 1) raise(ErrorCode::invalid_argument, "k, f and s must be positive");
  PlanInputs in;
  in.session = SessionId{};
  in.spec = SliceSpec{slices, 1};
  for (int j = 0; j < f; ++j) {
    in.targets.push_back(j);
    in.target_blocks.push_back(static_cast<BlockId>(j));
    in.requestors.push_back(static_cast<NodeId>(1001 + j));
  }
  for (int i = 0; i < k; ++i) {
    in.helpers.push_back(HelperRef{static_cast<NodeId>(i + 1), f + i, static_cast<BlockId>(f + i)});
  }
  in.coefficients = codec::Matrix(f, k);
  for (int j = 0; j < f; ++j) {
    for (int i = 0; i < k; ++i) in.coefficients.at(j, i) = 1;
  }
  return in;
}

RepairPlan RepairPlan::build(Scheme scheme, PlanInputs inputs) {
  const int k = static_cast<int>(inputs.helpers.size());
  const int f = static_cast<int>(inputs.targets.size());
  if (k < 1) raise(ErrorCode::insufficient_helpers, "plan has no helpers");
  if (f < 1) raise(ErrorCode::invalid_argument, "plan has no targets");
  if (f >= kRawTarget) raise(ErrorCode::invalid_argument, "too many targets");
  if (static_cast<int>(inputs.requestors.size()) != f) {
    raise(ErrorCode::invalid_argument, "need exactly one requestor per target");
  }
  if (inputs.coefficients.rows() != f || inputs.coefficients.cols() != k) {
    raise(ErrorCode::invalid_argument, "coefficient matrix shape does not match plan");
  }
  if (inputs.spec.slice_size == 0 || inputs.spec.slices() < 1 ||
      inputs.spec.block_size % inputs.spec.slice_size != 0) {
    raise(ErrorCode::invalid_argument, "invalid slice spec");
  }
  std::set<NodeId> helper_nodes;
  std::set<int> helper_indices;
  for (const auto& h : inputs.helpers) {
    if (!helper_nodes.insert(h.node).second) raise(ErrorCode::invalid_argument, "helper listed twice");
    helper_indices.insert(h.index);
  }
  for (int t : inputs.targets) {
    if (helper_indices.count(t)) raise(ErrorCode::invalid_argument, "target is also a helper");
  }
  for (NodeId r : inputs.requestors) {
    if (helper_nodes.count(r)) raise(ErrorCode::invalid_argument, "requestor is also a helper");
  }

  RepairPlan plan(scheme, std::move(inputs));
  switch (scheme) {
    case Scheme::rp_basic:
      if (f != 1) raise(ErrorCode::invalid_argument, "rp-basic repairs a single block; use rp-multi");
      plan.build_basic();
      break;
    case Scheme::rp_cyclic:
      if (f != 1) raise(ErrorCode::invalid_argument, "rp-cyclic repairs a single block");
      if (k < 2) raise(ErrorCode::invalid_argument, "rp-cyclic needs k >= 2");
      plan.build_cyclic();
      break;
    case Scheme::rp_multi:
      plan.build_multi();
      break;
    case Scheme::conventional:
      plan.build_conventional();
      break;
    case Scheme::ppr:
      if (f != 1) raise(ErrorCode::invalid_argument, "ppr supports single-block repair only");
      plan.build_ppr();
      break;
  }
  plan.compute_dependencies();
  return plan;
}

void RepairPlan::add(NodeId src, NodeId dst, std::uint32_t slice, PayloadKind kind,
                     std::uint16_t target_begin, std::uint16_t target_count,
                     std::uint64_t order) {
  Transfer t;
  t.id = static_cast<std::uint32_t>(transfers_.size());
  t.src = src;
  t.dst = dst;
  t.slice = slice;
  t.kind = kind;
  t.target_begin = target_begin;
  t.target_count = target_count;
  t.order = order;
  transfers_.push_back(std::move(t));
}

// Slice t flows N_1 -> ... -> N_k -> R; hop i of slice t is planned at step t+i.
void RepairPlan::build_basic() {
  const auto& h = inputs_.helpers;
  const int k = this->k();
  const std::uint32_t s = spec().slices();
  transfers_.reserve(static_cast<std::size_t>(s) * k);
  for (std::uint32_t t = 0; t < s; ++t) {
    for (int i = 0; i < k; ++i) {
      const NodeId dst = i + 1 < k ? h[i + 1].node : inputs_.requestors[0];
      add(h[i].node, dst, t, PayloadKind::partial, 0, 1, t + i);
    }
  }
}

// Slices are grouped k-1 at a time; slice i of a group walks the rotation
// N_i -> N_{i+1} -> ... -> N_{i-1} and its last helper delivers to R while the
// next group's first phase is in flight.
void RepairPlan::build_cyclic() {
  const auto& h = inputs_.helpers;
  const int k = this->k();
  const std::uint32_t s = spec().slices();
  const std::uint32_t group = static_cast<std::uint32_t>(k - 1);
  transfers_.reserve(static_cast<std::size_t>(s) * k);
  for (std::uint32_t t = 0; t < s; ++t) {
    const std::uint64_t g = t / group;
    const int rot = static_cast<int>(t % group);
    for (int m = 0; m + 1 < k; ++m) {
      add(h[(rot + m) % k].node, h[(rot + m + 1) % k].node, t, PayloadKind::partial, 0, 1,
          g * group + m);
    }
    add(h[(rot + k - 1) % k].node, inputs_.requestors[0], t, PayloadKind::partial, 0, 1,
        (g + 1) * group + rot);
  }
}

// Per offset, a bundle of f partial slices walks the path; N_k fans the f
// finished slices out to their requestors.
void RepairPlan::build_multi() {
  const auto& h = inputs_.helpers;
  const int k = this->k();
  const int f = this->f();
  const std::uint32_t s = spec().slices();
  for (std::uint32_t t = 0; t < s; ++t) {
    for (int i = 0; i + 1 < k; ++i) {
      add(h[i].node, h[i + 1].node, t, PayloadKind::partial, 0, static_cast<std::uint16_t>(f), t + i);
    }
    for (int j = 0; j < f; ++j) {
      add(h[k - 1].node, inputs_.requestors[j], t, PayloadKind::partial,
          static_cast<std::uint16_t>(j), 1, t + k - 1);
    }
  }
}

// All helpers ship whole raw blocks to the first requestor, which decodes
// every target and forwards the others.
void RepairPlan::build_conventional() {
  const auto& h = inputs_.helpers;
  const int k = this->k();
  const NodeId dedicated = inputs_.requestors[0];
  for (int i = 0; i < k; ++i) {
    add(h[i].node, dedicated, kWholeBlock, PayloadKind::raw, 0, 0, static_cast<std::uint64_t>(i));
  }
  for (int j = 1; j < f(); ++j) {
    if (inputs_.requestors[j] == dedicated) continue;
    add(dedicated, inputs_.requestors[j], kWholeBlock, PayloadKind::partial,
        static_cast<std::uint16_t>(j), 1, static_cast<std::uint64_t>(k + j - 1));
  }
}

// Binary combining tree over [N_1..N_k, R]: each round pairs neighbours and
// the right member of each pair survives. R is always last, so it survives.
void RepairPlan::build_ppr() {
  std::vector<NodeId> live;
  for (const auto& h : inputs_.helpers) live.push_back(h.node);
  live.push_back(inputs_.requestors[0]);
  std::uint64_t round = 0;
  while (live.size() > 1) {
    std::vector<NodeId> next;
    std::size_t p = 0;
    for (; p + 1 < live.size(); p += 2) {
      add(live[p], live[p + 1], kWholeBlock, PayloadKind::partial, 0, 1, round);
      next.push_back(live[p + 1]);
    }
    if (p < live.size()) next.push_back(live[p]);
    live = std::move(next);
    ++round;
  }
}

// A transfer out of node X waits for every transfer into X that feeds the
// same (target, slice): overlapping slice, and raw or overlapping targets.
void RepairPlan::compute_dependencies() {
  struct Inbound {
    std::unordered_map<std::uint32_t, std::vector<std::uint32_t>> by_slice;
    std::vector<std::uint32_t> whole;
  };
  std::unordered_map<NodeId, Inbound> inbound;
  for (const auto& t : transfers_) {
    auto& in = inbound[t.dst];
    if (t.whole_block()) {
      in.whole.push_back(t.id);
    } else {
      in.by_slice[t.slice].push_back(t.id);
    }
  }
  auto feeds = [](const Transfer& in, const Transfer& out) {
    if (in.kind == PayloadKind::raw) return true;
    const int a0 = in.target_begin;
    const int a1 = a0 + in.target_count;
    const int b0 = out.target_begin;
    const int b1 = b0 + out.target_count;
    return a0 < b1 && b0 < a1;
  };
  for (auto& out : transfers_) {
    if (out.kind == PayloadKind::raw) continue;
    auto it = inbound.find(out.src);
    if (it == inbound.end()) continue;
    auto consider = [&](std::uint32_t id) {
      if (feeds(transfers_[id], out)) out.deps.push_back(id);
    };
    for (auto id : it->second.whole) consider(id);
    if (out.whole_block()) {
      for (const auto& [slice, ids] : it->second.by_slice) {
        for (auto id : ids) consider(id);
      }
    } else {
      auto sl = it->second.by_slice.find(out.slice);
      if (sl != it->second.by_slice.end()) {
        for (auto id : sl->second) consider(id);
      }
    }
    std::sort(out.deps.begin(), out.deps.end());
  }
}

int RepairPlan::helper_position(NodeId node) const {
  for (std::size_t i = 0; i < inputs_.helpers.size(); ++i) {
    if (inputs_.helpers[i].node == node) return static_cast<int>(i);
  }
  return -1;
}

std::vector<int> RepairPlan::targets_for(NodeId node) const {
  std::vector<int> out;
  for (std::size_t j = 0; j < inputs_.requestors.size(); ++j) {
    if (inputs_.requestors[j] == node) out.push_back(static_cast<int>(j));
  }
  return out;
}

std::vector<NodeId> RepairPlan::participants() const {
  std::vector<NodeId> out;
  for (const auto& h : inputs_.helpers) out.push_back(h.node);
  for (NodeId r : inputs_.requestors) {
    if (std::find(out.begin(), out.end(), r) == out.end()) out.push_back(r);
  }
  return out;
}

RepairPlan plan_basic(const codec::CodingScheme& scheme, const StripeMetadata& stripe,
                      int target, std::span<const NodeId> path, NodeId requestor,
                      SliceSpec spec) {
  const int targets[] = {target};
  const NodeId requestors[] = {requestor};
  return RepairPlan::build(Scheme::rp_basic,
                           make_plan_inputs(scheme, stripe, targets, path, requestors, spec));
}

RepairPlan plan_cyclic(const codec::CodingScheme& scheme, const StripeMetadata& stripe,
                       int target, std::span<const NodeId> helpers, NodeId requestor,
                       SliceSpec spec) {
  const int targets[] = {target};
  const NodeId requestors[] = {requestor};
  return RepairPlan::build(Scheme::rp_cyclic,
                           make_plan_inputs(scheme, stripe, targets, helpers, requestors, spec));
}

RepairPlan plan_multiblock(const codec::CodingScheme& scheme, const StripeMetadata& stripe,
                           std::span<const int> targets, std::span<const NodeId> path,
                           std::span<const NodeId> requestors, SliceSpec spec) {
  return RepairPlan::build(Scheme::rp_multi,
                           make_plan_inputs(scheme, stripe, targets, path, requestors, spec));
}

RepairPlan plan_conventional(const codec::CodingScheme& scheme, const StripeMetadata& stripe,
                             std::span<const int> targets, std::span<const NodeId> helpers,
                             std::span<const NodeId> requestors, SliceSpec spec) {
  return RepairPlan::build(Scheme::conventional,
                           make_plan_inputs(scheme, stripe, targets, helpers, requestors, spec));
}

RepairPlan plan_ppr(const codec::CodingScheme& scheme, const StripeMetadata& stripe,
                    int target, std::span<const NodeId> helpers, NodeId requestor,
                    SliceSpec spec) {
  const int targets[] = {target};
  const NodeId requestors[] = {requestor};
  return RepairPlan::build(Scheme::ppr,
                           make_plan_inputs(scheme, stripe, targets, helpers, requestors, spec));
}

}  // namespace ecpipe::pipeline
