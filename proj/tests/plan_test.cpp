#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "ecpipe/error.hpp"
#include "ecpipe/plan.hpp"

namespace ecpipe::pipeline {
namespace {

using Coeffs = std::vector<gf::Element>;  // coefficient on each helper's block

// Replays a plan symbolically in dependency order: every node folds its own
// block and everything it has received for a (target, slice) into what it
// sends on. Returns what each requestor ends up holding per (target, slice).
std::map<std::pair<int, std::uint32_t>, Coeffs> replay(const RepairPlan& plan) {
  const int k = plan.k();
  const auto& in = plan.inputs();
  const std::uint32_t s = plan.spec().slices();
  const auto& transfers = plan.transfers();

  std::map<std::tuple<NodeId, int, std::uint32_t>, Coeffs> inbound;  // partial sums received
  std::map<std::pair<NodeId, std::uint32_t>, std::set<int>> raw_in;   // raw blocks received
  std::vector<bool> sent(transfers.size(), false);

  auto value = [&](NodeId node, int j, std::uint32_t slice) {
    Coeffs c(k, 0);
    const int pos = plan.helper_position(node);
    if (pos >= 0) c[pos] ^= in.coefficients.at(j, pos);
    auto it = inbound.find({node, j, slice});
    if (it != inbound.end()) {
      for (int i = 0; i < k; ++i) c[i] ^= it->second[i];
    }
    auto raw = raw_in.find({node, slice});
    if (raw != raw_in.end()) {
      for (int i : raw->second) c[i] ^= in.coefficients.at(j, i);
    }
    return c;
  };

  std::size_t done = 0;
  while (done < transfers.size()) {
    bool progress = false;
    for (const auto& t : transfers) {
      if (sent[t.id]) continue;
      bool ready = true;
      for (auto d : t.deps) ready = ready && sent[d];
      if (!ready) continue;
      std::vector<std::uint32_t> slices;
      if (t.whole_block()) {
        for (std::uint32_t x = 0; x < s; ++x) slices.push_back(x);
      } else {
        slices.push_back(t.slice);
      }
      for (auto x : slices) {
        if (t.kind == PayloadKind::raw) {
          raw_in[{t.dst, x}].insert(plan.helper_position(t.src));
          continue;
        }
        for (int j = t.target_begin; j < t.target_begin + t.target_count; ++j) {
          auto c = value(t.src, j, x);
          auto& slot = inbound[{t.dst, j, x}];
          if (slot.empty()) slot.assign(k, 0);
          for (int i = 0; i < k; ++i) slot[i] ^= c[i];
        }
      }
      sent[t.id] = true;
      ++done;
      progress = true;
    }
    if (!progress) ADD_FAILURE() << "plan deadlocks";
    if (!progress) break;
  }

  std::map<std::pair<int, std::uint32_t>, Coeffs> out;
  for (int j = 0; j < plan.f(); ++j) {
    for (std::uint32_t x = 0; x < s; ++x) out[{j, x}] = value(in.requestors[j], j, x);
  }
  return out;
}

PlanInputs random_inputs(std::mt19937& rng, int k, int f, std::uint32_t s) {
  auto in = synthetic_plan_inputs(k, f, s);
  std::uniform_int_distribution<int> byte(1, 255);
  for (int j = 0; j < f; ++j) {
    for (int i = 0; i < k; ++i) in.coefficients.at(j, i) = static_cast<gf::Element>(byte(rng));
  }
  return in;
}

void expect_delivers_every_target(const RepairPlan& plan) {
  const auto result = replay(plan);
  for (const auto& [key, coeffs] : result) {
    for (int i = 0; i < plan.k(); ++i) {
      ASSERT_EQ(coeffs[i], plan.inputs().coefficients.at(key.first, i))
          << to_string(plan.scheme()) << " target " << key.first << " slice " << key.second
          << " helper " << i;
    }
  }
}

TEST(PlanTest, EverySchemeDeliversTheDecodingCombination) {
  std::mt19937 rng(1);
  for (Scheme scheme : all_schemes()) {
    for (int k : {1, 2, 3, 4, 6, 10}) {
      for (std::uint32_t s : {1u, 2u, 5u, 9u}) {
        for (int f : {1, 2, 3}) {
          const bool single = scheme == Scheme::rp_basic || scheme == Scheme::rp_cyclic ||
                              scheme == Scheme::ppr;
          if (single && f > 1) continue;
          if (scheme == Scheme::rp_cyclic && k < 2) continue;
          auto plan = RepairPlan::build(scheme, random_inputs(rng, k, f, s));
          expect_delivers_every_target(plan);
        }
      }
    }
  }
}

TEST(PlanTest, BasicPathShape) {
  auto plan = RepairPlan::build(Scheme::rp_basic, synthetic_plan_inputs(4, 1, 6));
  ASSERT_EQ(plan.transfers().size(), 24u);
  std::map<NodeId, int> out_degree;
  for (const auto& t : plan.transfers()) {
    EXPECT_EQ(t.kind, PayloadKind::partial);
    ++out_degree[t.src];
    const int pos = plan.helper_position(t.src);
    ASSERT_GE(pos, 0);
    EXPECT_EQ(t.dst, pos == 3 ? NodeId{1001} : NodeId(pos + 2));
    EXPECT_EQ(t.order, t.slice + static_cast<std::uint64_t>(pos));
  }
  for (NodeId n = 1; n <= 4; ++n) EXPECT_EQ(out_degree[n], 6);
}

TEST(PlanTest, CyclicRequestorInDegree) {
  for (int k : {2, 3, 4, 6, 10}) {
    for (std::uint32_t s : {1u, 2u, 6u, 64u}) {
      auto plan = RepairPlan::build(Scheme::rp_cyclic, synthetic_plan_inputs(k, 1, s));
      std::set<NodeId> senders;
      for (const auto& t : plan.transfers()) {
        if (t.dst == 1001) senders.insert(t.src);
      }
      EXPECT_EQ(senders.size(), std::min<std::size_t>(k - 1, s)) << "k=" << k << " s=" << s;
    }
  }
}

TEST(PlanTest, MultiWithOneTargetMatchesBasic) {
  auto basic = RepairPlan::build(Scheme::rp_basic, synthetic_plan_inputs(5, 1, 7));
  auto multi = RepairPlan::build(Scheme::rp_multi, synthetic_plan_inputs(5, 1, 7));
  ASSERT_EQ(basic.transfers().size(), multi.transfers().size());
  std::set<std::tuple<NodeId, NodeId, std::uint32_t, std::uint64_t>> a;
  std::set<std::tuple<NodeId, NodeId, std::uint32_t, std::uint64_t>> b;
  for (const auto& t : basic.transfers()) a.insert({t.src, t.dst, t.slice, t.order});
  for (const auto& t : multi.transfers()) b.insert({t.src, t.dst, t.slice, t.order});
  EXPECT_EQ(a, b);
}

TEST(PlanTest, MultiBundlesAllTargetsOnEachHop) {
  auto plan = RepairPlan::build(Scheme::rp_multi, synthetic_plan_inputs(4, 3, 2));
  for (const auto& t : plan.transfers()) {
    if (t.dst < 1000) {
      EXPECT_EQ(t.target_count, 3);
      EXPECT_EQ(t.size(2), Rational(3, 2));
    } else {
      EXPECT_EQ(t.src, NodeId{4});
      EXPECT_EQ(t.target_count, 1);
      EXPECT_EQ(t.dst, NodeId(1001 + t.target_begin));
    }
  }
}

TEST(PlanTest, ConventionalSendsRawBlocksToOneRequestor) {
  auto plan = RepairPlan::build(Scheme::conventional, synthetic_plan_inputs(4, 2, 8));
  int raw = 0;
  for (const auto& t : plan.transfers()) {
    EXPECT_TRUE(t.whole_block());
    if (t.kind == PayloadKind::raw) {
      ++raw;
      EXPECT_EQ(t.dst, NodeId{1001});
      EXPECT_TRUE(t.deps.empty());
    } else {
      EXPECT_EQ(t.src, NodeId{1001});
      EXPECT_EQ(t.dst, NodeId{1002});
      EXPECT_EQ(t.deps.size(), 4u);
    }
  }
  EXPECT_EQ(raw, 4);
}

TEST(PlanTest, PprTreeHasLogarithmicRounds) {
  for (int k = 1; k <= 16; ++k) {
    auto plan = RepairPlan::build(Scheme::ppr, synthetic_plan_inputs(k, 1, 4));
    EXPECT_EQ(plan.transfers().size(), static_cast<std::size_t>(k));
    std::uint64_t rounds = 0;
    for (const auto& t : plan.transfers()) rounds = std::max(rounds, t.order + 1);
    std::uint64_t expect = 0;
    while ((1 << expect) < k + 1) ++expect;
    EXPECT_EQ(rounds, expect) << "k=" << k;
  }
}

TEST(PlanTest, BuildValidation) {
  auto in = synthetic_plan_inputs(4, 2, 4);
  EXPECT_THROW(RepairPlan::build(Scheme::rp_basic, in), Error);
  EXPECT_THROW(RepairPlan::build(Scheme::rp_cyclic, in), Error);
  EXPECT_THROW(RepairPlan::build(Scheme::ppr, in), Error);
  EXPECT_THROW(RepairPlan::build(Scheme::rp_cyclic, synthetic_plan_inputs(1, 1, 4)), Error);

  auto dup = synthetic_plan_inputs(3, 1, 4);
  dup.helpers[1].node = dup.helpers[0].node;
  EXPECT_THROW(RepairPlan::build(Scheme::rp_basic, dup), Error);

  auto req = synthetic_plan_inputs(3, 1, 4);
  req.requestors[0] = req.helpers[2].node;
  EXPECT_THROW(RepairPlan::build(Scheme::rp_basic, req), Error);

  auto shape = synthetic_plan_inputs(3, 1, 4);
  shape.coefficients = codec::Matrix(1, 2);
  EXPECT_THROW(RepairPlan::build(Scheme::rp_basic, shape), Error);

  EXPECT_THROW(synthetic_plan_inputs(0, 1, 1), Error);
  EXPECT_EQ(parse_scheme("rp-cyclic"), Scheme::rp_cyclic);
  EXPECT_THROW(parse_scheme("fast"), Error);
}

StripeMetadata stripe_14_10() {
  StripeMetadata m;
  m.id = 7;
  m.n = 14;
  m.k = 10;
  m.scheme = "rs-14-10";
  m.block_size = 64;
  for (int i = 0; i < 14; ++i) {
    m.blocks.push_back(100 + i);
    m.nodes.push_back(static_cast<NodeId>(i + 1));
  }
  return m;
}

TEST(PlanTest, InputsFromStripe) {
  codec::CodingScheme scheme(14, 10);
  auto stripe = stripe_14_10();
  const std::vector<NodeId> path = {2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
  auto plan = plan_basic(scheme, stripe, 0, path, 99, SliceSpec::make(64, 16));
  EXPECT_EQ(plan.k(), 10);
  EXPECT_EQ(plan.inputs().target_blocks, std::vector<BlockId>{100});
  EXPECT_EQ(plan.inputs().helpers[0], (HelperRef{2, 1, 101}));
  expect_delivers_every_target(plan);
}

TEST(PlanTest, InputErrors) {
  codec::CodingScheme scheme(14, 10);
  auto stripe = stripe_14_10();
  const SliceSpec spec = SliceSpec::make(64, 16);
  const std::vector<NodeId> short_path = {2, 3, 4, 5, 6, 7, 8, 9, 10};
  const std::vector<NodeId> path = {2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
  const std::vector<NodeId> bad_path = {2, 3, 4, 5, 6, 7, 8, 9, 10, 77};
  const std::vector<NodeId> through_target = {1, 3, 4, 5, 6, 7, 8, 9, 10, 11};
  try {
    plan_basic(scheme, stripe, 0, short_path, 99, spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::insufficient_helpers);
  }
  const std::vector<int> five = {0, 1, 2, 3, 4};
  const std::vector<NodeId> five_req = {90, 91, 92, 93, 94};
  try {
    plan_multiblock(scheme, stripe, five, path, five_req, spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::unrecoverable);
  }
  EXPECT_THROW(plan_basic(scheme, stripe, 0, bad_path, 99, spec), Error);
  EXPECT_THROW(plan_basic(scheme, stripe, 0, through_target, 99, spec), Error);
}

}  // namespace
}  // namespace ecpipe::pipeline
