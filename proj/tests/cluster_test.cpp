#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "ecpipe/checksum.hpp"
#include "ecpipe/error.hpp"
#include "ecpipe/local_cluster.hpp"

namespace ecpipe {
namespace {

using namespace std::chrono_literals;
using pipeline::Scheme;

struct TempDir {
  std::filesystem::path path =
      std::filesystem::temp_directory_path() / ("ecpipe-cluster-" + SessionId::random().hex());
  TempDir() { std::filesystem::create_directories(path); }
  ~TempDir() { std::filesystem::remove_all(path); }
};

ClusterConfig base_config(const std::string& code = "rs-6-4") {
  ClusterConfig c;
  c.code = code;
  c.block_size = 256 * 1024;
  c.slice_size = 16 * 1024;
  c.session_timeout = 20s;
  return c;
}

std::size_t files_in(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir)) return 0;
  std::size_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) n += e.is_regular_file();
  return n;
}

TEST(Cluster, WritePlacesEveryBlockOnDisk) {
  TempDir tmp;
  LocalCluster cluster(base_config(), tmp.path, 8);
  auto client = cluster.client();

  auto empty = client.write({});
  EXPECT_EQ(empty.stripes, 0u);
  EXPECT_TRUE(empty.blocks.empty());

  auto report = client.write({.stripes = 4, .seed = 3});
  EXPECT_EQ(report.stripes, 4u);
  EXPECT_EQ(report.blocks.size(), 24u);
  EXPECT_TRUE(report.verified);
  std::size_t files = 0;
  for (const auto& n : cluster.config().nodes) {
    files += files_in(n.root);
    for (const auto& e : std::filesystem::directory_iterator(n.root)) {
      EXPECT_EQ(std::filesystem::file_size(e.path()), 256u * 1024);
    }
  }
  EXPECT_EQ(files, 24u);
  for (const auto& b : report.blocks) {
    auto loc = client.locate(b.block);
    EXPECT_EQ(loc.at("node").get<NodeId>(), b.node);
    EXPECT_EQ(loc.at("index").get<int>(), b.index);
  }
  // No two blocks of a stripe share a node.
  for (StripeId s = 1; s <= 4; ++s) {
    std::set<NodeId> nodes;
    for (const auto& b : report.blocks) {
      if (b.stripe == s) EXPECT_TRUE(nodes.insert(b.node).second);
    }
  }
}

TEST(Cluster, FileRoundTripsThroughTheStripes) {
  TempDir tmp;
  LocalCluster cluster(base_config(), tmp.path, 8);
  auto client = cluster.client();
  const auto file = tmp.path / "input.bin";
  Bytes source(2'500'000);
  std::mt19937 rng(9);
  for (auto& x : source) x = static_cast<std::uint8_t>(rng());
  std::ofstream(file, std::ios::binary).write(reinterpret_cast<const char*>(source.data()), source.size());

  auto report = client.write({.input = file});
  EXPECT_EQ(report.stripes, 3u);  // 1 MiB of data per rs-6-4 stripe
  EXPECT_EQ(report.bytes, source.size());

  // Reassemble from the data blocks and compare hashes.
  Bytes back;
  for (StripeId s = 1; s <= 3; ++s) {
    auto meta = client.stripe(s);
    Bytes stripe_data;
    for (int i = 0; i < meta.k; ++i) {
      Bytes b = client.read_block(meta.nodes[i], meta.blocks[i]);
      stripe_data.insert(stripe_data.end(), b.begin(), b.end());
    }
    stripe_data.resize(meta.data_length);
    back.insert(back.end(), stripe_data.begin(), stripe_data.end());
  }
  EXPECT_EQ(content_hash(back), content_hash(source));
}

TEST(Cluster, FailThenRepairEveryScheme) {
  TempDir tmp;
  LocalCluster cluster(base_config(), tmp.path, 10);
  auto client = cluster.client();
  auto report = client.write({.stripes = 1, .seed = 5});
  const auto stripe = client.stripe(1);

  const NodeId victim = stripe.nodes[1];
  auto erased = client.fail_node(victim);
  ASSERT_EQ(erased.size(), 1u);
  EXPECT_TRUE(erased[0].deleted);
  EXPECT_TRUE(client.locate(stripe.blocks[1]).at("missing").get<bool>());

  std::vector<NodeId> spare;
  for (const auto& n : cluster.config().nodes) {
    if (std::find(stripe.nodes.begin(), stripe.nodes.end(), n.id) == stripe.nodes.end()) spare.push_back(n.id);
  }
  ASSERT_GE(spare.size(), 4u);
  const BlockId block = stripe.blocks[1];
  NodeId holder = victim;
  int round = 0;
  for (Scheme scheme : {Scheme::rp_basic, Scheme::rp_cyclic, Scheme::ppr, Scheme::conventional, Scheme::rp_multi}) {
    const NodeId requestor = spare[round++ % spare.size()];
    client::RepairOptions opts;
    opts.blocks = {block};
    opts.requestors = {requestor};
    opts.scheme = scheme;
    auto rec = client.repair(opts);
    ASSERT_EQ(rec.state, "done") << pipeline::to_string(scheme) << ": " << rec.failure;
    EXPECT_TRUE(rec.verified) << pipeline::to_string(scheme);
    EXPECT_EQ(rec.hashes.at(block), stripe.hashes[1]);
    EXPECT_EQ(rec.helpers.size(), 4u);
    for (NodeId h : rec.helpers) EXPECT_NE(h, victim);
    EXPECT_EQ(client.locate(block).at("node").get<NodeId>(), requestor);
    // Lose it again on the new holder for the next scheme.
    holder = requestor;
    auto again = client.fail_blocks({block});
    EXPECT_TRUE(again.at(0).deleted);
  }
  (void)holder;
}

TEST(Cluster, MultiBlockRepairAndTheMdsBound) {
  TempDir tmp;
  LocalCluster cluster(base_config(), tmp.path, 10);
  auto client = cluster.client();
  client.write({.stripes = 1, .seed = 6});
  const auto stripe = client.stripe(1);
  client.fail_blocks({stripe.blocks[0], stripe.blocks[4]});

  std::vector<NodeId> spare;
  for (const auto& n : cluster.config().nodes) {
    if (std::find(stripe.nodes.begin(), stripe.nodes.end(), n.id) == stripe.nodes.end()) spare.push_back(n.id);
  }
  client::RepairOptions opts;
  opts.blocks = {stripe.blocks[0], stripe.blocks[4]};
  opts.requestors = {spare[0], spare[1]};
  auto rec = client.repair(opts);
  ASSERT_EQ(rec.state, "done") << rec.failure;
  EXPECT_EQ(rec.scheme, "rp-multi");
  EXPECT_TRUE(rec.verified);

  // Three lost blocks exceed n-k = 2.
  client.fail_blocks({stripe.blocks[1], stripe.blocks[2], stripe.blocks[3]});
  client::RepairOptions too_many;
  too_many.blocks = {stripe.blocks[1], stripe.blocks[2], stripe.blocks[3]};
  too_many.requestors = {spare[2], spare[3], stripe.nodes[1]};
  try {
    client.repair(too_many);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::unrecoverable);
  }
}

TEST(Cluster, FailUnknownNodeIsAnError) {
  TempDir tmp;
  LocalCluster cluster(base_config(), tmp.path, 6);
  auto client = cluster.client();
  try {
    client.fail_node(99);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::not_found);
  }
}

TEST(Cluster, RecoverNodeWithAndWithoutScheduling) {
  TempDir tmp;
  auto config = base_config("rs-6-4");
  config.block_size = 64 * 1024;
  config.slice_size = 8 * 1024;
  LocalCluster cluster(config, tmp.path, 12);
  auto client = cluster.client();
  client.write({.stripes = 12, .seed = 7});

  auto none = client.recover_node({.node = 3});
  EXPECT_EQ(none.blocks, 0u);  // nothing lost yet
  EXPECT_EQ(none.repaired, 0u);

  auto lost = client.fail_node(3);
  ASSERT_FALSE(lost.empty());
  auto rec = client.recover_node({.node = 3, .requestors = {11, 12}, .scheduling = true, .fanout = 4});
  EXPECT_EQ(rec.blocks, lost.size());
  EXPECT_EQ(rec.repaired, lost.size());
  EXPECT_EQ(rec.verified, lost.size());
  EXPECT_GT(rec.rate_mb_s, 0);
  for (const auto& r : rec.repairs) {
    for (NodeId h : r.helpers) EXPECT_NE(h, 3u);
  }

  auto lost2 = client.fail_node(4);
  auto rec2 = client.recover_node({.node = 4, .requestors = {1, 2, 3}, .scheduling = false, .fanout = 4});
  EXPECT_EQ(rec2.repaired, lost2.size());
  EXPECT_EQ(rec2.verified, lost2.size());
}

TEST(Cluster, DeadHelperFailsDispatchAndIsReported) {
  TempDir tmp;
  LocalCluster cluster(base_config(), tmp.path, 8);
  auto client = cluster.client();
  client.write({.stripes = 1, .seed = 8});
  const auto stripe = client.stripe(1);
  client.fail_blocks({stripe.blocks[0]});
  // The coordinator still believes this node is alive.
  cluster.kill(stripe.nodes[1]);
  client::RepairOptions opts;
  opts.blocks = {stripe.blocks[0]};
  opts.greedy = false;
  try {
    client.repair(opts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::timeout);
    EXPECT_NE(std::string(e.what()).find("node " + std::to_string(stripe.nodes[1])), std::string::npos);
  }
  // Marking it dead routes around it.
  cluster.coordinator().metadata().mark_dead(stripe.nodes[1]);
  auto rec = client.repair(opts);
  EXPECT_EQ(rec.state, "done") << rec.failure;
  EXPECT_TRUE(rec.verified);
}

TEST(Cluster, MissingLocalBlockIsReportedAtThatHop) {
  TempDir tmp;
  LocalCluster cluster(base_config(), tmp.path, 8);
  auto client = cluster.client();
  client.write({.stripes = 1, .seed = 9});
  const auto stripe = client.stripe(1);
  client.fail_blocks({stripe.blocks[0]});
  // Delete a helper's file behind the coordinator's back.
  cluster.helper(stripe.nodes[2]).store().remove(stripe.blocks[2]);
  client::RepairOptions opts;
  opts.blocks = {stripe.blocks[0]};
  opts.greedy = false;
  auto rec = client.repair(opts);
  EXPECT_EQ(rec.state, "failed");
  EXPECT_FALSE(rec.verified);
  EXPECT_NE(rec.failure.find("node " + std::to_string(stripe.nodes[2])), std::string::npos) << rec.failure;
  auto s = cluster.coordinator().sessions().back();
  ASSERT_TRUE(s.failure);
  // The root cause may arrive after an abort report; give it a moment.
  for (int i = 0; i < 50 && s.failure->code == ErrorCode::session_aborted; ++i) {
    std::this_thread::sleep_for(20ms);
    s = cluster.coordinator().sessions().back();
  }
  EXPECT_EQ(s.failure->node, stripe.nodes[2]);
  EXPECT_EQ(s.failure->code, ErrorCode::not_found);
}

TEST(Cluster, ShapedClusterPipelinesRepair) {
  TempDir tmp;
  auto config = base_config("rs-6-4");
  config.block_size = 1 << 20;
  config.slice_size = 32 * 1024;
  config.shape = true;
  config.default_mbps = 80;  // 10 MB/s ports
  LocalCluster cluster(config, tmp.path, 8);
  auto client = cluster.client();
  client.write({.stripes = 1, .seed = 10, .verify = false});
  const auto stripe = client.stripe(1);
  client.fail_blocks({stripe.blocks[0]});
  client::RepairOptions opts;
  opts.blocks = {stripe.blocks[0]};
  opts.scheme = Scheme::rp_basic;
  auto basic = client.repair(opts);
  ASSERT_EQ(basic.state, "done") << basic.failure;
  client.fail_blocks({stripe.blocks[0]});
  opts.scheme = Scheme::conventional;
  opts.requestors = {stripe.nodes[0]};
  auto conv = client.repair(opts);
  ASSERT_EQ(conv.state, "done") << conv.failure;
  // One block over one 10 MB/s link takes ~0.105 s; conventional pulls 4.
  EXPECT_LT(basic.session_seconds, 0.6 * conv.session_seconds)
      << basic.session_seconds << " vs " << conv.session_seconds;
}

TEST(Cluster, CoordinatorRestartKeepsMetadata) {
  TempDir tmp;
  auto config = base_config();
  config.journal = tmp.path / "journal.jsonl";
  std::vector<client::PlacedBlock> placed;
  {
    LocalCluster cluster(config, tmp.path, 8);
    placed = cluster.client().write({.stripes = 2, .seed = 11}).blocks;
    cluster.client().fail_blocks({placed[0].block});
  }
  LocalCluster again(config, tmp.path, 8);
  auto client = again.client();
  for (const auto& b : placed) EXPECT_EQ(client.locate(b.block).at("node").get<NodeId>(), b.node);
  EXPECT_TRUE(client.locate(placed[0].block).at("missing").get<bool>());
  auto rec = client.repair({.blocks = {placed[0].block}});
  EXPECT_EQ(rec.state, "done") << rec.failure;
  EXPECT_TRUE(rec.verified);
}

TEST(Cluster, ProbeImportFeedsWeightedSelection) {
  TempDir tmp;
  LocalCluster cluster(base_config(), tmp.path, 8);
  auto client = cluster.client();
  client.write({.stripes = 1, .seed = 12});
  const auto stripe = client.stripe(1);
  client.fail_blocks({stripe.blocks[0]});
  const NodeId slow = stripe.nodes[1];
  std::string csv = "src,dst,mbps\n";
  for (const auto& n : cluster.config().nodes) {
    if (n.id != slow) csv += std::to_string(slow) + "," + std::to_string(n.id) + ",5\n";
  }
  EXPECT_EQ(client.probe_import(parse_probe_csv(csv)), 7u);
  client::RepairOptions opts;
  opts.blocks = {stripe.blocks[0]};
  opts.path = pathsel::PathMode::weighted;
  opts.greedy = false;
  auto rec = client.repair(opts);
  ASSERT_EQ(rec.state, "done") << rec.failure;
  for (NodeId h : rec.helpers) EXPECT_NE(h, slow);
}

}  // namespace
}  // namespace ecpipe
