#include "ecpipe/client.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <fstream>
#include <future>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include "ecpipe/checksum.hpp"
#include "ecpipe/codec.hpp"
#include "ecpipe/error.hpp"

namespace ecpipe::client {

using namespace std::chrono_literals;
using nlohmann::json;
using proto::MsgType;
using Stopwatch = std::chrono::steady_clock;

namespace {

double since(Stopwatch::time_point t0) {
  return std::chrono::duration<double>(Stopwatch::now() - t0).count();
}

void fill_random(Bytes& out, std::uint64_t seed, StripeId stripe) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stripe), static_cast<std::uint32_t>(stripe >> 32)};
  std::mt19937_64 rng(seq);
  std::size_t i = 0;
  for (; i + 8 <= out.size(); i += 8) {
    const std::uint64_t v = rng();
    std::memcpy(out.data() + i, &v, 8);
  }
  if (i < out.size()) {
    const std::uint64_t v = rng();
    std::memcpy(out.data() + i, &v, out.size() - i);
  }
}

// Runs fn(i) for i in [0, count) on up to `width` threads; rethrows the
// first failure after all finish.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t width, Fn fn) {
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr first;
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < std::max<std::size_t>(1, std::min(width, count)); ++t) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!first) first = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first) std::rethrow_exception(first);
}

}  // namespace

json to_json(const WriteReport& r) {
  json blocks = json::array();
  for (const auto& b : r.blocks) {
    blocks.push_back({{"stripe", b.stripe}, {"index", b.index}, {"block", b.block}, {"node", b.node}, {"hash", b.hash}});
  }
  return json{{"stripes", r.stripes}, {"bytes", r.bytes}, {"verified", r.verified},
              {"seconds", r.seconds}, {"blocks", blocks}};
}

json to_json(const RepairRecord& r) {
  json hashes = json::object();
  for (const auto& [b, h] : r.hashes) hashes[std::to_string(b)] = h;
  return json{{"session", r.session},   {"scheme", r.scheme},
              {"blocks", r.blocks},     {"requestors", r.requestors},
              {"helpers", r.helpers},   {"state", r.state},
              {"seconds", r.seconds},   {"session_seconds", r.session_seconds},
              {"hashes", hashes},       {"verified", r.verified},
              {"failure", r.failure}};
}

json to_json(const RecoveryRecord& r) {
  json load = json::object();
  for (const auto& [node, n] : r.helper_load) load[std::to_string(node)] = n;
  json repairs = json::array();
  for (const auto& rep : r.repairs) repairs.push_back(to_json(rep));
  return json{{"node", r.node},         {"blocks", r.blocks},   {"repaired", r.repaired},
              {"verified", r.verified}, {"bytes", r.bytes},     {"seconds", r.seconds},
              {"rate_mb_s", r.rate_mb_s}, {"helper_load", load}, {"repairs", repairs}};
}

std::vector<NodeId> placement_order(const ClusterConfig& config) {
  std::map<int, std::vector<NodeId>> racks;
  for (const auto& n : config.nodes) racks[n.rack].push_back(n.id);
  for (auto& [rack, ids] : racks) std::sort(ids.begin(), ids.end());
  std::vector<NodeId> out;
  for (std::size_t round = 0; out.size() < config.nodes.size(); ++round) {
    for (auto& [rack, ids] : racks) {
      if (round < ids.size()) out.push_back(ids[round]);
    }
  }
  return out;
}

Client::Client(net::Endpoint coordinator, ClusterConfig config)
    : coordinator_(std::move(coordinator)), config_(std::move(config)) {}

json Client::call(MsgType type, json meta, std::chrono::milliseconds timeout) {
  return proto::call(coordinator_, proto::Message{type, std::move(meta), {}}, timeout).meta;
}

const net::Endpoint& Client::address(NodeId node) const {
  for (const auto& n : config_.nodes) {
    if (n.id == node) return n.address;
  }
  raise(ErrorCode::not_found, "node " + std::to_string(node) + " is not configured");
}

json Client::ping() { return call(MsgType::ping, json::object(), 5s); }

json Client::locate(BlockId block) { return call(MsgType::locate, {{"block", block}}, 10s); }

std::vector<json> Client::stripes(std::optional<NodeId> node) {
  json meta = json::object();
  if (node) meta["node"] = *node;
  json reply = call(MsgType::list_stripes, meta, 60s);
  return reply.at("stripes").get<std::vector<json>>();
}

StripeMetadata Client::stripe(StripeId id) {
  json reply = call(MsgType::list_stripes, {{"stripe", id}}, 10s);
  return proto::stripe_from_json(reply.at("stripes").at(0));
}

Bytes Client::read_block(NodeId node, BlockId block) {
  return proto::call(address(node), proto::Message{MsgType::read_block, {{"block", block}}, {}}, 120s).body;
}

WriteReport Client::write(const WriteOptions& options) {
  const auto t0 = Stopwatch::now();
  const codec::CodingScheme code = codec::CodingScheme::from_name(config_.code);
  const int n = code.n();
  const int k = code.k();
  const std::size_t bs = config_.block_size;
  const std::vector<NodeId> order = placement_order(config_);
  if (static_cast<int>(order.size()) < n) {
    raise(ErrorCode::invalid_argument, config_.code + " needs " + std::to_string(n) + " nodes, " +
                                           std::to_string(order.size()) + " configured");
  }

  std::ifstream input;
  std::uint64_t remaining = 0;
  std::size_t stripe_count = options.stripes;
  if (options.input) {
    input.open(*options.input, std::ios::binary);
    if (!input) raise(ErrorCode::not_found, "cannot open " + options.input->string());
    remaining = std::filesystem::file_size(*options.input);
    const std::uint64_t per_stripe = static_cast<std::uint64_t>(k) * bs;
    stripe_count = static_cast<std::size_t>((remaining + per_stripe - 1) / per_stripe);
  }

  WriteReport report;
  report.verified = options.verify;
  if (stripe_count == 0) {
    report.seconds = since(t0);
    return report;
  }
  StripeId next = call(MsgType::list_stripes, {{"summary", true}}, 10s).at("next_stripe").get<StripeId>();

  for (std::size_t s = 0; s < stripe_count; ++s) {
    const StripeId sid = next + s;
    std::vector<Bytes> data(k, Bytes(bs, 0));
    std::uint64_t length = static_cast<std::uint64_t>(k) * bs;
    if (options.input) {
      length = std::min<std::uint64_t>(remaining, length);
      for (int i = 0; i < k; ++i) {
        input.read(reinterpret_cast<char*>(data[i].data()), static_cast<std::streamsize>(bs));
      }
      remaining -= length;
    } else {
      for (int i = 0; i < k; ++i) fill_random(data[i], options.seed, sid * 256 + i);
    }
    const std::vector<Bytes> blocks = codec::encode_stripe(code, data);
    data.clear();

    StripeMetadata meta;
    meta.id = sid;
    meta.scheme = config_.code;
    meta.n = n;
    meta.k = k;
    meta.block_size = bs;
    meta.data_length = length;
    const std::size_t start = (static_cast<std::size_t>(sid - 1) * n) % order.size();
    for (int i = 0; i < n; ++i) {
      meta.blocks.push_back(block_id(sid, i));
      meta.nodes.push_back(order[(start + i) % order.size()]);
      meta.hashes.push_back(content_hash(blocks[i]));
    }
    parallel_for(n, n, [&](std::size_t i) {
      proto::call(address(meta.nodes[i]),
                  proto::Message{MsgType::store_block, {{"block", meta.blocks[i]}}, blocks[i]}, 120s);
    });
    call(MsgType::register_stripe, {{"stripe", proto::to_json(meta)}}, 30s);
    for (int i = 0; i < n; ++i) {
      report.blocks.push_back(PlacedBlock{sid, i, meta.blocks[i], meta.nodes[i], meta.hashes[i]});
    }
    report.bytes += length;
    ++report.stripes;
  }

  if (options.verify) {
    std::atomic<bool> ok{true};
    parallel_for(report.blocks.size(), 8, [&](std::size_t i) {
      const auto& b = report.blocks[i];
      if (content_hash(read_block(b.node, b.block)) != b.hash) ok = false;
    });
    report.verified = ok;
  }
  report.seconds = since(t0);
  return report;
}

std::vector<ErasedBlock> Client::erase(const json& located) {
  std::vector<ErasedBlock> out;
  for (const auto& l : located) {
    out.push_back(ErasedBlock{l.at("block").get<BlockId>(), l.at("stripe").get<StripeId>(),
                              l.at("node").get<NodeId>(), false, ""});
  }
  parallel_for(out.size(), 8, [&](std::size_t i) {
    try {
      proto::call(address(out[i].node), proto::Message{MsgType::delete_block, {{"block", out[i].block}}, {}}, 10s);
      out[i].deleted = true;
    } catch (const Error& e) {
      out[i].error = e.what();
    }
  });
  return out;
}

std::vector<ErasedBlock> Client::fail_node(NodeId node) {
  return erase(call(MsgType::fail, {{"node", node}}, 30s).at("blocks"));
}

std::vector<ErasedBlock> Client::fail_blocks(const std::vector<BlockId>& blocks) {
  return erase(call(MsgType::fail, {{"blocks", blocks}}, 30s).at("blocks"));
}

RepairRecord Client::repair(const RepairOptions& options) {
  if (options.blocks.empty()) raise(ErrorCode::invalid_argument, "nothing to repair");
  RepairRecord rec;
  rec.blocks = options.blocks;

  const json first = locate(options.blocks[0]);
  const StripeMetadata s = stripe(first.at("stripe").get<StripeId>());
  std::vector<int> targets;
  for (BlockId b : options.blocks) {
    const int index = s.index_of(b);
    if (index < 0) raise(ErrorCode::invalid_argument, "blocks belong to different stripes");
    targets.push_back(index);
  }

  rec.requestors = options.requestors;
  if (rec.requestors.empty()) {
    // Nodes outside the stripe first, then the nodes that held the blocks.
    std::set<NodeId> in_stripe(s.nodes.begin(), s.nodes.end());
    for (const auto& n : config_.nodes) {
      if (rec.requestors.size() == targets.size()) break;
      if (!in_stripe.count(n.id)) rec.requestors.push_back(n.id);
    }
    for (std::size_t j = rec.requestors.size(); j < targets.size(); ++j) {
      rec.requestors.push_back(s.nodes[targets[j]]);
    }
  }

  json meta{{"blocks", options.blocks}, {"requestors", rec.requestors}};
  if (options.scheme) meta["scheme"] = pipeline::to_string(*options.scheme);
  if (options.path) meta["path"] = pathsel::to_string(*options.path);
  if (options.greedy) meta["greedy"] = *options.greedy;
  if (options.aggregate_requestors) meta["aggregate_requestors"] = true;

  const auto t0 = Stopwatch::now();
  json session = call(MsgType::repair_request, meta, 30s);
  rec.session = session.at("session").get<std::string>();
  rec.scheme = session.at("scheme").get<std::string>();
  for (const auto& h : session.at("plan").at("helpers")) rec.helpers.push_back(h.at("node").get<NodeId>());
  session = call(MsgType::wait_session, {{"session", rec.session}, {"timeout_ms", options.timeout.count()}},
                 options.timeout + 10s);
  rec.seconds = since(t0);
  rec.state = session.at("state").get<std::string>();
  rec.session_seconds = session.at("seconds").get<double>();
  for (const auto& [b, h] : session.at("hashes").items()) rec.hashes[std::stoull(b)] = h.get<std::string>();
  if (session.contains("failure")) {
    rec.failure = proto::hop_failure_from_json(session.at("failure")).describe();
  }
  if (rec.state != "done") {
    if (rec.failure.empty()) rec.failure = "session still " + rec.state + " after the wait";
    return rec;
  }

  // Compare against the hashes recorded when the stripe was written.
  bool ok = !s.hashes.empty();
  for (std::size_t j = 0; ok && j < targets.size(); ++j) {
    const std::string& expected = s.hashes[targets[j]];
    auto reported = rec.hashes.find(options.blocks[j]);
    ok = reported != rec.hashes.end() && reported->second == expected;
    if (ok && options.verify) ok = content_hash(read_block(rec.requestors[j], options.blocks[j])) == expected;
  }
  rec.verified = ok;
  return rec;
}

RecoveryRecord Client::recover_node(const RecoverOptions& options) {
  RecoveryRecord rec;
  rec.node = options.node;

  struct Lost {
    BlockId block;
    std::set<NodeId> stripe_nodes;
  };
  std::vector<Lost> lost;
  for (const json& j : stripes(options.node)) {
    const StripeMetadata s = proto::stripe_from_json(j);
    const auto missing = j.at("missing").get<std::vector<int>>();
    for (int i : missing) {
      if (s.nodes[i] == options.node) lost.push_back({s.blocks[i], {s.nodes.begin(), s.nodes.end()}});
    }
  }
  rec.blocks = lost.size();
  if (lost.empty()) return rec;

  std::vector<NodeId> requestors = options.requestors;
  if (requestors.empty()) {
    for (const auto& n : config_.nodes) {
      if (n.id != options.node) requestors.push_back(n.id);
    }
  }
  if (requestors.empty()) raise(ErrorCode::invalid_argument, "no requestors to rebuild on");

  // Round-robin over the requestors, skipping any that already hold a block
  // of the stripe.
  std::vector<NodeId> assigned(lost.size());
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < lost.size(); ++i) {
    bool found = false;
    for (std::size_t tries = 0; tries < requestors.size(); ++tries) {
      const NodeId r = requestors[(cursor + tries) % requestors.size()];
      if (!lost[i].stripe_nodes.count(r)) {
        assigned[i] = r;
        cursor = (cursor + tries + 1) % requestors.size();
        found = true;
        break;
      }
    }
    if (!found) {
      raise(ErrorCode::invalid_argument, "every requestor already holds a block of the stripe of block " +
                                             std::to_string(lost[i].block));
    }
  }

  rec.repairs.resize(lost.size());
  const auto t0 = Stopwatch::now();
  parallel_for(lost.size(), options.fanout, [&](std::size_t i) {
    RepairOptions r;
    r.blocks = {lost[i].block};
    r.requestors = {assigned[i]};
    r.scheme = options.scheme;
    r.path = options.path;
    r.greedy = options.scheduling;
    r.verify = options.verify;
    try {
      rec.repairs[i] = repair(r);
    } catch (const Error& e) {
      rec.repairs[i].blocks = r.blocks;
      rec.repairs[i].requestors = r.requestors;
      rec.repairs[i].state = "failed";
      rec.repairs[i].failure = e.what();
    }
  });
  rec.seconds = since(t0);

  for (const auto& r : rec.repairs) {
    if (r.state == "done") {
      ++rec.repaired;
      rec.bytes += config_.block_size;
    }
    if (r.verified) ++rec.verified;
    for (NodeId h : r.helpers) ++rec.helper_load[h];
  }
  rec.rate_mb_s = rec.seconds > 0 ? rec.bytes / rec.seconds / 1e6 : 0;
  return rec;
}

std::size_t Client::probe_import(const std::vector<LinkOverride>& links) {
  json arr = json::array();
  for (const auto& l : links) arr.push_back({{"src", l.src}, {"dst", l.dst}, {"mbps", l.mbps}});
  return call(MsgType::probe_report, {{"links", arr}}, 10s).at("links").get<std::size_t>();
}

}  // namespace ecpipe::client
