#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>

#include <json.hpp>

#include "ecpipe/block_store.hpp"
#include "ecpipe/executor.hpp"
#include "ecpipe/net.hpp"
#include "ecpipe/plan.hpp"
#include "ecpipe/server.hpp"
#include "ecpipe/tcp_transport.hpp"

namespace ecpipe::helper {

/// Everything a node needs to run its part of a session.
struct Dispatch {
  pipeline::Scheme scheme = pipeline::Scheme::rp_basic;
  pipeline::PlanInputs inputs;
  std::map<NodeId, net::Endpoint> directory;
  std::size_t window = 64;
  std::chrono::milliseconds timeout{30000};
  std::optional<net::Endpoint> coordinator;  // where to report, if anywhere
};

nlohmann::json to_json(const Dispatch& d);
Dispatch dispatch_from_json(const nlohmann::json& j);

struct HelperOptions {
  /// Paces this node's outbound streams; shared between helpers of one process.
  std::shared_ptr<Shaper> shaper;
  /// How long an inbound stream may wait for its session's PLAN_DISPATCH.
  std::chrono::milliseconds dispatch_grace{10000};
};

/// Storage daemon of one node: serves STORE_BLOCK, READ_BLOCK, DELETE_BLOCK
/// and PING, and runs its hop of every dispatched plan on its own thread.
class HelperServer {
 public:
  HelperServer(NodeId id, const net::Endpoint& listen, std::filesystem::path root,
               HelperOptions options = {});
  ~HelperServer();

  void start();
  /// Aborts running sessions and stops serving.
  void stop();

  NodeId id() const { return id_; }
  net::Endpoint endpoint() const { return server_.endpoint(); }
  BlockStore& store() { return store_; }
  std::size_t active_sessions() const;
  /// Sessions this node finished, successfully or not.
  std::size_t finished_sessions() const;

 private:
  std::optional<proto::Message> handle(proto::Message& request, net::Socket& sock);
  void accept_stream(const proto::json& meta, net::Socket& sock);
  proto::Message start_session(const proto::json& meta);
  void run_session(Dispatch d, pipeline::RepairPlan plan, std::shared_ptr<TcpTransport> transport);
  void abort_session(const SessionId& session, const std::string& reason);

  NodeId id_;
  BlockStore store_;
  HelperOptions options_;
  std::shared_ptr<StreamRegistry> registry_ = std::make_shared<StreamRegistry>();

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<SessionId, std::shared_ptr<TcpTransport>> active_;
  std::set<SessionId> finished_;
  bool stopping_ = false;

  MessageServer server_;  // last: its threads use the members above
};

}  // namespace ecpipe::helper
