#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <optional>

#include "ecpipe/coordinator.hpp"
#include "ecpipe/net.hpp"
#include "ecpipe/server.hpp"

namespace ecpipe::coord {

/// Sends PLAN_DISPATCH to every participant in parallel over TCP.
class TcpDispatcher : public Dispatcher {
 public:
  TcpDispatcher(std::map<NodeId, net::Endpoint> directory, std::size_t window,
                std::chrono::milliseconds hop_timeout,
                std::chrono::milliseconds dispatch_timeout = std::chrono::milliseconds(5000));

  /// Where helpers send SESSION_STATUS; set once the server is listening.
  void set_report_address(net::Endpoint coordinator) { coordinator_ = std::move(coordinator); }

  void dispatch(const RepairSession& session, const std::vector<NodeId>& participants) override;
  void cancel(const RepairSession& session, const std::vector<NodeId>& participants,
              const std::string& reason) override;

 private:
  const net::Endpoint& address(NodeId node) const;

  std::map<NodeId, net::Endpoint> directory_;
  std::size_t window_;
  std::chrono::milliseconds hop_timeout_;
  std::chrono::milliseconds dispatch_timeout_;
  std::optional<net::Endpoint> coordinator_;
};

/// Serves the coordinator over the control protocol.
class CoordinatorServer {
 public:
  CoordinatorServer(Coordinator& coordinator, const net::Endpoint& listen);

  void start() { server_.start(); }
  void stop() { server_.stop(); }
  net::Endpoint endpoint() const { return server_.endpoint(); }

 private:
  std::optional<proto::Message> handle(proto::Message& request);

  Coordinator& coordinator_;
  MessageServer server_;
};

/// Coordinator, TCP dispatcher and server wired from one config.
class CoordinatorDaemon {
 public:
  explicit CoordinatorDaemon(const ClusterConfig& config,
                             std::optional<net::Endpoint> listen = std::nullopt,
                             CoordinatorOptions options = {});
  ~CoordinatorDaemon();

  Coordinator& coordinator() { return *coordinator_; }
  net::Endpoint endpoint() const { return server_->endpoint(); }
  void stop();

 private:
  std::shared_ptr<TcpDispatcher> dispatcher_;
  std::unique_ptr<Coordinator> coordinator_;
  std::unique_ptr<CoordinatorServer> server_;
};

}  // namespace ecpipe::coord
