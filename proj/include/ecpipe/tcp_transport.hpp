#pragma once

#include <chrono>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <tuple>

#include "ecpipe/net.hpp"
#include "ecpipe/transport.hpp"

namespace ecpipe {

/// Inbound data streams of one node, keyed by (session, src, dst). A server
/// hands over each connection that opened with STREAM_OPEN; the transport
/// collects it when the plan asks for that stream. Streams may arrive before
/// anyone asks for them.
class StreamRegistry {
 public:
  void offer(const SessionId& session, NodeId src, NodeId dst, net::Socket sock);
  /// Throws Error(timeout) if the stream does not show up in time and
  /// Error(session_aborted) once the session is aborted.
  net::Socket take(const SessionId& session, NodeId src, NodeId dst,
                   std::chrono::milliseconds timeout);
  void abort(const SessionId& session, const std::string& reason);
  std::size_t pending() const;

 private:
  using Key = std::tuple<SessionId, NodeId, NodeId>;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<Key, net::Socket> ready_;
  std::map<SessionId, std::string> aborted_;
};

/// Frame streams over TCP. connect() dials the destination's server and
/// sends STREAM_OPEN; accept() is lazy and takes the stream from the
/// registry on first receive, so nodes in a cycle never wait on each other
/// while setting up. Optional shaping paces this process's sends.
class TcpTransport : public Transport {
 public:
  TcpTransport(std::map<NodeId, net::Endpoint> directory, std::shared_ptr<StreamRegistry> registry,
               std::shared_ptr<Shaper> shaper = nullptr,
               std::chrono::milliseconds connect_timeout = std::chrono::milliseconds(5000));
  ~TcpTransport() override;

  std::unique_ptr<FrameSink> connect(const SessionId& session, NodeId src, NodeId dst) override;
  std::unique_ptr<FrameSource> accept(const SessionId& session, NodeId src, NodeId dst) override;
  void abort(const SessionId& session, const std::string& reason) override;

  /// Registered by open sinks and sources so abort() can wake them.
  struct Open;

 private:
  friend class TcpSink;
  friend class TcpSource;

  void track(const SessionId& session, Open* open);
  void untrack(const SessionId& session, Open* open);
  bool aborted(const SessionId& session, std::string* reason) const;

  std::map<NodeId, net::Endpoint> directory_;
  std::shared_ptr<StreamRegistry> registry_;
  std::shared_ptr<Shaper> shaper_;
  std::chrono::milliseconds connect_timeout_;
  mutable std::mutex mu_;
  std::map<SessionId, std::set<Open*>> open_;
  std::map<SessionId, std::string> aborted_;
};

}  // namespace ecpipe
