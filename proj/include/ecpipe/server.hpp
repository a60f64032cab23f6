#pragma once

#include <atomic>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>

#include "ecpipe/net.hpp"
#include "ecpipe/protocol.hpp"

namespace ecpipe {

/// Accept loop for the control protocol. Each connection gets a thread that
/// reads requests and writes the handler's replies until the peer hangs up.
/// A handler that takes the socket (moving it out) returns nullopt and the
/// connection thread ends. An Error thrown by the handler goes back to the
/// client as an error reply.
class MessageServer {
 public:
  using Handler = std::function<std::optional<proto::Message>(proto::Message& request, net::Socket& sock)>;

  MessageServer(const net::Endpoint& listen, Handler handler);
  ~MessageServer();
  MessageServer(const MessageServer&) = delete;
  MessageServer& operator=(const MessageServer&) = delete;

  void start();
  /// Stops accepting, waits for open connections to go idle, joins threads.
  void stop();
  net::Endpoint endpoint() const { return listener_.endpoint(); }

  /// Runs `fn` on a tracked thread that stop() joins.
  void spawn(std::function<void()> fn);

 private:
  struct Worker {
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> done;
  };

  void accept_loop();
  void serve(net::Socket sock);
  void reap(bool all);

  net::Listener listener_;
  Handler handler_;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex workers_mu_;
  std::list<Worker> workers_;
};

}  // namespace ecpipe
