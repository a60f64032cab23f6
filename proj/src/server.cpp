#include "ecpipe/server.hpp"

#include <iostream>

#include "ecpipe/error.hpp"

namespace ecpipe {

using namespace std::chrono_literals;

MessageServer::MessageServer(const net::Endpoint& listen, Handler handler)
    : listener_(listen), handler_(std::move(handler)) {}

MessageServer::~MessageServer() { stop(); }

void MessageServer::start() {
  if (acceptor_.joinable()) return;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void MessageServer::stop() {
  if (stopping_.exchange(true)) return;
  listener_.shutdown();
  if (acceptor_.joinable()) acceptor_.join();
  reap(true);
}

void MessageServer::spawn(std::function<void()> fn) {
  auto done = std::make_shared<std::atomic<bool>>(false);
  std::lock_guard lock(workers_mu_);
  workers_.push_back(Worker{std::thread([fn = std::move(fn), done] {
                              try {
                                fn();
                              } catch (const std::exception& e) {
                                std::cerr << "ecpipe: worker failed: " << e.what() << '\n';
                              }
                              done->store(true);
                            }),
                            done});
}

void MessageServer::reap(bool all) {
  std::list<Worker> finished;
  {
    std::lock_guard lock(workers_mu_);
    for (auto it = workers_.begin(); it != workers_.end();) {
      if (all || it->done->load()) {
        finished.splice(finished.end(), workers_, it++);
      } else {
        ++it;
      }
    }
  }
  for (auto& w : finished) w.thread.join();
  // Workers may have spawned more while we joined.
  if (all) {
    std::lock_guard lock(workers_mu_);
    if (workers_.empty()) return;
  } else {
    return;
  }
  reap(true);
}

void MessageServer::accept_loop() {
  while (!stopping_) {
    auto sock = listener_.accept(200ms);
    if (!sock) continue;
    if (stopping_) break;
    reap(false);
    auto shared = std::make_shared<net::Socket>(std::move(*sock));
    spawn([this, shared] { serve(std::move(*shared)); });
  }
}

void MessageServer::serve(net::Socket sock) {
  while (!stopping_) {
    if (!sock.readable(200ms)) continue;
    std::optional<proto::Message> request;
    try {
      request = proto::read_message(sock, 30s);
    } catch (const Error& e) {
      try {
        proto::write_message(sock, proto::error_reply(e.code(), e.what()));
      } catch (const Error&) {
      }
      return;
    }
    if (!request) return;
    std::optional<proto::Message> reply;
    try {
      reply = handler_(*request, sock);
      if (!reply) return;  // the handler kept the socket
    } catch (const Error& e) {
      reply = proto::error_reply(e.code(), e.what());
    } catch (const std::exception& e) {
      reply = proto::error_reply(ErrorCode::protocol, e.what());
    }
    try {
      proto::write_message(sock, *reply);
    } catch (const Error&) {
      return;
    }
  }
}

}  // namespace ecpipe
