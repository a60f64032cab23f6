#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "ecpipe/types.hpp"

namespace ecpipe::net {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  /// "host:port"; throws Error(invalid_argument).
  static Endpoint parse(std::string_view text);
  std::string str() const;
  bool operator==(const Endpoint&) const = default;
};

/// Connected TCP stream socket. Reads and writes are whole-buffer; a
/// negative timeout waits forever.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& other) noexcept;
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket();

  /// Throws Error(transport) if the peer cannot be reached in time.
  static Socket connect(const Endpoint& to, std::chrono::milliseconds timeout);

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }

  void send_all(std::span<const std::uint8_t> data);
  /// Fills `out`. Returns false on a clean end of stream before the first
  /// byte; throws Error(transport) on a short read and Error(timeout) when
  /// nothing arrives in time.
  bool recv_exact(std::span<std::uint8_t> out, std::chrono::milliseconds timeout);

  /// True once data or end of stream is waiting; false on timeout.
  bool readable(std::chrono::milliseconds timeout);
  /// Wakes any thread blocked on this socket; safe to call concurrently.
  void shutdown();
  void close();

 private:
  int fd_ = -1;
};

class Listener {
 public:
  /// Binds and listens; port 0 picks a free port.
  explicit Listener(const Endpoint& at);
  ~Listener();
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;

  std::uint16_t port() const { return port_; }
  Endpoint endpoint() const { return {host_, port_}; }
  /// Next connection, or nullopt on timeout or after shutdown().
  std::optional<Socket> accept(std::chrono::milliseconds timeout);
  void shutdown();

 private:
  int fd_ = -1;
  std::string host_;
  std::uint16_t port_ = 0;
};

}  // namespace ecpipe::net
