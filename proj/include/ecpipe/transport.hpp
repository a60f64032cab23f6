#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>

#include "ecpipe/frame.hpp"
#include "ecpipe/types.hpp"

namespace ecpipe {

using Clock = std::chrono::steady_clock;

/// Sending end of one (session, src, dst) frame stream.
class FrameSink {
 public:
  virtual ~FrameSink() = default;
  /// Blocks while the stream's in-flight window is full or the link is busy.
  virtual void send(SliceFrame frame) = 0;
  /// Marks the end of the stream.
  virtual void close() = 0;
};

/// Receiving end of one (session, src, dst) frame stream.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  /// Next frame, or nullopt once the sender closed the stream. Throws
  /// Error(timeout) if nothing arrives within `timeout`.
  virtual std::optional<SliceFrame> receive(std::chrono::milliseconds timeout) = 0;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::unique_ptr<FrameSink> connect(const SessionId& session, NodeId src, NodeId dst) = 0;
  virtual std::unique_ptr<FrameSource> accept(const SessionId& session, NodeId src,
                                              NodeId dst) = 0;
  /// Fails every stream of the session still open at this endpoint so that
  /// blocked senders and receivers return promptly.
  virtual void abort(const SessionId& session, const std::string& reason) = 0;
};

/// Port and link rates in bytes per second; 0 means unlimited. The default
/// rate applies to every port; directed links are unlimited unless listed.
struct LinkProfile {
  double default_rate = 0;
  std::map<NodeId, double> uplink;
  std::map<NodeId, double> downlink;
  std::map<std::pair<NodeId, NodeId>, double> link;
  std::size_t burst_bytes = 64 * 1024;

  double uplink_rate(NodeId node) const;
  double downlink_rate(NodeId node) const;
  double link_rate(NodeId src, NodeId dst) const;
  bool shaped() const;
};

/// Token-bucket pacing of transmissions. A transmission src->dst occupies
/// src's uplink, dst's downlink and the directed link itself; it starts when
/// all three are free and each stays busy for bytes / its own rate.
class Shaper {
 public:
  explicit Shaper(LinkProfile profile);

  /// Books the transmission and returns the time it completes.
  Clock::time_point reserve(NodeId src, NodeId dst, std::size_t bytes);
  /// reserve() then sleep until completion.
  void transmit(NodeId src, NodeId dst, std::size_t bytes);

  const LinkProfile& profile() const { return profile_; }

 private:
  struct Bucket {
    Clock::time_point free_at{};
  };

  LinkProfile profile_;
  std::mutex mu_;
  std::map<NodeId, Bucket> up_;
  std::map<NodeId, Bucket> down_;
  std::map<std::pair<NodeId, NodeId>, Bucket> link_;
};

/// In-process transport: bounded channels between threads, optionally paced
/// by a Shaper. Used by tests and the benchmark harness.
class InProcTransport : public Transport {
 public:
  using Observer = std::function<void(NodeId src, NodeId dst, const SliceFrame&)>;

  explicit InProcTransport(std::size_t window = 64, LinkProfile profile = {});
  ~InProcTransport() override;

  std::unique_ptr<FrameSink> connect(const SessionId& session, NodeId src, NodeId dst) override;
  std::unique_ptr<FrameSource> accept(const SessionId& session, NodeId src, NodeId dst) override;
  void abort(const SessionId& session, const std::string& reason) override;

  /// Called on every frame as it is handed to the channel.
  void set_observer(Observer observer) { observer_ = std::move(observer); }
  /// Makes every connect() from `node` fail, emulating an unreachable helper.
  void set_unreachable(NodeId node, bool unreachable = true);

  std::size_t open_channels() const;

  struct Channel;

 private:
  struct Key {
    SessionId session;
    NodeId src;
    NodeId dst;
    auto operator<=>(const Key&) const = default;
  };

  struct Ends {
    int sinks = 0;
    int sources = 0;
    bool had_sink = false;
    bool had_source = false;
  };

  std::shared_ptr<Channel> channel(const Key& key, bool sink);
  void release(const Key& key, bool sink);

  friend class InProcSink;
  friend class InProcSource;

  std::size_t window_;
  std::unique_ptr<Shaper> shaper_;
  Observer observer_;
  mutable std::mutex mu_;
  std::map<Key, std::shared_ptr<Channel>> channels_;
  std::map<Key, Ends> ends_;
  std::map<NodeId, bool> unreachable_;
  std::map<SessionId, std::string> aborted_;
};

}  // namespace ecpipe
