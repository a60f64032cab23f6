#include "ecpipe/transport.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <thread>

#include "ecpipe/error.hpp"

namespace ecpipe {

namespace {

double lookup(const std::map<NodeId, double>& m, NodeId node, double fallback) {
  auto it = m.find(node);
  return it == m.end() ? fallback : it->second;
}

Clock::duration seconds_for(std::size_t bytes, double rate) {
  return std::chrono::duration_cast<Clock::duration>(
      std::chrono::duration<double>(static_cast<double>(bytes) / rate));
}

}  // namespace

double LinkProfile::uplink_rate(NodeId node) const { return lookup(uplink, node, default_rate); }
double LinkProfile::downlink_rate(NodeId node) const { return lookup(downlink, node, default_rate); }

double LinkProfile::link_rate(NodeId src, NodeId dst) const {
  auto it = link.find({src, dst});
  return it == link.end() ? 0 : it->second;
}

bool LinkProfile::shaped() const {
  auto positive = [](const auto& m) {
    return std::any_of(m.begin(), m.end(), [](const auto& kv) { return kv.second > 0; });
  };
  return default_rate > 0 || positive(uplink) || positive(downlink) || positive(link);
}

Shaper::Shaper(LinkProfile profile) : profile_(std::move(profile)) {}

Clock::time_point Shaper::reserve(NodeId src, NodeId dst, std::size_t bytes) {
  struct Use {
    Bucket* bucket;
    double rate;
  };
  std::lock_guard lock(mu_);
  Use uses[3];
  int count = 0;
  if (double r = profile_.uplink_rate(src); r > 0) uses[count++] = {&up_[src], r};
  if (double r = profile_.downlink_rate(dst); r > 0) uses[count++] = {&down_[dst], r};
  if (double r = profile_.link_rate(src, dst); r > 0) uses[count++] = {&link_[{src, dst}], r};

  const auto now = Clock::now();
  // A bucket that sat idle may lend up to burst_bytes of credit, which also
  // absorbs timer overshoot of the sleeping sender.
  Clock::time_point start = Clock::time_point::min();
  for (int i = 0; i < count; ++i) {
    const auto earliest = now - seconds_for(profile_.burst_bytes, uses[i].rate);
    start = std::max({start, uses[i].bucket->free_at, earliest});
  }
  Clock::time_point done = now;
  for (int i = 0; i < count; ++i) {
    uses[i].bucket->free_at = start + seconds_for(bytes, uses[i].rate);
    done = std::max(done, uses[i].bucket->free_at);
  }
  return done;
}

void Shaper::transmit(NodeId src, NodeId dst, std::size_t bytes) {
  const auto done = reserve(src, dst, bytes);
  if (done > Clock::now()) std::this_thread::sleep_until(done);
}

struct InProcTransport::Channel {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<SliceFrame> frames;
  std::size_t capacity = 64;
  bool closed = false;
  bool aborted = false;
  std::string reason;
};

class InProcSink : public FrameSink {
 public:
  InProcSink(InProcTransport& owner, InProcTransport::Key key,
             std::shared_ptr<InProcTransport::Channel> ch)
      : owner_(owner), key_(key), ch_(std::move(ch)) {}
  ~InProcSink() override {
    close();
    owner_.release(key_, true);
  }

  void send(SliceFrame frame) override {
    {
      // Wait for window space first so a stalled receiver does not consume
      // link time. This is the only producer, so the space stays free.
      std::unique_lock lock(ch_->mu);
      ch_->cv.wait(lock, [&] { return ch_->aborted || ch_->frames.size() < ch_->capacity; });
      if (ch_->aborted) raise(ErrorCode::session_aborted, ch_->reason);
      if (ch_->closed) raise(ErrorCode::transport, "send on closed stream");
    }
    if (owner_.shaper_) owner_.shaper_->transmit(key_.src, key_.dst, wire_size(frame));
    if (owner_.observer_) owner_.observer_(key_.src, key_.dst, frame);
    std::lock_guard lock(ch_->mu);
    if (ch_->aborted) raise(ErrorCode::session_aborted, ch_->reason);
    ch_->frames.push_back(std::move(frame));
    ch_->cv.notify_all();
  }

  void close() override {
    std::lock_guard lock(ch_->mu);
    ch_->closed = true;
    ch_->cv.notify_all();
  }

 private:
  InProcTransport& owner_;
  InProcTransport::Key key_;
  std::shared_ptr<InProcTransport::Channel> ch_;
};

class InProcSource : public FrameSource {
 public:
  InProcSource(InProcTransport& owner, InProcTransport::Key key,
               std::shared_ptr<InProcTransport::Channel> ch)
      : owner_(owner), key_(key), ch_(std::move(ch)) {}
  ~InProcSource() override { owner_.release(key_, false); }

  std::optional<SliceFrame> receive(std::chrono::milliseconds timeout) override {
    std::unique_lock lock(ch_->mu);
    const bool ready = ch_->cv.wait_for(lock, timeout, [&] {
      return ch_->aborted || !ch_->frames.empty() || ch_->closed;
    });
    if (!ready) {
      raise(ErrorCode::timeout, "no frame from node " + std::to_string(key_.src) + " within " +
                                    std::to_string(timeout.count()) + " ms");
    }
    if (ch_->aborted) raise(ErrorCode::session_aborted, ch_->reason);
    if (ch_->frames.empty()) return std::nullopt;
    SliceFrame frame = std::move(ch_->frames.front());
    ch_->frames.pop_front();
    ch_->cv.notify_all();
    return frame;
  }

 private:
  InProcTransport& owner_;
  InProcTransport::Key key_;
  std::shared_ptr<InProcTransport::Channel> ch_;
};

InProcTransport::InProcTransport(std::size_t window, LinkProfile profile)
    : window_(std::max<std::size_t>(window, 1)) {
  if (profile.shaped()) shaper_ = std::make_unique<Shaper>(std::move(profile));
}

InProcTransport::~InProcTransport() = default;

std::shared_ptr<InProcTransport::Channel> InProcTransport::channel(const Key& key, bool sink) {
  std::lock_guard lock(mu_);
  auto& ch = channels_[key];
  if (!ch) {
    ch = std::make_shared<Channel>();
    ch->capacity = window_;
    auto ab = aborted_.find(key.session);
    if (ab != aborted_.end()) {
      ch->aborted = true;
      ch->reason = ab->second;
    }
  }
  auto& ends = ends_[key];
  (sink ? ends.sinks : ends.sources)++;
  (sink ? ends.had_sink : ends.had_source) = true;
  return ch;
}

void InProcTransport::release(const Key& key, bool sink) {
  std::lock_guard lock(mu_);
  auto it = ends_.find(key);
  if (it == ends_.end()) return;
  auto& ends = it->second;
  --(sink ? ends.sinks : ends.sources);
  // Frames a finished sender left behind wait until a receiver has attached.
  if (ends.sinks == 0 && ends.sources == 0 && ends.had_sink && ends.had_source) {
    ends_.erase(it);
    channels_.erase(key);
  }
}

std::unique_ptr<FrameSink> InProcTransport::connect(const SessionId& session, NodeId src,
                                                    NodeId dst) {
  {
    std::lock_guard lock(mu_);
    auto it = unreachable_.find(src);
    if (it != unreachable_.end() && it->second) {
      raise(ErrorCode::transport, "node " + std::to_string(src) + " cannot reach node " +
                                      std::to_string(dst));
    }
  }
  Key key{session, src, dst};
  return std::make_unique<InProcSink>(*this, key, channel(key, true));
}

std::unique_ptr<FrameSource> InProcTransport::accept(const SessionId& session, NodeId src,
                                                     NodeId dst) {
  Key key{session, src, dst};
  return std::make_unique<InProcSource>(*this, key, channel(key, false));
}

void InProcTransport::abort(const SessionId& session, const std::string& reason) {
  std::lock_guard lock(mu_);
  aborted_.emplace(session, reason);
  for (auto& [key, ch] : channels_) {
    if (key.session != session) continue;
    std::lock_guard ch_lock(ch->mu);
    if (!ch->aborted) {
      ch->aborted = true;
      ch->reason = reason;
    }
    ch->cv.notify_all();
  }
  // Streams nobody holds any more can never be drained now.
  for (auto it = ends_.begin(); it != ends_.end();) {
    if (it->first.session == session && it->second.sinks == 0 && it->second.sources == 0) {
      channels_.erase(it->first);
      it = ends_.erase(it);
    } else {
      ++it;
    }
  }
}

void InProcTransport::set_unreachable(NodeId node, bool unreachable) {
  std::lock_guard lock(mu_);
  unreachable_[node] = unreachable;
}

std::size_t InProcTransport::open_channels() const {
  std::lock_guard lock(mu_);
  return channels_.size();
}

}  // namespace ecpipe
