#include "ecpipe/tcp_transport.hpp"

#include <sys/socket.h>

#include "ecpipe/error.hpp"
#include "ecpipe/frame.hpp"
#include "ecpipe/protocol.hpp"

namespace ecpipe {

// ---- StreamRegistry ----

void StreamRegistry::offer(const SessionId& session, NodeId src, NodeId dst, net::Socket sock) {
  std::lock_guard lock(mu_);
  if (aborted_.count(session)) return;  // dropping the socket closes it
  ready_[{session, src, dst}] = std::move(sock);
  cv_.notify_all();
}

net::Socket StreamRegistry::take(const SessionId& session, NodeId src, NodeId dst,
                                 std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  const Key key{session, src, dst};
  const bool ready = cv_.wait_for(lock, timeout, [&] {
    return ready_.count(key) > 0 || aborted_.count(session) > 0;
  });
  if (auto it = aborted_.find(session); it != aborted_.end()) {
    raise(ErrorCode::session_aborted, it->second);
  }
  if (!ready) {
    raise(ErrorCode::timeout, "node " + std::to_string(src) + " did not open its stream within " +
                                  std::to_string(timeout.count()) + " ms");
  }
  auto it = ready_.find(key);
  net::Socket sock = std::move(it->second);
  ready_.erase(it);
  return sock;
}

void StreamRegistry::abort(const SessionId& session, const std::string& reason) {
  std::lock_guard lock(mu_);
  aborted_.emplace(session, reason);
  for (auto it = ready_.begin(); it != ready_.end();) {
    it = std::get<0>(it->first) == session ? ready_.erase(it) : std::next(it);
  }
  cv_.notify_all();
}

std::size_t StreamRegistry::pending() const {
  std::lock_guard lock(mu_);
  return ready_.size();
}

// ---- sinks and sources ----

struct TcpTransport::Open {
  std::mutex write_mu;
  net::Socket sock;
  bool sink = false;
};

namespace {

SliceFrame control_frame(const SessionId& session, std::uint16_t target, std::string_view text) {
  SliceFrame f;
  f.session = session;
  f.target = target;
  f.payload.assign(text.begin(), text.end());
  return f;
}

}  // namespace

class TcpSink : public FrameSink {
 public:
  TcpSink(TcpTransport& owner, SessionId session, NodeId src, NodeId dst,
          std::unique_ptr<TcpTransport::Open> open)
      : owner_(owner), session_(session), src_(src), dst_(dst), open_(std::move(open)) {
    owner_.track(session_, open_.get());
  }

  ~TcpSink() override {
    try {
      close();
    } catch (...) {
    }
    owner_.untrack(session_, open_.get());
  }

  void send(SliceFrame frame) override {
    if (closed_) raise(ErrorCode::transport, "send on closed stream");
    const Bytes wire = encode_frame(frame);
    if (owner_.shaper_) owner_.shaper_->transmit(src_, dst_, wire.size());
    write(wire);
  }

  void close() override {
    if (closed_) return;
    closed_ = true;
    write(encode_frame(control_frame(session_, kEndTarget, {})));
  }

 private:
  void write(const Bytes& wire) {
    std::string reason;
    if (owner_.aborted(session_, &reason)) raise(ErrorCode::session_aborted, reason);
    try {
      std::lock_guard lock(open_->write_mu);
      open_->sock.send_all(wire);
    } catch (const Error& e) {
      if (owner_.aborted(session_, &reason)) raise(ErrorCode::session_aborted, reason);
      raise(ErrorCode::transport, "stream to node " + std::to_string(dst_) + " failed: " + e.what());
    }
  }

  TcpTransport& owner_;
  SessionId session_;
  NodeId src_;
  NodeId dst_;
  std::unique_ptr<TcpTransport::Open> open_;
  bool closed_ = false;
};

class TcpSource : public FrameSource {
 public:
  TcpSource(TcpTransport& owner, SessionId session, NodeId src, NodeId dst)
      : owner_(owner), session_(session), src_(src), dst_(dst),
        open_(std::make_unique<TcpTransport::Open>()) {
    owner_.track(session_, open_.get());
  }

  ~TcpSource() override { owner_.untrack(session_, open_.get()); }

  std::optional<SliceFrame> receive(std::chrono::milliseconds timeout) override {
    if (ended_) return std::nullopt;
    std::string reason;
    if (!open_->sock.valid()) {
      net::Socket sock = owner_.registry_->take(session_, src_, dst_, timeout);
      std::lock_guard lock(owner_.mu_);
      open_->sock = std::move(sock);
      if (owner_.aborted_.count(session_)) open_->sock.shutdown();
    }
    try {
      Bytes header(kFrameHeaderSize);
      if (!open_->sock.recv_exact(header, timeout)) {
        if (owner_.aborted(session_, &reason)) raise(ErrorCode::session_aborted, reason);
        raise(ErrorCode::transport,
              "stream from node " + std::to_string(src_) + " ended without an end marker");
      }
      FrameHeader h = decode_frame_header(header);
      if (h.session != session_) {
        raise(ErrorCode::corrupt_frame, "frame from node " + std::to_string(src_) +
                                            " carries session " + h.session.hex());
      }
      Bytes payload(h.length);
      std::uint8_t crc[4];
      if (!open_->sock.recv_exact(payload, timeout) || !open_->sock.recv_exact(crc, timeout)) {
        raise(ErrorCode::transport, "stream from node " + std::to_string(src_) + " cut mid-frame");
      }
      verify_frame_crc(header, payload, get_u32(crc));
      if (h.target == kEndTarget) {
        ended_ = true;
        return std::nullopt;
      }
      if (h.target == kAbortTarget) {
        raise(ErrorCode::session_aborted, std::string(payload.begin(), payload.end()));
      }
      return SliceFrame{h.session, h.target, h.slice, h.hop, std::move(payload)};
    } catch (const Error& e) {
      if (e.code() == ErrorCode::timeout) {
        raise(ErrorCode::timeout, "no frame from node " + std::to_string(src_) + " within " +
                                      std::to_string(timeout.count()) + " ms");
      }
      if (e.code() == ErrorCode::transport && owner_.aborted(session_, &reason)) {
        raise(ErrorCode::session_aborted, reason);
      }
      throw;
    }
  }

 private:
  TcpTransport& owner_;
  SessionId session_;
  NodeId src_;
  NodeId dst_;
  std::unique_ptr<TcpTransport::Open> open_;
  bool ended_ = false;
};

// ---- TcpTransport ----

TcpTransport::TcpTransport(std::map<NodeId, net::Endpoint> directory,
                           std::shared_ptr<StreamRegistry> registry, std::shared_ptr<Shaper> shaper,
                           std::chrono::milliseconds connect_timeout)
    : directory_(std::move(directory)),
      registry_(std::move(registry)),
      shaper_(std::move(shaper)),
      connect_timeout_(connect_timeout) {}

TcpTransport::~TcpTransport() = default;

std::unique_ptr<FrameSink> TcpTransport::connect(const SessionId& session, NodeId src, NodeId dst) {
  auto it = directory_.find(dst);
  if (it == directory_.end()) {
    raise(ErrorCode::transport, "no address for node " + std::to_string(dst));
  }
  auto open = std::make_unique<Open>();
  open->sink = true;
  open->sock = net::Socket::connect(it->second, connect_timeout_);
  proto::write_message(open->sock, proto::Message{proto::MsgType::stream_open,
                                                  {{"session", session.hex()}, {"src", src}, {"dst", dst}},
                                                  {}});
  return std::make_unique<TcpSink>(*this, session, src, dst, std::move(open));
}

std::unique_ptr<FrameSource> TcpTransport::accept(const SessionId& session, NodeId src, NodeId dst) {
  return std::make_unique<TcpSource>(*this, session, src, dst);
}

void TcpTransport::abort(const SessionId& session, const std::string& reason) {
  {
    std::lock_guard lock(mu_);
    if (!aborted_.emplace(session, reason).second) return;
    auto it = open_.find(session);
    if (it != open_.end()) {
      for (Open* open : it->second) {
        // Tell the receiver why, unless a send is in progress on the stream.
        if (open->sink && open->sock.valid()) {
          std::unique_lock wl(open->write_mu, std::try_to_lock);
          if (wl.owns_lock()) {
            Bytes wire = encode_frame(control_frame(session, kAbortTarget, reason));
            ::send(open->sock.fd(), wire.data(), wire.size(), MSG_DONTWAIT | MSG_NOSIGNAL);
          }
        }
        open->sock.shutdown();
      }
    }
  }
  registry_->abort(session, reason);
}

void TcpTransport::track(const SessionId& session, Open* open) {
  std::lock_guard lock(mu_);
  open_[session].insert(open);
  if (aborted_.count(session)) open->sock.shutdown();
}

void TcpTransport::untrack(const SessionId& session, Open* open) {
  std::lock_guard lock(mu_);
  auto it = open_.find(session);
  if (it == open_.end()) return;
  it->second.erase(open);
  if (it->second.empty()) open_.erase(it);
}

bool TcpTransport::aborted(const SessionId& session, std::string* reason) const {
  std::lock_guard lock(mu_);
  auto it = aborted_.find(session);
  if (it == aborted_.end()) return false;
  if (reason) *reason = it->second;
  return true;
}

}  // namespace ecpipe
