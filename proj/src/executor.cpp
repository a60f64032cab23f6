#include "ecpipe/executor.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <exception>
#include <optional>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "ecpipe/gf.hpp"

namespace ecpipe::pipeline {

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::receive: return "receive";
    case Stage::read: return "read";
    case Stage::combine: return "combine";
    case Stage::send: return "send";
  }
  return "unknown";
}

void StageTrace::record(const StageEvent& event) {
  std::lock_guard lock(mu_);
  events_.push_back(event);
}

std::vector<StageEvent> StageTrace::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::string HopFailure::describe() const {
  std::string out = "node " + std::to_string(node);
  if (has_peer) out += " <-> node " + std::to_string(peer);
  out += ", slice " + std::to_string(slice) + ": " + reason;
  return out;
}

namespace {

template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(std::max<std::size_t>(capacity, 1)) {}

  // False if the queue was cancelled.
  bool push(T value) {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return cancelled_ || items_.size() < capacity_; });
    if (cancelled_) return false;
    items_.push_back(std::move(value));
    cv_.notify_all();
    return true;
  }

  // nullopt once closed and drained, or cancelled.
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return cancelled_ || closed_ || !items_.empty(); });
    if (cancelled_ || items_.empty()) return std::nullopt;
    T value = std::move(items_.front());
    items_.pop_front();
    cv_.notify_all();
    return value;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    cv_.notify_all();
  }

  void cancel() {
    std::lock_guard lock(mu_);
    cancelled_ = true;
    cv_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> items_;
  bool closed_ = false;
  bool cancelled_ = false;
};

struct UnitKey {
  NodeId src;
  std::uint16_t target;
  std::uint32_t slice;
  bool operator==(const UnitKey&) const = default;
};

struct UnitKeyHash {
  std::size_t operator()(const UnitKey& k) const noexcept {
    std::uint64_t h = (std::uint64_t{k.src} << 32) ^ (std::uint64_t{k.target} << 48) ^ k.slice;
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return static_cast<std::size_t>(h);
  }
};

struct AccKey {
  std::uint32_t transfer;
  std::uint32_t slice;
  std::uint16_t target;
  bool operator==(const AccKey&) const = default;
};

struct AccKeyHash {
  std::size_t operator()(const AccKey& k) const noexcept {
    std::uint64_t h = (std::uint64_t{k.transfer} << 32) ^ k.slice ^ (std::uint64_t{k.target} << 20);
    h ^= h >> 29;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 32;
    return static_cast<std::size_t>(h);
  }
};

struct Partial {
  Bytes data;
  int hops = 0;
};

class Failed : public std::exception {};

class NodeRunner {
 public:
  NodeRunner(const RepairPlan& plan, NodeId node, Transport& transport, BlockReader* reader,
             const ExecOptions& options)
      : plan_(plan),
        node_(node),
        transport_(transport),
        reader_(reader),
        options_(options),
        spec_(plan.spec()),
        s_(plan.spec().slices()),
        position_(plan.helper_position(node)) {}

  NodeReport run() {
    report_.node = node_;
    try {
      setup();
      start_threads();
      process_outbound();
      finish_senders();
      drain_inbound();
      verify_and_collect();
    } catch (const Failed&) {
    } catch (const Error& e) {
      fail(e.code(), e.what(), current_peer_, current_slice_);
    } catch (const std::exception& e) {
      fail(ErrorCode::io, e.what(), current_peer_, current_slice_);
    }
    shutdown();
    if (failure_) throw SessionAborted(*failure_);
    return std::move(report_);
  }

 private:
  // ---- setup ------------------------------------------------------------

  void setup() {
    const auto& transfers = plan_.transfers();
    for (const auto& t : transfers) {
      if (t.src == node_) outs_.push_back(&t);
      if (t.dst == node_) ins_.push_back(&t);
    }
    auto by_order = [](const Transfer* a, const Transfer* b) {
      return std::pair(a->order, a->id) < std::pair(b->order, b->id);
    };
    std::sort(outs_.begin(), outs_.end(), by_order);
    std::sort(ins_.begin(), ins_.end(), by_order);

    if (position_ < 0 && plan_.targets_for(node_).empty()) {
      raise(ErrorCode::invalid_argument,
            "node " + std::to_string(node_) + " does not take part in this plan");
    }
    for (int j : plan_.targets_for(node_)) {
      my_targets_.push_back(j);
      report_.blocks[j] = Bytes(spec_.block_size, 0);
      hops_[j].assign(s_, 0);
    }

    consumers_.resize(transfers.size());
    for (const Transfer* o : outs_) {
      for (auto d : o->deps) consumers_[d].push_back(o);
    }
    for (const Transfer* i : ins_) {
      for (std::uint32_t x : slices_of(*i)) {
        for (std::uint16_t field : fields_of(*i)) {
          if (!owner_.emplace(UnitKey{i->src, field, x}, i->id).second) {
            raise(ErrorCode::protocol, "plan sends the same slice twice from node " +
                                           std::to_string(i->src) + " to node " +
                                           std::to_string(node_));
          }
        }
      }
    }

    for (const Transfer* o : outs_) {
      if (position_ >= 0) {
        // Consecutive uses of the same slice (a fan-out to several
        // requestors) share one read.
        for (std::uint32_t x : slices_of(*o)) {
          if (read_schedule_.empty() || read_schedule_.back() != x) read_schedule_.push_back(x);
        }
      } else if (o->kind == PayloadKind::raw) {
        raise(ErrorCode::invalid_argument, "only a helper can send its raw block");
      }
    }
  }

  std::vector<std::uint32_t> slices_of(const Transfer& t) const {
    std::vector<std::uint32_t> out;
    if (t.whole_block()) {
      out.resize(s_);
      for (std::uint32_t x = 0; x < s_; ++x) out[x] = x;
    } else {
      out.push_back(t.slice);
    }
    return out;
  }

  static std::vector<std::uint16_t> fields_of(const Transfer& t) {
    if (t.kind == PayloadKind::raw) return {kRawTarget};
    std::vector<std::uint16_t> out;
    for (int j = t.target_begin; j < t.target_begin + t.target_count; ++j) {
      out.push_back(static_cast<std::uint16_t>(j));
    }
    return out;
  }

  // ---- worker threads ----------------------------------------------------

  struct Sender {
    NodeId dst;
    std::unique_ptr<FrameSink> sink;
    std::unique_ptr<BoundedQueue<SliceFrame>> queue;
    std::thread thread;
  };

  void start_threads() {
    for (const Transfer* i : ins_) {
      if (!sources_.count(i->src)) {
        current_peer_ = i->src;
        sources_[i->src] = transport_.accept(plan_.session(), i->src, node_);
      }
    }
    for (const Transfer* o : outs_) {
      if (sender_index_.count(o->dst)) continue;
      current_peer_ = o->dst;
      auto sender = std::make_unique<Sender>();
      sender->dst = o->dst;
      sender->sink = transport_.connect(plan_.session(), node_, o->dst);
      sender->queue = std::make_unique<BoundedQueue<SliceFrame>>(options_.window);
      sender_index_[o->dst] = senders_.size();
      senders_.push_back(std::move(sender));
    }
    current_peer_.reset();
    for (auto& sender : senders_) {
      Sender* raw = sender.get();
      raw->thread = std::thread([this, raw] { send_loop(*raw); });
    }
    if (!read_schedule_.empty()) {
      if (!reader_) raise(ErrorCode::not_found, "no block reader for local block");
      local_ = reader_->open(plan_.inputs().helpers[position_].block);
      if (local_->size() < spec_.block_size) {
        raise(ErrorCode::length_mismatch,
              "local block " + std::to_string(plan_.inputs().helpers[position_].block) + " has " +
                  std::to_string(local_->size()) + " bytes, expected " +
                  std::to_string(spec_.block_size));
      }
      read_queue_ = std::make_unique<BoundedQueue<std::pair<std::uint32_t, Bytes>>>(2);
      read_thread_ = std::thread([this] { read_loop(); });
    }
  }

  void send_loop(Sender& sender) {
    std::uint32_t slice = 0;
    try {
      while (auto frame = sender.queue->pop()) {
        slice = frame->slice;
        const auto begin = Clock::now();
        sender.sink->send(std::move(*frame));
        trace(Stage::send, slice, begin);
        ++frames_sent_;
      }
      if (!failed_) sender.sink->close();
    } catch (const Error& e) {
      fail(e.code(), e.what(), sender.dst, slice);
    } catch (const std::exception& e) {
      fail(ErrorCode::transport, e.what(), sender.dst, slice);
    }
  }

  void read_loop() {
    std::uint32_t slice = 0;
    try {
      for (std::uint32_t x : read_schedule_) {
        slice = x;
        const auto begin = Clock::now();
        Bytes buf(spec_.slice_size);
        local_->read(spec_.offset(x), buf);
        trace(Stage::read, x, begin);
        bytes_read_ += buf.size();
        if (!read_queue_->push({x, std::move(buf)})) return;
      }
      read_queue_->close();
    } catch (const Error& e) {
      fail(e.code(), "reading local block: " + std::string(e.what()), std::nullopt, slice);
    } catch (const std::exception& e) {
      fail(ErrorCode::io, "reading local block: " + std::string(e.what()), std::nullopt, slice);
    }
  }

  const Bytes& local_slice(std::uint32_t slice) {
    if (local_slice_ && local_slice_->first == slice) return local_slice_->second;
    auto item = read_queue_->pop();
    if (!item) throw Failed();
    if (item->first != slice) raise(ErrorCode::protocol, "local read schedule out of step");
    local_slice_ = std::move(item);
    return local_slice_->second;
  }

  // ---- inbound -----------------------------------------------------------

  void obtain(const UnitKey& key) {
    if (obtained_.count(key)) return;
    current_peer_ = key.src;
    current_slice_ = key.slice;
    for (;;) {
      auto stashed = stash_.find(key);
      if (stashed != stash_.end()) {
        SliceFrame frame = std::move(stashed->second);
        stash_.erase(stashed);
        fold(key, frame);
        break;
      }
      const auto begin = Clock::now();
      auto frame = sources_.at(key.src)->receive(options_.timeout);
      if (!frame) {
        raise(ErrorCode::protocol, "stream ended before slice " + std::to_string(key.slice) +
                                       " arrived");
      }
      trace(Stage::receive, frame->slice, begin);
      ++report_.frames_received;
      const UnitKey got{key.src, frame->target, frame->slice};
      check_frame(got, *frame);
      if (got == key) {
        fold(key, *frame);
        break;
      }
      stash_.emplace(got, std::move(*frame));
    }
    obtained_.insert(key);
    current_peer_.reset();
  }

  void check_frame(const UnitKey& key, const SliceFrame& frame) {
    if (frame.session != plan_.session()) {
      raise(ErrorCode::protocol, "frame belongs to session " + frame.session.hex());
    }
    if (!owner_.count(key)) {
      raise(ErrorCode::protocol, "unexpected frame for target " + std::to_string(key.target) +
                                     " slice " + std::to_string(key.slice));
    }
    if (obtained_.count(key) || stash_.count(key)) {
      raise(ErrorCode::protocol, "duplicate frame for slice " + std::to_string(key.slice));
    }
    if (frame.payload.size() != spec_.slice_size) {
      raise(ErrorCode::corrupt_frame, "payload of " + std::to_string(frame.payload.size()) +
                                          " bytes, expected " + std::to_string(spec_.slice_size));
    }
  }

  // Adds one received unit into everything on this node that needs it.
  void fold(const UnitKey& key, const SliceFrame& frame) {
    const Transfer& in = plan_.transfers()[owner_.at(key)];
    const bool raw = in.kind == PayloadKind::raw;
    const int sender_pos = raw ? plan_.helper_position(in.src) : -1;
    if (raw && sender_pos < 0) raise(ErrorCode::protocol, "raw block from a non-helper");
    const auto& coef = plan_.inputs().coefficients;
    const auto begin = Clock::now();

    auto add = [&](Bytes& acc, int j) {
      if (raw) {
        gf::mul_add_region(coef.at(j, sender_pos), frame.payload, acc);
      } else {
        gf::add_region(frame.payload, acc);
      }
    };
    auto carries = [&](int j) { return raw || frame.target == j; };

    for (const Transfer* o : consumers_[in.id]) {
      if (!o->whole_block() && o->slice != key.slice) continue;
      for (int j = o->target_begin; j < o->target_begin + o->target_count; ++j) {
        if (!carries(j)) continue;
        Partial& acc = acc_[AccKey{o->id, key.slice, static_cast<std::uint16_t>(j)}];
        if (acc.data.empty()) acc.data.assign(spec_.slice_size, 0);
        add(acc.data, j);
        acc.hops += frame.hop;
      }
    }
    for (int j : my_targets_) {
      if (!carries(j)) continue;
      Bytes& block = report_.blocks[j];
      std::span<std::uint8_t> dst(block.data() + spec_.offset(key.slice), spec_.slice_size);
      if (raw) {
        gf::mul_add_region(coef.at(j, sender_pos), frame.payload, dst);
      } else {
        gf::add_region(frame.payload, dst);
      }
      hops_[j][key.slice] += frame.hop;
    }
    trace(Stage::combine, key.slice, begin);
  }

  void ensure_deps(const Transfer& o, std::uint32_t x) {
    const auto& transfers = plan_.transfers();
    for (auto d : o.deps) {
      const Transfer& dep = transfers[d];
      if (!dep.whole_block() && dep.slice != x) continue;
      if (dep.kind == PayloadKind::raw) {
        obtain(UnitKey{dep.src, kRawTarget, x});
        continue;
      }
      const int lo = std::max<int>(dep.target_begin, o.target_begin);
      const int hi = std::min<int>(dep.target_begin + dep.target_count,
                                   o.target_begin + o.target_count);
      for (int j = lo; j < hi; ++j) obtain(UnitKey{dep.src, static_cast<std::uint16_t>(j), x});
    }
  }

  // ---- outbound ----------------------------------------------------------

  void process_outbound() {
    for (const Transfer* o : outs_) {
      if (o->whole_block()) {
        // Whole-block transfers forward only complete blocks.
        for (std::uint32_t x = 0; x < s_; ++x) ensure_deps(*o, x);
        for (std::uint32_t x = 0; x < s_; ++x) emit(*o, x);
      } else {
        ensure_deps(*o, o->slice);
        emit(*o, o->slice);
      }
    }
  }

  void emit(const Transfer& o, std::uint32_t x) {
    current_slice_ = x;
    Sender& sender = *senders_[sender_index_.at(o.dst)];
    static const Bytes kNone;
    const Bytes& local = position_ >= 0 ? local_slice(x) : kNone;

    if (o.kind == PayloadKind::raw) {
      Bytes payload = std::move(local_slice_->second);
      local_slice_.reset();
      push(sender, SliceFrame{plan_.session(), kRawTarget, x, 1, std::move(payload)});
      return;
    }
    const auto& coef = plan_.inputs().coefficients;
    for (int j = o.target_begin; j < o.target_begin + o.target_count; ++j) {
      const auto begin = Clock::now();
      Partial part;
      auto it = acc_.find(AccKey{o.id, x, static_cast<std::uint16_t>(j)});
      if (it != acc_.end()) {
        part = std::move(it->second);
        acc_.erase(it);
      }
      if (position_ >= 0) {
        const gf::Element a = coef.at(j, position_);
        if (part.data.empty()) {
          part.data.resize(spec_.slice_size);
          gf::mul_region(a, local, part.data);
        } else {
          gf::mul_add_region(a, local, part.data);
        }
        part.hops += 1;
      } else if (part.data.empty()) {
        part.data.assign(spec_.slice_size, 0);
      }
      trace(Stage::combine, x, begin);
      push(sender, SliceFrame{plan_.session(), static_cast<std::uint16_t>(j), x,
                              static_cast<std::uint8_t>(part.hops), std::move(part.data)});
    }
  }

  void push(Sender& sender, SliceFrame frame) {
    if (failed_ || !sender.queue->push(std::move(frame))) throw Failed();
  }

  void finish_senders() {
    for (auto& sender : senders_) sender->queue->close();
    for (auto& sender : senders_) {
      if (sender->thread.joinable()) sender->thread.join();
    }
    if (failed_) throw Failed();
  }

  void drain_inbound() {
    for (const Transfer* i : ins_) {
      for (std::uint32_t x : slices_of(*i)) {
        for (std::uint16_t field : fields_of(*i)) obtain(UnitKey{i->src, field, x});
      }
    }
    if (!stash_.empty()) raise(ErrorCode::protocol, "frames left over after the session");
    for (auto& [src, source] : sources_) {
      current_peer_ = src;
      if (source->receive(options_.timeout)) {
        raise(ErrorCode::protocol, "node " + std::to_string(src) + " sent more than planned");
      }
    }
    current_peer_.reset();
  }

  void verify_and_collect() {
    for (int j : my_targets_) {
      for (std::uint32_t x = 0; x < s_; ++x) {
        if (hops_[j][x] != plan_.k()) {
          current_slice_ = x;
          raise(ErrorCode::protocol, "slice " + std::to_string(x) + " of target " +
                                         std::to_string(j) + " combines " +
                                         std::to_string(hops_[j][x]) + " helper terms, expected " +
                                         std::to_string(plan_.k()));
        }
      }
    }
    report_.bytes_read = bytes_read_;
    report_.frames_sent = frames_sent_;
  }

  // ---- failure handling --------------------------------------------------

  void fail(ErrorCode code, const std::string& reason, std::optional<NodeId> peer,
            std::uint32_t slice) {
    {
      std::lock_guard lock(fail_mu_);
      if (failure_) return;
      HopFailure f;
      f.node = node_;
      f.code = code;
      f.reason = reason;
      f.slice = slice;
      if (peer) {
        f.peer = *peer;
        f.has_peer = true;
      }
      failure_ = f;
    }
    failed_ = true;
    transport_.abort(plan_.session(), failure_->describe());
    for (auto& sender : senders_) sender->queue->cancel();
    if (read_queue_) read_queue_->cancel();
  }

  void shutdown() {
    if (failed_) {
      for (auto& sender : senders_) sender->queue->cancel();
      if (read_queue_) read_queue_->cancel();
    }
    for (auto& sender : senders_) {
      if (sender->thread.joinable()) sender->thread.join();
    }
    if (read_thread_.joinable()) read_thread_.join();
  }

  void trace(Stage stage, std::uint32_t slice, Clock::time_point begin) {
    if (options_.trace) options_.trace->record({node_, stage, slice, begin, Clock::now()});
  }

  const RepairPlan& plan_;
  NodeId node_;
  Transport& transport_;
  BlockReader* reader_;
  const ExecOptions& options_;
  SliceSpec spec_;
  std::uint32_t s_;
  int position_;

  std::vector<const Transfer*> outs_;
  std::vector<const Transfer*> ins_;
  std::vector<int> my_targets_;
  std::map<int, std::vector<int>> hops_;
  std::vector<std::vector<const Transfer*>> consumers_;
  std::unordered_map<UnitKey, std::uint32_t, UnitKeyHash> owner_;
  std::unordered_set<UnitKey, UnitKeyHash> obtained_;
  std::unordered_map<UnitKey, SliceFrame, UnitKeyHash> stash_;
  std::unordered_map<AccKey, Partial, AccKeyHash> acc_;
  std::vector<std::uint32_t> read_schedule_;

  std::map<NodeId, std::unique_ptr<FrameSource>> sources_;
  std::vector<std::unique_ptr<Sender>> senders_;
  std::map<NodeId, std::size_t> sender_index_;
  std::unique_ptr<BlockHandle> local_;
  std::unique_ptr<BoundedQueue<std::pair<std::uint32_t, Bytes>>> read_queue_;
  std::optional<std::pair<std::uint32_t, Bytes>> local_slice_;
  std::thread read_thread_;

  std::optional<NodeId> current_peer_;
  std::uint32_t current_slice_ = 0;
  std::atomic<std::uint64_t> bytes_read_{0};
  std::atomic<std::uint64_t> frames_sent_{0};
  std::atomic<bool> failed_{false};
  std::mutex fail_mu_;
  std::optional<HopFailure> failure_;
  NodeReport report_;
};

}  // namespace

NodeReport run_node(const RepairPlan& plan, NodeId node, Transport& transport,
                    BlockReader* reader, const ExecOptions& options) {
  NodeRunner runner(plan, node, transport, reader, options);
  return runner.run();
}

ExecResult execute(const RepairPlan& plan, Transport& transport, BlockReader& reader,
                   const ExecOptions& options) {
  const auto participants = plan.participants();
  std::vector<std::optional<NodeReport>> reports(participants.size());
  std::vector<std::optional<HopFailure>> failures(participants.size());
  const auto start = Clock::now();

  std::vector<std::thread> threads;
  threads.reserve(participants.size());
  for (std::size_t p = 0; p < participants.size(); ++p) {
    threads.emplace_back([&, p] {
      try {
        reports[p] = run_node(plan, participants[p], transport, &reader, options);
      } catch (const SessionAborted& e) {
        failures[p] = e.failure();
      } catch (const std::exception& e) {
        failures[p] = HopFailure{participants[p], 0, false, 0, ErrorCode::io, e.what()};
      }
    });
  }
  for (auto& t : threads) t.join();

  // Nodes that only saw the abort of someone else are not the root cause.
  std::optional<HopFailure> root;
  for (const auto& f : failures) {
    if (f && (!root || (root->code == ErrorCode::session_aborted &&
                        f->code != ErrorCode::session_aborted))) {
      root = f;
    }
  }
  if (root) throw SessionAborted(*root);

  ExecResult result;
  result.elapsed = Clock::now() - start;
  for (auto& report : reports) {
    for (auto& [j, block] : report->blocks) result.blocks[j] = std::move(block);
    if (plan.helper_position(report->node) >= 0) result.bytes_read[report->node] = report->bytes_read;
  }
  return result;
}

}  // namespace ecpipe::pipeline
