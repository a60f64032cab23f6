#include "ecpipe/coordinator.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include "ecpipe/error.hpp"
#include "ecpipe/protocol.hpp"

namespace ecpipe::coord {

using nlohmann::json;
using pipeline::HopFailure;
using pipeline::Scheme;

std::string_view to_string(SessionState state) {
  switch (state) {
    case SessionState::dispatched: return "dispatched";
    case SessionState::running: return "running";
    case SessionState::done: return "done";
    case SessionState::failed: return "failed";
  }
  return "unknown";
}

bool terminal(SessionState state) {
  return state == SessionState::done || state == SessionState::failed;
}

double RepairSession::seconds() const {
  if (!terminal(state)) return 0;
  return std::chrono::duration<double>(finished - started).count();
}

json to_json(const RepairSession& s) {
  json hashes = json::object();
  for (const auto& [block, h] : s.hashes) hashes[std::to_string(block)] = h;
  json j{{"session", s.id.hex()},
         {"scheme", pipeline::to_string(s.scheme)},
         {"state", to_string(s.state)},
         {"plan", proto::to_json(s.inputs)},
         {"seconds", s.seconds()},
         {"hashes", hashes},
         {"bytes_read", s.bytes_read}};
  if (s.failure) j["failure"] = proto::to_json(*s.failure);
  return j;
}

json to_json(const HopReport& r) {
  json hashes = json::object();
  for (const auto& [block, h] : r.hashes) hashes[std::to_string(block)] = h;
  static constexpr const char* kinds[] = {"running", "done", "failed"};
  json j{{"session", r.session.hex()},
         {"node", r.node},
         {"state", kinds[static_cast<int>(r.kind)]},
         {"hashes", hashes},
         {"bytes_read", r.bytes_read}};
  if (r.failure) j["failure"] = proto::to_json(*r.failure);
  return j;
}

HopReport hop_report_from_json(const json& j) {
  try {
    HopReport r;
    r.session = SessionId::from_hex(j.at("session").get<std::string>());
    r.node = j.at("node").get<NodeId>();
    const std::string state = j.at("state").get<std::string>();
    if (state == "running") {
      r.kind = HopReport::Kind::running;
    } else if (state == "done") {
      r.kind = HopReport::Kind::done;
    } else if (state == "failed") {
      r.kind = HopReport::Kind::failed;
    } else {
      raise(ErrorCode::protocol, "unknown hop state " + state);
    }
    const json hashes = j.value("hashes", json::object());
    for (const auto& [block, h] : hashes.items()) {
      r.hashes[std::stoull(block)] = h.get<std::string>();
    }
    r.bytes_read = j.value("bytes_read", std::uint64_t{0});
    if (j.contains("failure")) r.failure = proto::hop_failure_from_json(j.at("failure"));
    return r;
  } catch (const json::exception& e) {
    raise(ErrorCode::protocol, std::string("bad hop report: ") + e.what());
  }
}

Coordinator::Coordinator(ClusterConfig config, std::shared_ptr<Dispatcher> dispatcher,
                         CoordinatorOptions options)
    : config_(std::move(config)),
      dispatcher_(std::move(dispatcher)),
      options_(options),
      metadata_(config_.journal,
                options.rack_limit ? std::optional(config_.topology()) : std::nullopt),
      topology_(config_.topology()),
      links_(config_.links) {
  watcher_ = std::thread([this] { watch(); });
}

Coordinator::~Coordinator() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  watcher_.join();
}

StripeId Coordinator::register_stripe(const StripeMetadata& stripe) {
  return metadata_.register_stripe(stripe);
}

Location Coordinator::locate(BlockId block) const { return metadata_.locate(block); }

std::vector<BlockId> Coordinator::fail_node(NodeId node) {
  std::vector<BlockId> blocks = metadata_.blocks_on(node);
  const bool configured = std::any_of(config_.nodes.begin(), config_.nodes.end(),
                                      [&](const NodeConfig& n) { return n.id == node; });
  if (!configured && blocks.empty()) raise(ErrorCode::not_found, "unknown node " + std::to_string(node));
  metadata_.mark_dead(node);
  if (!blocks.empty()) metadata_.mark_missing(blocks);
  return blocks;
}

void Coordinator::fail_blocks(const std::vector<BlockId>& blocks) { metadata_.mark_missing(blocks); }

std::pair<Scheme, pipeline::PlanInputs> Coordinator::plan_request(const RepairRequest& request) {
  if (request.blocks.empty()) raise(ErrorCode::invalid_argument, "repair request names no blocks");
  std::set<BlockId> unique(request.blocks.begin(), request.blocks.end());
  if (unique.size() != request.blocks.size()) raise(ErrorCode::invalid_argument, "block named twice");

  StripeId stripe_id = 0;
  std::vector<int> targets;
  for (BlockId b : request.blocks) {
    const Location loc = metadata_.locate(b);
    if (!targets.empty() && loc.stripe != stripe_id) {
      raise(ErrorCode::invalid_argument, "blocks " + std::to_string(request.blocks[0]) + " and " +
                                             std::to_string(b) + " belong to different stripes");
    }
    stripe_id = loc.stripe;
    targets.push_back(loc.index);
  }
  const StripeMetadata stripe = metadata_.stripe(stripe_id);
  const int f = static_cast<int>(targets.size());
  if (f > stripe.n - stripe.k) {
    raise(ErrorCode::unrecoverable, std::to_string(f) + " failed blocks exceed the tolerance n-k=" +
                                        std::to_string(stripe.n - stripe.k));
  }
  std::set<int> unavailable(targets.begin(), targets.end());
  for (int i : metadata_.missing(stripe_id)) unavailable.insert(i);
  if (static_cast<int>(unavailable.size()) > stripe.n - stripe.k) {
    raise(ErrorCode::unrecoverable, "stripe " + std::to_string(stripe_id) + " has lost " +
                                        std::to_string(unavailable.size()) + " blocks, more than n-k=" +
                                        std::to_string(stripe.n - stripe.k));
  }

  if (static_cast<int>(request.requestors.size()) != f) {
    raise(ErrorCode::invalid_argument, "need one requestor per failed block");
  }
  std::set<NodeId> requestors(request.requestors.begin(), request.requestors.end());
  if (static_cast<int>(requestors.size()) != f) {
    raise(ErrorCode::invalid_argument, "requestors must be distinct");
  }
  for (int i = 0; i < stripe.n; ++i) {
    if (requestors.count(stripe.nodes[i]) && !std::count(targets.begin(), targets.end(), i)) {
      raise(ErrorCode::invalid_argument, "requestor " + std::to_string(stripe.nodes[i]) +
                                             " already holds a block of stripe " + std::to_string(stripe_id));
    }
  }

  std::vector<NodeId> available;
  for (int i = 0; i < stripe.n; ++i) {
    if (unavailable.count(i)) continue;
    const NodeId node = stripe.nodes[i];
    if (metadata_.dead(node) || requestors.count(node)) continue;
    available.push_back(node);
  }
  if (static_cast<int>(available.size()) < stripe.k) {
    raise(ErrorCode::insufficient_helpers, "stripe " + std::to_string(stripe_id) + " has " +
                                               std::to_string(available.size()) + " live helpers, need k=" +
                                               std::to_string(stripe.k));
  }

  Scheme scheme = request.scheme;
  if (f > 1 && (scheme == Scheme::rp_basic || scheme == Scheme::rp_cyclic || scheme == Scheme::ppr)) {
    scheme = Scheme::rp_multi;
  }

  pathsel::LinkWeightMatrix weights = this->weights();
  pathsel::RecoveryTask task{stripe_id, targets[0], request.requestors[0], available};
  if (f > 1 && request.aggregate_requestors && request.path == pathsel::PathMode::weighted) {
    constexpr NodeId kAggregate = std::numeric_limits<NodeId>::max();
    weights = pathsel::aggregate_requestors(weights, request.requestors, available, kAggregate);
    task.requestor = kAggregate;
  }
  pathsel::SelectionPolicy policy{request.path, request.greedy, &topology_, &weights};
  const std::vector<NodeId> path = pathsel::choose_path(task, stripe.k, timestamps_, policy);

  const codec::CodingScheme* code = nullptr;
  {
    std::lock_guard lock(codes_mu_);
    auto it = codes_.find(stripe.scheme);
    if (it == codes_.end()) it = codes_.emplace(stripe.scheme, codec::CodingScheme::from_name(stripe.scheme)).first;
    code = &it->second;
  }
  const std::size_t block_size = stripe.block_size ? stripe.block_size : config_.block_size;
  const SliceSpec spec = SliceSpec::make(block_size, std::min(config_.slice_size, block_size));
  return {scheme, pipeline::make_plan_inputs(*code, stripe, targets, path, request.requestors, spec)};
}

RepairSession Coordinator::handle_repair_request(const RepairRequest& request) {
  auto [scheme, inputs] = plan_request(request);
  const pipeline::RepairPlan plan = pipeline::RepairPlan::build(scheme, inputs);

  Tracked t;
  t.session.id = inputs.session;
  t.session.scheme = scheme;
  t.session.inputs = std::move(inputs);
  t.session.state = SessionState::dispatched;
  t.session.started = std::chrono::system_clock::now();
  t.participants = plan.participants();
  const RepairSession snapshot = t.session;
  const std::vector<NodeId> participants = t.participants;
  {
    std::lock_guard lock(mu_);
    sessions_.emplace(snapshot.id, std::move(t));
  }

  try {
    if (dispatcher_) dispatcher_->dispatch(snapshot, participants);
  } catch (const Error& e) {
    HopFailure failure;
    failure.code = e.code();
    failure.reason = std::string("dispatch failed: ") + e.what();
    {
      std::lock_guard lock(mu_);
      Tracked& tracked = sessions_.at(snapshot.id);
      if (!terminal(tracked.session.state)) finish(tracked, SessionState::failed, failure);
    }
    if (dispatcher_) dispatcher_->cancel(snapshot, participants, failure.reason);
    throw;
  }
  return session(snapshot.id);
}

void Coordinator::finish(Tracked& t, SessionState state, std::optional<HopFailure> failure) {
  t.session.state = state;
  t.session.finished = std::chrono::system_clock::now();
  t.session.failure = std::move(failure);
  if (state == SessionState::failed) t.session.hashes.clear();
  cv_.notify_all();
}

void Coordinator::report(const HopReport& r) {
  std::vector<NodeId> cancel_to;
  RepairSession snapshot;
  {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(r.session);
    if (it == sessions_.end()) raise(ErrorCode::not_found, "unknown session " + r.session.hex());
    Tracked& t = it->second;
    if (std::find(t.participants.begin(), t.participants.end(), r.node) == t.participants.end()) {
      raise(ErrorCode::invalid_argument, "node " + std::to_string(r.node) + " is not part of session " +
                                             r.session.hex());
    }
    RepairSession& s = t.session;
    if (terminal(s.state)) {
      // A later report can still name the root cause of a failure that was
      // first seen as an abort elsewhere.
      if (s.state == SessionState::failed && r.kind == HopReport::Kind::failed && r.failure &&
          r.failure->code != ErrorCode::session_aborted && s.failure &&
          s.failure->code == ErrorCode::session_aborted) {
        s.failure = r.failure;
      }
      return;
    }
    if (s.state == SessionState::dispatched) s.state = SessionState::running;
    switch (r.kind) {
      case HopReport::Kind::running:
        break;
      case HopReport::Kind::failed: {
        HopFailure failure = r.failure.value_or(HopFailure{r.node, 0, false, 0, ErrorCode::session_aborted,
                                                           "node reported failure"});
        finish(t, SessionState::failed, failure);
        cancel_to = t.participants;
        snapshot = s;
        break;
      }
      case HopReport::Kind::done: {
        t.acknowledged.insert(r.node);
        s.bytes_read += r.bytes_read;
        for (const auto& [block, h] : r.hashes) s.hashes[block] = h;
        if (t.acknowledged.size() < t.participants.size()) break;

        std::optional<HopFailure> mismatch;
        const StripeMetadata stripe = metadata_.stripe(s.inputs.stripe);
        for (std::size_t j = 0; j < s.inputs.target_blocks.size(); ++j) {
          const BlockId block = s.inputs.target_blocks[j];
          auto h = s.hashes.find(block);
          const std::string expected = stripe.hashes.empty() ? "" : stripe.hashes[s.inputs.targets[j]];
          if (h == s.hashes.end()) {
            mismatch = HopFailure{s.inputs.requestors[j], 0, false, 0, ErrorCode::protocol,
                                  "requestor did not report block " + std::to_string(block)};
          } else if (!expected.empty() && h->second != expected) {
            mismatch = HopFailure{s.inputs.requestors[j], 0, false, 0, ErrorCode::corrupt_frame,
                                  "rebuilt block " + std::to_string(block) + " hashes to " + h->second +
                                      ", expected " + expected};
          }
        }
        if (mismatch) {
          finish(t, SessionState::failed, mismatch);
          break;
        }
        try {
          for (std::size_t j = 0; j < s.inputs.target_blocks.size(); ++j) {
            const BlockId block = s.inputs.target_blocks[j];
            metadata_.relocate(block, s.inputs.requestors[j], s.hashes.at(block));
          }
        } catch (const Error& e) {
          finish(t, SessionState::failed, HopFailure{r.node, 0, false, 0, e.code(), e.what()});
          break;
        }
        finish(t, SessionState::done, std::nullopt);
        break;
      }
    }
  }
  if (!cancel_to.empty() && dispatcher_) {
    dispatcher_->cancel(snapshot, cancel_to, snapshot.failure->describe());
  }
}

RepairSession Coordinator::session(const SessionId& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) raise(ErrorCode::not_found, "unknown session " + id.hex());
  return it->second.session;
}

RepairSession Coordinator::wait(const SessionId& id, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) raise(ErrorCode::not_found, "unknown session " + id.hex());
  cv_.wait_for(lock, timeout, [&] { return terminal(it->second.session.state); });
  return it->second.session;
}

std::vector<RepairSession> Coordinator::sessions() const {
  std::lock_guard lock(mu_);
  std::vector<RepairSession> out;
  for (const auto& [id, t] : sessions_) out.push_back(t.session);
  return out;
}

void Coordinator::update_links(const std::vector<LinkOverride>& links) {
  std::lock_guard lock(links_mu_);
  for (const auto& o : links) {
    if (!(o.mbps > 0)) raise(ErrorCode::invalid_argument, "link bandwidth must be positive");
    auto it = std::find_if(links_.begin(), links_.end(),
                           [&](const LinkOverride& l) { return l.src == o.src && l.dst == o.dst; });
    if (it == links_.end()) {
      links_.push_back(o);
    } else {
      it->mbps = o.mbps;
    }
  }
}

pathsel::LinkWeightMatrix Coordinator::weights() const {
  ClusterConfig c = config_;
  {
    std::lock_guard lock(links_mu_);
    c.links = links_;
  }
  return c.weights();
}

void Coordinator::expire_sessions(std::chrono::system_clock::time_point now) {
  std::vector<std::pair<RepairSession, std::vector<NodeId>>> expired;
  {
    std::lock_guard lock(mu_);
    for (auto& [id, t] : sessions_) {
      if (terminal(t.session.state) || now - t.session.started < options_.session_timeout) continue;
      // Participants are in path order; the first one that has not finished
      // is where the chain stalled.
      HopFailure failure;
      failure.code = ErrorCode::timeout;
      failure.reason = "no completion within " + std::to_string(options_.session_timeout.count()) + " ms";
      for (std::size_t i = 0; i < t.participants.size(); ++i) {
        if (t.acknowledged.count(t.participants[i])) continue;
        failure.node = t.participants[i];
        if (i + 1 < t.participants.size()) {
          failure.peer = t.participants[i + 1];
          failure.has_peer = true;
        }
        break;
      }
      finish(t, SessionState::failed, failure);
      expired.emplace_back(t.session, t.participants);
    }
  }
  for (const auto& [s, participants] : expired) {
    if (dispatcher_) dispatcher_->cancel(s, participants, s.failure->describe());
  }
}

void Coordinator::watch() {
  std::unique_lock lock(mu_);
  while (!stopping_) {
    cv_.wait_for(lock, options_.watch_interval);
    if (stopping_) break;
    lock.unlock();
    expire_sessions(std::chrono::system_clock::now());
    lock.lock();
  }
}

}  // namespace ecpipe::coord
