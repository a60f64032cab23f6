#include "ecpipe/helper.hpp"

#include <iostream>

#include "ecpipe/checksum.hpp"
#include "ecpipe/coordinator.hpp"
#include "ecpipe/error.hpp"

namespace ecpipe::helper {

using namespace std::chrono_literals;
using proto::json;
using proto::Message;
using proto::MsgType;

json to_json(const Dispatch& d) {
  json directory = json::object();
  for (const auto& [node, ep] : d.directory) directory[std::to_string(node)] = ep.str();
  json j{{"scheme", pipeline::to_string(d.scheme)},
         {"plan", proto::to_json(d.inputs)},
         {"directory", directory},
         {"window", d.window},
         {"timeout_ms", d.timeout.count()}};
  if (d.coordinator) j["coordinator"] = d.coordinator->str();
  return j;
}

Dispatch dispatch_from_json(const json& j) {
  try {
    Dispatch d;
    d.scheme = pipeline::parse_scheme(j.at("scheme").get<std::string>());
    d.inputs = proto::plan_inputs_from_json(j.at("plan"));
    for (const auto& [node, ep] : j.at("directory").items()) {
      d.directory[static_cast<NodeId>(std::stoul(node))] = net::Endpoint::parse(ep.get<std::string>());
    }
    d.window = j.value("window", d.window);
    d.timeout = std::chrono::milliseconds(j.value("timeout_ms", d.timeout.count()));
    if (j.contains("coordinator")) d.coordinator = net::Endpoint::parse(j.at("coordinator").get<std::string>());
    return d;
  } catch (const json::exception& e) {
    raise(ErrorCode::protocol, std::string("bad plan dispatch: ") + e.what());
  }
}

HelperServer::HelperServer(NodeId id, const net::Endpoint& listen, std::filesystem::path root,
                           HelperOptions options)
    : id_(id),
      store_(std::move(root)),
      options_(std::move(options)),
      server_(listen, [this](Message& req, net::Socket& sock) { return handle(req, sock); }) {}

HelperServer::~HelperServer() { stop(); }

void HelperServer::start() { server_.start(); }

void HelperServer::stop() {
  std::vector<std::pair<SessionId, std::shared_ptr<TcpTransport>>> running;
  {
    std::lock_guard lock(mu_);
    if (stopping_) return;
    stopping_ = true;
    running.assign(active_.begin(), active_.end());
  }
  cv_.notify_all();
  for (auto& [session, transport] : running) {
    transport->abort(session, "node " + std::to_string(id_) + " is shutting down");
  }
  server_.stop();
}

std::size_t HelperServer::active_sessions() const {
  std::lock_guard lock(mu_);
  return active_.size();
}

std::size_t HelperServer::finished_sessions() const {
  std::lock_guard lock(mu_);
  return finished_.size();
}

std::optional<Message> HelperServer::handle(Message& req, net::Socket& sock) {
  const json& meta = req.meta;
  switch (req.type) {
    case MsgType::ping:
      return proto::ok_reply({{"node", id_}, {"active", active_sessions()}});
    case MsgType::store_block: {
      const BlockId block = meta.at("block").get<BlockId>();
      store_.store(block, req.body);
      return proto::ok_reply({{"block", block}, {"hash", content_hash(req.body)}});
    }
    case MsgType::read_block: {
      const BlockId block = meta.at("block").get<BlockId>();
      Bytes data = store_.read(block);
      return proto::ok_reply({{"block", block}, {"size", data.size()}}, std::move(data));
    }
    case MsgType::delete_block: {
      const BlockId block = meta.at("block").get<BlockId>();
      store_.remove(block);
      return proto::ok_reply({{"block", block}});
    }
    case MsgType::plan_dispatch:
      return start_session(meta);
    case MsgType::session_status: {
      const SessionId session = SessionId::from_hex(meta.at("session").get<std::string>());
      abort_session(session, meta.value("abort", std::string("cancelled by the coordinator")));
      return proto::ok_reply();
    }
    case MsgType::stream_open:
      accept_stream(meta, sock);
      return std::nullopt;
    default:
      raise(ErrorCode::protocol, "node " + std::to_string(id_) + " does not serve " +
                                     std::string(proto::to_string(req.type)));
  }
}

void HelperServer::accept_stream(const json& meta, net::Socket& sock) {
  const SessionId session = SessionId::from_hex(meta.at("session").get<std::string>());
  const NodeId src = meta.at("src").get<NodeId>();
  const NodeId dst = meta.at("dst").get<NodeId>();
  if (dst != id_) return;  // misrouted; closing tells the sender
  {
    // The upstream node may hear about the session first.
    std::unique_lock lock(mu_);
    const bool known = cv_.wait_for(lock, options_.dispatch_grace, [&] {
      return stopping_ || active_.count(session) || finished_.count(session);
    });
    if (!known || stopping_ || !active_.count(session)) return;
  }
  registry_->offer(session, src, dst, std::move(sock));
}

Message HelperServer::start_session(const json& meta) {
  Dispatch d = dispatch_from_json(meta);
  pipeline::RepairPlan plan = pipeline::RepairPlan::build(d.scheme, d.inputs);
  const auto participants = plan.participants();
  if (std::find(participants.begin(), participants.end(), id_) == participants.end()) {
    raise(ErrorCode::invalid_argument, "node " + std::to_string(id_) + " has no part in session " +
                                           plan.session().hex());
  }
  auto transport = std::make_shared<TcpTransport>(d.directory, registry_, options_.shaper);
  {
    std::lock_guard lock(mu_);
    if (stopping_) raise(ErrorCode::transport, "node " + std::to_string(id_) + " is shutting down");
    if (active_.count(plan.session()) || finished_.count(plan.session())) {
      raise(ErrorCode::duplicate, "session " + plan.session().hex() + " was already dispatched");
    }
    active_[plan.session()] = transport;
  }
  cv_.notify_all();
  server_.spawn([this, d = std::move(d), plan = std::move(plan), transport]() mutable {
    run_session(std::move(d), std::move(plan), std::move(transport));
  });
  return proto::ok_reply({{"node", id_}});
}

void HelperServer::run_session(Dispatch d, pipeline::RepairPlan plan,
                               std::shared_ptr<TcpTransport> transport) {
  coord::HopReport report;
  report.session = plan.session();
  report.node = id_;
  auto send_report = [&] {
    if (!d.coordinator) return;
    try {
      proto::call(*d.coordinator, Message{MsgType::session_status, coord::to_json(report), {}}, 10s);
    } catch (const std::exception& e) {
      std::cerr << "ecpipe: node " << id_ << " could not report session " << report.session.hex()
                << ": " << e.what() << '\n';
    }
  };

  report.kind = coord::HopReport::Kind::running;
  send_report();
  try {
    pipeline::ExecOptions opts;
    opts.window = d.window;
    opts.timeout = d.timeout;
    pipeline::NodeReport result = pipeline::run_node(plan, id_, *transport, &store_, opts);
    for (auto& [target, data] : result.blocks) {
      const BlockId block = plan.inputs().target_blocks[target];
      if (store_.contains(block)) store_.remove(block);
      store_.store(block, data);
      report.hashes[block] = content_hash(data);
    }
    report.bytes_read = result.bytes_read;
    report.kind = coord::HopReport::Kind::done;
  } catch (const pipeline::SessionAborted& e) {
    report.kind = coord::HopReport::Kind::failed;
    report.failure = e.failure();
  } catch (const Error& e) {
    transport->abort(plan.session(), e.what());
    report.kind = coord::HopReport::Kind::failed;
    report.failure = pipeline::HopFailure{id_, 0, false, 0, e.code(), e.what()};
  }
  {
    std::lock_guard lock(mu_);
    active_.erase(plan.session());
    finished_.insert(plan.session());
  }
  cv_.notify_all();
  send_report();
}

void HelperServer::abort_session(const SessionId& session, const std::string& reason) {
  std::shared_ptr<TcpTransport> transport;
  {
    std::lock_guard lock(mu_);
    auto it = active_.find(session);
    if (it != active_.end()) {
      transport = it->second;
    } else {
      finished_.insert(session);  // refuse the session if it shows up later
    }
  }
  cv_.notify_all();
  if (transport) {
    transport->abort(session, reason);
  } else {
    registry_->abort(session, reason);
  }
}

}  // namespace ecpipe::helper
