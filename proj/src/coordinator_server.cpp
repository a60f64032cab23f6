#include "ecpipe/coordinator_server.hpp"

#include <future>

#include "ecpipe/error.hpp"
#include "ecpipe/helper.hpp"

namespace ecpipe::coord {

using namespace std::chrono_literals;
using proto::json;
using proto::Message;
using proto::MsgType;

TcpDispatcher::TcpDispatcher(std::map<NodeId, net::Endpoint> directory, std::size_t window,
                             std::chrono::milliseconds hop_timeout,
                             std::chrono::milliseconds dispatch_timeout)
    : directory_(std::move(directory)),
      window_(window),
      hop_timeout_(hop_timeout),
      dispatch_timeout_(dispatch_timeout) {}

const net::Endpoint& TcpDispatcher::address(NodeId node) const {
  auto it = directory_.find(node);
  if (it == directory_.end()) raise(ErrorCode::not_found, "no address for node " + std::to_string(node));
  return it->second;
}

void TcpDispatcher::dispatch(const RepairSession& session, const std::vector<NodeId>& participants) {
  helper::Dispatch d;
  d.scheme = session.scheme;
  d.inputs = session.inputs;
  d.window = window_;
  d.timeout = hop_timeout_;
  d.coordinator = coordinator_;
  for (NodeId node : participants) d.directory[node] = address(node);
  const Message msg{MsgType::plan_dispatch, helper::to_json(d), {}};

  std::vector<std::future<void>> sent;
  for (NodeId node : participants) {
    sent.push_back(std::async(std::launch::async, [&, node] {
      try {
        proto::call(address(node), msg, dispatch_timeout_);
      } catch (const Error& e) {
        const ErrorCode code = e.code() == ErrorCode::transport ? ErrorCode::timeout : e.code();
        raise(code, "node " + std::to_string(node) + " did not accept the plan: " + e.what());
      }
    }));
  }
  std::optional<Error> first;
  for (auto& f : sent) {
    try {
      f.get();
    } catch (const Error& e) {
      if (!first) first = e;
    }
  }
  if (first) throw *first;
}

void TcpDispatcher::cancel(const RepairSession& session, const std::vector<NodeId>& participants,
                           const std::string& reason) {
  const Message msg{MsgType::session_status, {{"session", session.id.hex()}, {"abort", reason}}, {}};
  std::vector<std::future<void>> sent;
  for (NodeId node : participants) {
    auto it = directory_.find(node);
    if (it == directory_.end()) continue;
    sent.push_back(std::async(std::launch::async, [ep = it->second, &msg] {
      try {
        proto::call(ep, msg, 2s);
      } catch (const Error&) {
      }
    }));
  }
  for (auto& f : sent) f.get();
}

CoordinatorServer::CoordinatorServer(Coordinator& coordinator, const net::Endpoint& listen)
    : coordinator_(coordinator),
      server_(listen, [this](Message& req, net::Socket&) { return handle(req); }) {}

namespace {

json location_json(BlockId block, const Location& loc) {
  return json{{"block", block},     {"stripe", loc.stripe},  {"node", loc.node},
              {"index", loc.index}, {"missing", loc.missing}};
}

}  // namespace

std::optional<Message> CoordinatorServer::handle(Message& req) {
  const json& meta = req.meta;
  switch (req.type) {
    case MsgType::ping:
      return proto::ok_reply({{"stripes", coordinator_.metadata().stripe_count()}});
    case MsgType::register_stripe: {
      const StripeId id = coordinator_.register_stripe(proto::stripe_from_json(meta.at("stripe")));
      return proto::ok_reply({{"stripe", id}});
    }
    case MsgType::locate: {
      const BlockId block = meta.at("block").get<BlockId>();
      return proto::ok_reply(location_json(block, coordinator_.locate(block)));
    }
    case MsgType::list_stripes: {
      auto& md = coordinator_.metadata();
      if (meta.value("summary", false)) {
        return proto::ok_reply({{"next_stripe", md.next_stripe_id()}, {"count", md.stripe_count()}});
      }
      std::optional<NodeId> node;
      if (meta.contains("node")) node = meta.at("node").get<NodeId>();
      std::vector<StripeId> ids;
      if (meta.contains("stripe")) {
        ids.push_back(meta.at("stripe").get<StripeId>());
      } else {
        ids = md.stripe_ids();
      }
      json stripes = json::array();
      for (StripeId id : ids) {
        StripeMetadata s = md.stripe(id);
        if (node && std::find(s.nodes.begin(), s.nodes.end(), *node) == s.nodes.end()) continue;
        json j = proto::to_json(s);
        j["missing"] = md.missing(id);
        stripes.push_back(std::move(j));
      }
      return proto::ok_reply({{"next_stripe", md.next_stripe_id()}, {"stripes", stripes}});
    }
    case MsgType::fail: {
      std::vector<BlockId> blocks;
      if (meta.contains("node")) {
        blocks = coordinator_.fail_node(meta.at("node").get<NodeId>());
      } else {
        blocks = meta.at("blocks").get<std::vector<BlockId>>();
        coordinator_.fail_blocks(blocks);
      }
      json out = json::array();
      for (BlockId b : blocks) out.push_back(location_json(b, coordinator_.locate(b)));
      return proto::ok_reply({{"blocks", out}});
    }
    case MsgType::repair_request: {
      RepairRequest r;
      r.blocks = meta.at("blocks").get<std::vector<BlockId>>();
      r.requestors = meta.at("requestors").get<std::vector<NodeId>>();
      r.scheme = pipeline::parse_scheme(meta.value("scheme", std::string(pipeline::to_string(coordinator_.config().scheme))));
      r.path = pathsel::parse_path_mode(meta.value("path", std::string(pathsel::to_string(coordinator_.config().path))));
      r.greedy = meta.value("greedy", coordinator_.config().greedy);
      r.aggregate_requestors = meta.value("aggregate_requestors", false);
      return proto::ok_reply(to_json(coordinator_.handle_repair_request(r)));
    }
    case MsgType::wait_session: {
      const SessionId id = SessionId::from_hex(meta.at("session").get<std::string>());
      const auto timeout = std::chrono::milliseconds(meta.value("timeout_ms", 60000));
      return proto::ok_reply(to_json(coordinator_.wait(id, timeout)));
    }
    case MsgType::session_status:
      coordinator_.report(hop_report_from_json(meta));
      return proto::ok_reply();
    case MsgType::probe_report: {
      std::vector<LinkOverride> links;
      for (const auto& l : meta.at("links")) {
        links.push_back({l.at("src").get<NodeId>(), l.at("dst").get<NodeId>(), l.at("mbps").get<double>()});
      }
      coordinator_.update_links(links);
      return proto::ok_reply({{"links", links.size()}});
    }
    default:
      raise(ErrorCode::protocol, "the coordinator does not serve " + std::string(proto::to_string(req.type)));
  }
}

CoordinatorDaemon::CoordinatorDaemon(const ClusterConfig& config, std::optional<net::Endpoint> listen,
                                     CoordinatorOptions options) {
  if (!listen) listen = config.coordinator.value_or(net::Endpoint{"127.0.0.1", 0});
  dispatcher_ = std::make_shared<TcpDispatcher>(config.directory(), config.window, config.session_timeout);
  options.session_timeout = config.session_timeout;
  coordinator_ = std::make_unique<Coordinator>(config, dispatcher_, options);
  server_ = std::make_unique<CoordinatorServer>(*coordinator_, *listen);
  net::Endpoint report = server_->endpoint();
  if (config.coordinator && config.coordinator->port != 0) report = *config.coordinator;
  dispatcher_->set_report_address(report);
  server_->start();
}

CoordinatorDaemon::~CoordinatorDaemon() { stop(); }

void CoordinatorDaemon::stop() {
  if (server_) server_->stop();
}

}  // namespace ecpipe::coord
