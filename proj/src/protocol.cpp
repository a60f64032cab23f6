#include "ecpipe/protocol.hpp"

#include "ecpipe/error.hpp"
#include "ecpipe/frame.hpp"

namespace ecpipe::proto {

std::string_view to_string(MsgType type) {
  switch (type) {
    case MsgType::reply: return "REPLY";
    case MsgType::register_stripe: return "REGISTER_STRIPE";
    case MsgType::repair_request: return "REPAIR_REQUEST";
    case MsgType::plan_dispatch: return "PLAN_DISPATCH";
    case MsgType::session_status: return "SESSION_STATUS";
    case MsgType::probe_report: return "PROBE_REPORT";
    case MsgType::stream_open: return "STREAM_OPEN";
    case MsgType::store_block: return "STORE_BLOCK";
    case MsgType::read_block: return "READ_BLOCK";
    case MsgType::delete_block: return "DELETE_BLOCK";
    case MsgType::fail: return "FAIL";
    case MsgType::locate: return "LOCATE";
    case MsgType::wait_session: return "WAIT_SESSION";
    case MsgType::list_stripes: return "LIST_STRIPES";
    case MsgType::ping: return "PING";
  }
  return "UNKNOWN";
}

Bytes encode(const Message& msg) {
  const std::string meta = msg.meta.dump();
  const std::size_t length = 1 + 1 + 4 + meta.size() + msg.body.size();
  if (length > kMaxMessage) raise(ErrorCode::protocol, "message too large");
  Bytes out;
  out.reserve(4 + length);
  put_u32(out, static_cast<std::uint32_t>(length));
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(msg.type));
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  out.insert(out.end(), msg.body.begin(), msg.body.end());
  return out;
}

Message decode(std::span<const std::uint8_t> wire) {
  if (wire.size() < 6) raise(ErrorCode::protocol, "truncated control message");
  if (wire[0] != kVersion) {
    raise(ErrorCode::protocol, "protocol version " + std::to_string(wire[0]) + " (expected " +
                                   std::to_string(kVersion) + ")");
  }
  Message msg;
  msg.type = static_cast<MsgType>(wire[1]);
  const std::uint32_t meta_len = get_u32(wire.data() + 2);
  if (6 + static_cast<std::size_t>(meta_len) > wire.size()) {
    raise(ErrorCode::protocol, "control message metadata overruns the message");
  }
  auto meta = wire.subspan(6, meta_len);
  try {
    msg.meta = json::parse(meta.begin(), meta.end());
  } catch (const json::exception& e) {
    raise(ErrorCode::protocol, std::string("bad control metadata: ") + e.what());
  }
  msg.body.assign(wire.begin() + 6 + meta_len, wire.end());
  return msg;
}

void write_message(net::Socket& sock, const Message& msg) { sock.send_all(encode(msg)); }

std::optional<Message> read_message(net::Socket& sock, std::chrono::milliseconds timeout) {
  std::uint8_t prefix[4];
  if (!sock.recv_exact(prefix, timeout)) return std::nullopt;
  const std::uint32_t length = get_u32(prefix);
  if (length > kMaxMessage) raise(ErrorCode::protocol, "control message too large");
  Bytes rest(length);
  if (!sock.recv_exact(rest, timeout)) raise(ErrorCode::protocol, "truncated control message");
  return decode(rest);
}

Message ok_reply(json meta, Bytes body) {
  meta["ok"] = true;
  return Message{MsgType::reply, std::move(meta), std::move(body)};
}

Message error_reply(ErrorCode code, const std::string& what) {
  return Message{MsgType::reply, json{{"ok", false}, {"code", ecpipe::to_string(code)}, {"error", what}}, {}};
}

ErrorCode parse_error_code(std::string_view name) {
  for (int c = 0; c <= static_cast<int>(ErrorCode::session_aborted); ++c) {
    if (name == ecpipe::to_string(static_cast<ErrorCode>(c))) return static_cast<ErrorCode>(c);
  }
  return ErrorCode::protocol;
}

Message call(const net::Endpoint& to, const Message& request, std::chrono::milliseconds timeout) {
  auto sock = net::Socket::connect(to, timeout);
  write_message(sock, request);
  auto reply = read_message(sock, timeout);
  if (!reply) raise(ErrorCode::transport, to.str() + " closed the connection without replying");
  if (reply->type != MsgType::reply) raise(ErrorCode::protocol, "expected a reply message");
  if (!reply->meta.value("ok", false)) {
    raise(parse_error_code(reply->meta.value("code", "protocol")),
          reply->meta.value("error", std::string("request failed")));
  }
  return std::move(*reply);
}

// ---- JSON encodings ----

json to_json(const StripeMetadata& s) {
  json j{{"id", s.id},         {"scheme", s.scheme},
         {"n", s.n},           {"k", s.k},
         {"block_size", s.block_size}, {"data_length", s.data_length},
         {"blocks", s.blocks}, {"nodes", s.nodes}};
  if (!s.hashes.empty()) j["hashes"] = s.hashes;
  return j;
}

StripeMetadata stripe_from_json(const json& j) {
  try {
    StripeMetadata s;
    s.id = j.at("id").get<StripeId>();
    s.scheme = j.at("scheme").get<std::string>();
    auto [n, k] = parse_scheme_name(s.scheme);
    s.n = j.value("n", n);
    s.k = j.value("k", k);
    s.block_size = j.value("block_size", std::size_t{0});
    s.data_length = j.value("data_length", std::uint64_t{0});
    s.blocks = j.at("blocks").get<std::vector<BlockId>>();
    s.nodes = j.at("nodes").get<std::vector<NodeId>>();
    if (j.contains("hashes")) s.hashes = j.at("hashes").get<std::vector<std::string>>();
    return s;
  } catch (const json::exception& e) {
    raise(ErrorCode::protocol, std::string("bad stripe record: ") + e.what());
  }
}

json to_json(const pipeline::PlanInputs& in) {
  json helpers = json::array();
  for (const auto& h : in.helpers) {
    helpers.push_back({{"node", h.node}, {"index", h.index}, {"block", h.block}});
  }
  json coefficients = json::array();
  for (int r = 0; r < in.coefficients.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < in.coefficients.cols(); ++c) row.push_back(in.coefficients.at(r, c));
    coefficients.push_back(row);
  }
  return json{{"session", in.session.hex()},
              {"stripe", in.stripe},
              {"targets", in.targets},
              {"target_blocks", in.target_blocks},
              {"helpers", helpers},
              {"requestors", in.requestors},
              {"coefficients", coefficients},
              {"block_size", in.spec.block_size},
              {"slice_size", in.spec.slice_size}};
}

pipeline::PlanInputs plan_inputs_from_json(const json& j) {
  try {
    pipeline::PlanInputs in;
    in.session = SessionId::from_hex(j.at("session").get<std::string>());
    in.stripe = j.at("stripe").get<StripeId>();
    in.targets = j.at("targets").get<std::vector<int>>();
    in.target_blocks = j.at("target_blocks").get<std::vector<BlockId>>();
    for (const auto& h : j.at("helpers")) {
      in.helpers.push_back(pipeline::HelperRef{h.at("node").get<NodeId>(), h.at("index").get<int>(),
                                               h.at("block").get<BlockId>()});
    }
    in.requestors = j.at("requestors").get<std::vector<NodeId>>();
    const auto& rows = j.at("coefficients");
    const int r = static_cast<int>(rows.size());
    const int c = r > 0 ? static_cast<int>(rows[0].size()) : 0;
    in.coefficients = codec::Matrix(r, c);
    for (int i = 0; i < r; ++i) {
      if (static_cast<int>(rows[i].size()) != c) raise(ErrorCode::protocol, "ragged coefficient matrix");
      for (int m = 0; m < c; ++m) in.coefficients.at(i, m) = rows[i][m].get<std::uint8_t>();
    }
    in.spec = SliceSpec::make(j.at("block_size").get<std::size_t>(), j.at("slice_size").get<std::size_t>());
    return in;
  } catch (const json::exception& e) {
    raise(ErrorCode::protocol, std::string("bad plan record: ") + e.what());
  }
}

json to_json(const pipeline::HopFailure& f) {
  json j{{"node", f.node}, {"slice", f.slice}, {"code", ecpipe::to_string(f.code)}, {"reason", f.reason}};
  if (f.has_peer) j["peer"] = f.peer;
  return j;
}

pipeline::HopFailure hop_failure_from_json(const json& j) {
  pipeline::HopFailure f;
  f.node = j.value("node", NodeId{0});
  f.slice = j.value("slice", std::uint32_t{0});
  f.code = parse_error_code(j.value("code", std::string("protocol")));
  f.reason = j.value("reason", std::string());
  if (j.contains("peer")) {
    f.has_peer = true;
    f.peer = j.at("peer").get<NodeId>();
  }
  return f;
}

}  // namespace ecpipe::proto
