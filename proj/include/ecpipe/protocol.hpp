#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "ecpipe/executor.hpp"
#include "ecpipe/net.hpp"
#include "ecpipe/plan.hpp"
#include "ecpipe/types.hpp"

namespace ecpipe::proto {

using json = nlohmann::json;

inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::uint32_t kMaxMessage = 1u << 30;

enum class MsgType : std::uint8_t {
  reply = 0,
  register_stripe = 1,
  repair_request = 2,
  plan_dispatch = 3,
  session_status = 4,
  probe_report = 5,
  stream_open = 6,
  store_block = 7,
  read_block = 8,
  delete_block = 9,
  fail = 10,
  locate = 11,
  wait_session = 12,
  list_stripes = 13,
  ping = 14,
};

std::string_view to_string(MsgType type);

// Layout, big-endian: length u32 (of everything after it) | version u8 |
// type u8 | meta length u32 | meta (JSON text) | body bytes.
struct Message {
  MsgType type = MsgType::reply;
  json meta = json::object();
  Bytes body;
};

Bytes encode(const Message& msg);
Message decode(std::span<const std::uint8_t> wire);  // without the length prefix

void write_message(net::Socket& sock, const Message& msg);
/// nullopt on a clean end of stream. Throws Error(protocol) on a version
/// mismatch or malformed message.
std::optional<Message> read_message(net::Socket& sock, std::chrono::milliseconds timeout);

Message ok_reply(json meta = json::object(), Bytes body = {});
Message error_reply(ErrorCode code, const std::string& what);
ErrorCode parse_error_code(std::string_view name);

/// Sends one request on a fresh connection and returns the reply. An error
/// reply is rethrown as Error with the remote code.
Message call(const net::Endpoint& to, const Message& request,
             std::chrono::milliseconds timeout = std::chrono::milliseconds(30000));

// ---- JSON encodings ----

json to_json(const StripeMetadata& stripe);
StripeMetadata stripe_from_json(const json& j);

json to_json(const pipeline::PlanInputs& inputs);
pipeline::PlanInputs plan_inputs_from_json(const json& j);

json to_json(const pipeline::HopFailure& failure);
pipeline::HopFailure hop_failure_from_json(const json& j);

}  // namespace ecpipe::proto
