#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "ecpipe/block_store.hpp"
#include "ecpipe/error.hpp"
#include "ecpipe/plan.hpp"
#include "ecpipe/transport.hpp"

namespace ecpipe::pipeline {

enum class Stage : std::uint8_t { receive, read, combine, send };
std::string_view to_string(Stage stage);

struct StageEvent {
  NodeId node = 0;
  Stage stage = Stage::receive;
  std::uint32_t slice = 0;
  Clock::time_point begin;
  Clock::time_point end;
};

class StageTrace {
 public:
  void record(const StageEvent& event);
  std::vector<StageEvent> events() const;

 private:
  mutable std::mutex mu_;
  std::vector<StageEvent> events_;
};

/// Where a session broke: the node that detected the problem and, when the
/// problem is on a hop, the node at the other end of it.
struct HopFailure {
  NodeId node = 0;
  NodeId peer = 0;
  bool has_peer = false;
  std::uint32_t slice = 0;
  ErrorCode code = ErrorCode::session_aborted;
  std::string reason;

  std::string describe() const;
};

class SessionAborted : public Error {
 public:
  explicit SessionAborted(HopFailure failure)
      : Error(ErrorCode::session_aborted, failure.describe()), failure_(std::move(failure)) {}
  const HopFailure& failure() const { return failure_; }

 private:
  HopFailure failure_;
};

struct ExecOptions {
  std::size_t window = 64;  // frames queued per outbound stream
  std::chrono::milliseconds timeout{30000};
  StageTrace* trace = nullptr;
};

struct NodeReport {
  NodeId node = 0;
  std::map<int, Bytes> blocks;  // target position -> reconstructed block
  std::uint64_t bytes_read = 0;
  std::uint64_t frames_sent = 0;
  std::uint64_t frames_received = 0;
};

/// Runs one node's part of the plan: reads its local block slice by slice,
/// folds in what upstream nodes send, and streams the result downstream, with
/// reading, combining and sending overlapped across slices. A requestor
/// returns its reconstructed blocks. Throws SessionAborted on any failure
/// after aborting the session on the transport.
NodeReport run_node(const RepairPlan& plan, NodeId node, Transport& transport,
                    BlockReader* reader, const ExecOptions& options = {});

struct ExecResult {
  std::map<int, Bytes> blocks;  // target position -> reconstructed block
  std::map<NodeId, std::uint64_t> bytes_read;
  Clock::duration elapsed{};
};

/// Runs every participant of the plan in this process. On failure throws
/// SessionAborted naming the hop where the session first broke.
ExecResult execute(const RepairPlan& plan, Transport& transport, BlockReader& reader,
                   const ExecOptions& options = {});

}  // namespace ecpipe::pipeline
