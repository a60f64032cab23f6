#pragma once

#include <chrono>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ecpipe/codec.hpp"
#include "ecpipe/config.hpp"
#include "ecpipe/executor.hpp"
#include "ecpipe/metadata.hpp"
#include "ecpipe/pathsel.hpp"
#include "ecpipe/plan.hpp"

namespace ecpipe::coord {

enum class SessionState { dispatched, running, done, failed };
std::string_view to_string(SessionState state);
bool terminal(SessionState state);

struct RepairRequest {
  std::vector<BlockId> blocks;
  /// One per block, pairwise distinct; each stores the block it rebuilds.
  std::vector<NodeId> requestors;
  pipeline::Scheme scheme = pipeline::Scheme::rp_basic;
  pathsel::PathMode path = pathsel::PathMode::plain;
  bool greedy = true;
  /// Weighted multi-block paths: search towards all requestors folded into
  /// one (experimental) instead of towards the first requestor only.
  bool aggregate_requestors = false;
};

struct RepairSession {
  SessionId id;
  pipeline::Scheme scheme = pipeline::Scheme::rp_basic;
  pipeline::PlanInputs inputs;
  SessionState state = SessionState::dispatched;
  std::chrono::system_clock::time_point started;
  std::chrono::system_clock::time_point finished;
  std::optional<pipeline::HopFailure> failure;
  /// Content hash of each repaired block as reported by its requestor. Empty
  /// unless the session is done.
  std::map<BlockId, std::string> hashes;
  std::uint64_t bytes_read = 0;

  double seconds() const;
};

nlohmann::json to_json(const RepairSession& session);

/// A participant's report on its part of a session.
struct HopReport {
  SessionId session;
  NodeId node = 0;
  enum class Kind { running, done, failed } kind = Kind::running;
  std::map<BlockId, std::string> hashes;  // requestors only
  std::uint64_t bytes_read = 0;
  std::optional<pipeline::HopFailure> failure;
};

nlohmann::json to_json(const HopReport& report);
HopReport hop_report_from_json(const nlohmann::json& j);

/// Hands a plan to its participants.
class Dispatcher {
 public:
  virtual ~Dispatcher() = default;
  /// Returns once every participant accepted the plan; throws otherwise.
  virtual void dispatch(const RepairSession& session, const std::vector<NodeId>& participants) = 0;
  /// Best effort: tells participants to drop the session.
  virtual void cancel(const RepairSession& session, const std::vector<NodeId>& participants,
                      const std::string& reason) = 0;
};

struct CoordinatorOptions {
  std::chrono::milliseconds session_timeout{30000};
  /// Enforce at most n-k blocks per rack at registration.
  bool rack_limit = false;
  /// How often the timeout watcher looks at running sessions.
  std::chrono::milliseconds watch_interval{100};
};

/// Metadata authority and repair orchestrator. Thread-safe.
class Coordinator {
 public:
  Coordinator(ClusterConfig config, std::shared_ptr<Dispatcher> dispatcher,
              CoordinatorOptions options = {});
  ~Coordinator();
  Coordinator(const Coordinator&) = delete;
  Coordinator& operator=(const Coordinator&) = delete;

  MetadataStore& metadata() { return metadata_; }
  const ClusterConfig& config() const { return config_; }
  pathsel::HelperTimestamps& timestamps() { return timestamps_; }

  StripeId register_stripe(const StripeMetadata& stripe);
  Location locate(BlockId block) const;

  /// Marks the node dead and all its blocks missing; returns those blocks.
  /// Throws Error(not_found) for a node the cluster does not know.
  std::vector<BlockId> fail_node(NodeId node);
  void fail_blocks(const std::vector<BlockId>& blocks);

  /// Selects helpers and a path, builds the plan and dispatches it. Returns
  /// the new session once every participant has accepted it.
  RepairSession handle_repair_request(const RepairRequest& request);
  /// Plan inputs and scheme for a request, without dispatching or touching
  /// session state. Greedy selection still updates the timestamps.
  std::pair<pipeline::Scheme, pipeline::PlanInputs> plan_request(const RepairRequest& request);

  void report(const HopReport& report);
  RepairSession session(const SessionId& id) const;
  /// Waits until the session is done or failed, or the wait times out.
  RepairSession wait(const SessionId& id, std::chrono::milliseconds timeout) const;
  std::vector<RepairSession> sessions() const;

  /// Measured link bandwidths for weighted path selection.
  void update_links(const std::vector<LinkOverride>& links);
  pathsel::LinkWeightMatrix weights() const;

  /// Fails every running session older than the timeout. Called by the
  /// watcher thread; public for tests.
  void expire_sessions(std::chrono::system_clock::time_point now);

 private:
  struct Tracked {
    RepairSession session;
    std::vector<NodeId> participants;
    std::set<NodeId> acknowledged;
  };

  void finish(Tracked& t, SessionState state, std::optional<pipeline::HopFailure> failure);
  void watch();

  ClusterConfig config_;
  std::shared_ptr<Dispatcher> dispatcher_;
  CoordinatorOptions options_;
  MetadataStore metadata_;
  pathsel::HelperTimestamps timestamps_;
  pathsel::RackTopology topology_;
  std::map<std::string, codec::CodingScheme> codes_;
  mutable std::mutex codes_mu_;

  mutable std::mutex links_mu_;
  std::vector<LinkOverride> links_;

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::map<SessionId, Tracked> sessions_;
  bool stopping_ = false;
  std::thread watcher_;
};

}  // namespace ecpipe::coord
