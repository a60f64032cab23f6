#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "ecpipe/client.hpp"
#include "ecpipe/config.hpp"
#include "ecpipe/coordinator_server.hpp"
#include "ecpipe/helper.hpp"

namespace ecpipe {

/// A coordinator and its helpers in one process, talking over loopback TCP.
/// Nodes listed in the config keep their IDs, racks and roots but get fresh
/// ephemeral ports; with no nodes listed, `nodes` helpers are created with
/// roots under `root`. When the config asks for shaping, all helpers share
/// one shaper, so port and link limits hold across the whole cluster.
class LocalCluster {
 public:
  LocalCluster(ClusterConfig config, const std::filesystem::path& root, int nodes = 0,
               coord::CoordinatorOptions options = {});
  ~LocalCluster();

  const ClusterConfig& config() const { return config_; }
  net::Endpoint coordinator_endpoint() const { return daemon_->endpoint(); }
  coord::Coordinator& coordinator() { return daemon_->coordinator(); }
  helper::HelperServer& helper(NodeId id);
  client::Client client() const { return client::Client(coordinator_endpoint(), config_); }

  /// Stops a helper, as if the machine went away. Its files stay on disk.
  void kill(NodeId id);
  void stop();

 private:
  ClusterConfig config_;
  std::shared_ptr<Shaper> shaper_;
  std::vector<std::unique_ptr<helper::HelperServer>> helpers_;
  std::unique_ptr<coord::CoordinatorDaemon> daemon_;
};

}  // namespace ecpipe
