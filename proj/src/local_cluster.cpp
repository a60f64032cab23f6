#include "ecpipe/local_cluster.hpp"

#include "ecpipe/error.hpp"

namespace ecpipe {

LocalCluster::LocalCluster(ClusterConfig config, const std::filesystem::path& root, int nodes,
                           coord::CoordinatorOptions options)
    : config_(std::move(config)) {
  if (config_.nodes.empty()) {
    for (int i = 1; i <= nodes; ++i) {
      NodeConfig n;
      n.id = static_cast<NodeId>(i);
      config_.nodes.push_back(n);
    }
  }
  if (config_.shape) shaper_ = std::make_shared<Shaper>(config_.link_profile());
  for (auto& n : config_.nodes) {
    if (n.root.empty()) n.root = root / ("node" + std::to_string(n.id));
    helper::HelperOptions ho;
    ho.shaper = shaper_;
    auto h = std::make_unique<helper::HelperServer>(n.id, net::Endpoint{"127.0.0.1", 0}, n.root, ho);
    h->start();
    n.address = h->endpoint();
    helpers_.push_back(std::move(h));
  }
  config_.coordinator = net::Endpoint{"127.0.0.1", 0};
  daemon_ = std::make_unique<coord::CoordinatorDaemon>(config_, std::nullopt, options);
  config_.coordinator = daemon_->endpoint();
}

LocalCluster::~LocalCluster() { stop(); }

helper::HelperServer& LocalCluster::helper(NodeId id) {
  for (auto& h : helpers_) {
    if (h->id() == id) return *h;
  }
  raise(ErrorCode::not_found, "no helper " + std::to_string(id));
}

void LocalCluster::kill(NodeId id) { helper(id).stop(); }

void LocalCluster::stop() {
  for (auto& h : helpers_) h->stop();
  if (daemon_) daemon_->stop();
}

}  // namespace ecpipe
