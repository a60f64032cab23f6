#include "ecpipe/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "ecpipe/error.hpp"

namespace ecpipe {

using nlohmann::json;

ClusterConfig ClusterConfig::from_json(const json& j) {
  ClusterConfig c;
  try {
    if (j.contains("coordinator")) c.coordinator = net::Endpoint::parse(j.at("coordinator").get<std::string>());
    if (j.contains("journal")) c.journal = j.at("journal").get<std::string>();
    for (const auto& n : j.value("nodes", json::array())) {
      NodeConfig node;
      node.id = n.at("id").get<NodeId>();
      if (n.contains("address")) node.address = net::Endpoint::parse(n.at("address").get<std::string>());
      node.rack = n.value("rack", 0);
      if (n.contains("root")) node.root = n.at("root").get<std::string>();
      for (const auto& other : c.nodes) {
        if (other.id == node.id) raise(ErrorCode::duplicate, "node " + std::to_string(node.id) + " listed twice");
      }
      c.nodes.push_back(node);
    }
    c.code = j.value("code", c.code);
    if (auto [n, k] = parse_scheme_name(c.code); !(k >= 1 && k < n && n <= 255)) {
      raise(ErrorCode::invalid_argument, "code " + c.code + " needs 1 <= k < n <= 255");
    }
    c.block_size = j.value("block_size", c.block_size);
    c.slice_size = j.value("slice_size", c.slice_size);
    SliceSpec::make(c.block_size, c.slice_size);
    if (j.contains("scheme")) c.scheme = pipeline::parse_scheme(j.at("scheme").get<std::string>());
    if (j.contains("path")) c.path = pathsel::parse_path_mode(j.at("path").get<std::string>());
    c.greedy = j.value("greedy", c.greedy);
    if (j.contains("links")) {
      const auto& l = j.at("links");
      c.default_mbps = l.value("default_mbps", c.default_mbps);
      c.shape = l.value("shape", c.shape);
      for (const auto& o : l.value("overrides", json::array())) {
        c.links.push_back({o.at("src").get<NodeId>(), o.at("dst").get<NodeId>(), o.at("mbps").get<double>()});
      }
    }
    const json weights = j.value("node_weights", json::object());
    for (const auto& [node, w] : weights.items()) {
      c.node_weights[static_cast<NodeId>(std::stoul(node))] = w.get<double>();
    }
    if (j.contains("session_timeout_s")) {
      c.session_timeout = std::chrono::milliseconds(
          static_cast<long long>(j.at("session_timeout_s").get<double>() * 1000));
    }
    c.window = j.value("window", c.window);
  } catch (const json::exception& e) {
    raise(ErrorCode::invalid_argument, std::string("bad config: ") + e.what());
  }
  if (!(c.default_mbps > 0)) raise(ErrorCode::invalid_argument, "links.default_mbps must be positive");
  for (const auto& o : c.links) {
    if (!(o.mbps > 0)) raise(ErrorCode::invalid_argument, "link bandwidth must be positive");
  }
  if (c.window < 1) raise(ErrorCode::invalid_argument, "window must be at least 1");
  return c;
}

ClusterConfig ClusterConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) raise(ErrorCode::not_found, "cannot open config " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    raise(ErrorCode::invalid_argument, "config " + file.string() + ": " + e.what());
  }
  return from_json(j);
}

json ClusterConfig::to_json() const {
  json nodes_json = json::array();
  for (const auto& n : nodes) {
    nodes_json.push_back({{"id", n.id}, {"address", n.address.str()}, {"rack", n.rack}, {"root", n.root.string()}});
  }
  json overrides = json::array();
  for (const auto& o : links) overrides.push_back({{"src", o.src}, {"dst", o.dst}, {"mbps", o.mbps}});
  json weights = json::object();
  for (const auto& [node, w] : node_weights) weights[std::to_string(node)] = w;
  json j{{"nodes", nodes_json},
         {"code", code},
         {"block_size", block_size},
         {"slice_size", slice_size},
         {"scheme", pipeline::to_string(scheme)},
         {"path", pathsel::to_string(path)},
         {"greedy", greedy},
         {"links", {{"default_mbps", default_mbps}, {"shape", shape}, {"overrides", overrides}}},
         {"node_weights", weights},
         {"session_timeout_s", session_timeout.count() / 1000.0},
         {"window", window}};
  if (coordinator) j["coordinator"] = coordinator->str();
  if (!journal.empty()) j["journal"] = journal.string();
  return j;
}

const NodeConfig& ClusterConfig::node(NodeId id) const {
  for (const auto& n : nodes) {
    if (n.id == id) return n;
  }
  raise(ErrorCode::not_found, "node " + std::to_string(id) + " is not configured");
}

std::map<NodeId, net::Endpoint> ClusterConfig::directory() const {
  std::map<NodeId, net::Endpoint> out;
  for (const auto& n : nodes) out[n.id] = n.address;
  return out;
}

pathsel::RackTopology ClusterConfig::topology() const {
  pathsel::RackTopology out;
  for (const auto& n : nodes) out[n.id] = n.rack;
  return out;
}

pathsel::LinkWeightMatrix ClusterConfig::weights() const {
  std::map<std::pair<NodeId, NodeId>, double> mbps;
  for (const auto& o : links) mbps[{o.src, o.dst}] = o.mbps;
  auto w = pathsel::LinkWeightMatrix::from_bandwidth(default_mbps, mbps, block_size);
  if (node_weights.empty()) return w;
  std::vector<NodeId> ids;
  for (const auto& n : nodes) ids.push_back(n.id);
  return w.with_node_weights(node_weights, ids);
}

LinkProfile ClusterConfig::link_profile() const {
  LinkProfile p;
  p.default_rate = default_mbps * 1e6 / 8;
  for (const auto& o : links) p.link[{o.src, o.dst}] = o.mbps * 1e6 / 8;
  return p;
}

std::vector<LinkOverride> parse_probe_csv(const std::string& text) {
  std::vector<LinkOverride> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      auto b = cell.find_first_not_of(" \t");
      auto e = cell.find_last_not_of(" \t");
      cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    if (cells.size() != 3) {
      raise(ErrorCode::invalid_argument, "probe line " + std::to_string(line_no) + ": expected src,dst,mbps");
    }
    LinkOverride o;
    auto parse_node = [&](const std::string& s, NodeId& v) {
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      return ec == std::errc{} && p == s.data() + s.size();
    };
    if (!parse_node(cells[0], o.src) || !parse_node(cells[1], o.dst)) {
      if (line_no == 1) continue;  // header
      raise(ErrorCode::invalid_argument, "probe line " + std::to_string(line_no) + ": bad node ID");
    }
    try {
      std::size_t used = 0;
      o.mbps = std::stod(cells[2], &used);
      if (used != cells[2].size()) throw std::invalid_argument("trailing text");
    } catch (const std::exception&) {
      raise(ErrorCode::invalid_argument, "probe line " + std::to_string(line_no) + ": bad bandwidth");
    }
    if (!(o.mbps > 0)) {
      raise(ErrorCode::invalid_argument, "probe line " + std::to_string(line_no) + ": bandwidth must be positive");
    }
    out.push_back(o);
  }
  return out;
}

}  // namespace ecpipe
