#include "ecpipe/metadata.hpp"

#include <algorithm>
#include <mutex>
#include <sstream>

#include <json.hpp>

#include "ecpipe/error.hpp"
#include "ecpipe/protocol.hpp"

namespace ecpipe::coord {

using nlohmann::json;

MetadataStore::MetadataStore(std::filesystem::path journal,
                             std::optional<pathsel::RackTopology> rack_limit)
    : journal_path_(std::move(journal)), rack_limit_(std::move(rack_limit)) {
  if (journal_path_.empty()) return;
  replay();
  if (journal_path_.has_parent_path()) std::filesystem::create_directories(journal_path_.parent_path());
  journal_.open(journal_path_, std::ios::app);
  if (!journal_) raise(ErrorCode::io, "cannot open journal " + journal_path_.string());
}

void MetadataStore::validate(const StripeMetadata& s) const {
  auto [n, k] = parse_scheme_name(s.scheme);
  if (s.n != n || s.k != k) raise(ErrorCode::invalid_argument, "stripe n/k do not match " + s.scheme);
  if (static_cast<int>(s.blocks.size()) != n || static_cast<int>(s.nodes.size()) != n) {
    raise(ErrorCode::invalid_argument, "stripe " + std::to_string(s.id) + " needs " + std::to_string(n) +
                                           " blocks and nodes");
  }
  if (!s.hashes.empty() && static_cast<int>(s.hashes.size()) != n) {
    raise(ErrorCode::invalid_argument, "stripe hashes must cover every block");
  }
  std::set<BlockId> ids(s.blocks.begin(), s.blocks.end());
  if (static_cast<int>(ids.size()) != n) raise(ErrorCode::duplicate, "block listed twice in one stripe");
  std::set<NodeId> nodes(s.nodes.begin(), s.nodes.end());
  if (static_cast<int>(nodes.size()) != n) {
    raise(ErrorCode::invalid_argument, "stripe " + std::to_string(s.id) + " places two blocks on one node");
  }
  if (rack_limit_) {
    std::map<int, int> per_rack;
    for (NodeId node : s.nodes) {
      auto it = rack_limit_->find(node);
      if (it == rack_limit_->end()) raise(ErrorCode::not_found, "node " + std::to_string(node) + " has no rack");
      if (++per_rack[it->second] > n - k) {
        raise(ErrorCode::invalid_argument, "stripe " + std::to_string(s.id) + " puts more than " +
                                               std::to_string(n - k) + " blocks in rack " +
                                               std::to_string(it->second));
      }
    }
  }
}

namespace {

bool same_record(const StripeMetadata& a, const StripeMetadata& b) {
  return a.id == b.id && a.scheme == b.scheme && a.block_size == b.block_size &&
         a.data_length == b.data_length && a.blocks == b.blocks && a.nodes == b.nodes;
}

}  // namespace

bool MetadataStore::register_locked(const StripeMetadata& s) {
  if (auto it = stripes_.find(s.id); it != stripes_.end()) {
    if (same_record(it->second.meta, s)) return false;
    raise(ErrorCode::duplicate, "stripe " + std::to_string(s.id) + " is already registered");
  }
  for (BlockId b : s.blocks) {
    if (blocks_.count(b)) raise(ErrorCode::duplicate, "block " + std::to_string(b) + " is already registered");
  }
  return true;
}

StripeId MetadataStore::register_stripe(const StripeMetadata& s) {
  validate(s);
  std::unique_lock lock(mu_);
  if (!register_locked(s)) return s.id;
  const std::string line = json{{"op", "register"}, {"stripe", proto::to_json(s)}}.dump();
  append(line);
  apply_line(line);
  return s.id;
}

Location MetadataStore::locate(BlockId block) const {
  std::shared_lock lock(mu_);
  auto it = blocks_.find(block);
  if (it == blocks_.end()) raise(ErrorCode::not_found, "unknown block " + std::to_string(block));
  const auto& [stripe, index] = it->second;
  const Entry& e = stripes_.at(stripe);
  return Location{stripe, e.meta.nodes[index], index, e.missing[index]};
}

StripeMetadata MetadataStore::stripe(StripeId id) const {
  std::shared_lock lock(mu_);
  auto it = stripes_.find(id);
  if (it == stripes_.end()) raise(ErrorCode::not_found, "unknown stripe " + std::to_string(id));
  return it->second.meta;
}

std::vector<StripeId> MetadataStore::stripe_ids() const {
  std::shared_lock lock(mu_);
  std::vector<StripeId> out;
  for (const auto& [id, e] : stripes_) out.push_back(id);
  return out;
}

std::size_t MetadataStore::stripe_count() const {
  std::shared_lock lock(mu_);
  return stripes_.size();
}

StripeId MetadataStore::next_stripe_id() const {
  std::shared_lock lock(mu_);
  return stripes_.empty() ? 1 : stripes_.rbegin()->first + 1;
}

std::vector<int> MetadataStore::missing(StripeId id) const {
  std::shared_lock lock(mu_);
  auto it = stripes_.find(id);
  if (it == stripes_.end()) raise(ErrorCode::not_found, "unknown stripe " + std::to_string(id));
  std::vector<int> out;
  for (std::size_t i = 0; i < it->second.missing.size(); ++i) {
    if (it->second.missing[i]) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<BlockId> MetadataStore::blocks_on(NodeId node) const {
  std::shared_lock lock(mu_);
  std::vector<BlockId> out;
  for (const auto& [id, e] : stripes_) {
    for (std::size_t i = 0; i < e.meta.nodes.size(); ++i) {
      if (e.meta.nodes[i] == node) out.push_back(e.meta.blocks[i]);
    }
  }
  return out;
}

void MetadataStore::mark_missing(const std::vector<BlockId>& blocks) {
  std::unique_lock lock(mu_);
  for (BlockId b : blocks) {
    if (!blocks_.count(b)) raise(ErrorCode::not_found, "unknown block " + std::to_string(b));
  }
  const std::string line = json{{"op", "missing"}, {"blocks", blocks}}.dump();
  append(line);
  apply_line(line);
}

void MetadataStore::relocate(BlockId block, NodeId node, const std::string& hash) {
  std::unique_lock lock(mu_);
  auto it = blocks_.find(block);
  if (it == blocks_.end()) raise(ErrorCode::not_found, "unknown block " + std::to_string(block));
  const Entry& e = stripes_.at(it->second.first);
  for (std::size_t i = 0; i < e.meta.nodes.size(); ++i) {
    if (static_cast<int>(i) != it->second.second && e.meta.nodes[i] == node && !e.missing[i]) {
      raise(ErrorCode::invalid_argument, "node " + std::to_string(node) + " already holds a block of stripe " +
                                             std::to_string(e.meta.id));
    }
  }
  json j{{"op", "relocate"}, {"block", block}, {"node", node}};
  if (!hash.empty()) j["hash"] = hash;
  const std::string line = j.dump();
  append(line);
  apply_line(line);
}

void MetadataStore::mark_dead(NodeId node) {
  std::unique_lock lock(mu_);
  const std::string line = json{{"op", "dead"}, {"node", node}}.dump();
  append(line);
  apply_line(line);
}

bool MetadataStore::dead(NodeId node) const {
  std::shared_lock lock(mu_);
  return dead_.count(node) > 0;
}

void MetadataStore::append(const std::string& line) {
  if (!journal_.is_open()) return;
  journal_ << line << '\n';
  journal_.flush();
  if (!journal_) raise(ErrorCode::io, "journal write failed");
}

// Caller holds the lock, or is the constructor.
void MetadataStore::apply_line(const std::string& line) {
  const json j = json::parse(line);
  const std::string op = j.at("op").get<std::string>();
  if (op == "register") {
    StripeMetadata s = proto::stripe_from_json(j.at("stripe"));
    for (std::size_t i = 0; i < s.blocks.size(); ++i) blocks_[s.blocks[i]] = {s.id, static_cast<int>(i)};
    Entry e{s, std::vector<bool>(s.blocks.size(), false)};
    stripes_[s.id] = std::move(e);
  } else if (op == "missing") {
    for (BlockId b : j.at("blocks").get<std::vector<BlockId>>()) {
      auto it = blocks_.find(b);
      if (it != blocks_.end()) stripes_.at(it->second.first).missing[it->second.second] = true;
    }
  } else if (op == "relocate") {
    auto it = blocks_.find(j.at("block").get<BlockId>());
    if (it == blocks_.end()) return;
    Entry& e = stripes_.at(it->second.first);
    const int index = it->second.second;
    const NodeId node = j.at("node").get<NodeId>();
    e.meta.nodes[index] = node;
    e.missing[index] = false;
    if (j.contains("hash")) {
      if (e.meta.hashes.empty()) e.meta.hashes.assign(e.meta.blocks.size(), "");
      if (e.meta.hashes[index].empty()) e.meta.hashes[index] = j.at("hash").get<std::string>();
    }
    dead_.erase(node);
  } else if (op == "dead") {
    dead_.insert(j.at("node").get<NodeId>());
  } else {
    raise(ErrorCode::protocol, "unknown journal op " + op);
  }
}

void MetadataStore::replay() {
  std::ifstream in(journal_path_);
  if (!in) return;  // a fresh journal
  std::string line;
  int line_no = 0;
  bool truncated = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (truncated) {
      raise(ErrorCode::io, "journal " + journal_path_.string() + " is damaged before line " +
                               std::to_string(line_no));
    }
    try {
      apply_line(line);
    } catch (const json::exception&) {
      truncated = true;  // only the last record may be cut short by a crash
    }
  }
}

std::size_t MetadataStore::load_placement(std::istream& in, std::size_t block_size) {
  std::string line;
  std::size_t loaded = 0;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    StripeMetadata s;
    if (!(fields >> s.id)) continue;
    auto bad = [&](const std::string& what) {
      raise(ErrorCode::invalid_argument, "placement line " + std::to_string(line_no) + ": " + what);
    };
    if (!(fields >> s.scheme)) bad("missing scheme");
    auto [n, k] = parse_scheme_name(s.scheme);
    s.n = n;
    s.k = k;
    s.block_size = block_size;
    s.data_length = static_cast<std::uint64_t>(k) * block_size;
    std::string pair;
    while (fields >> pair) {
      auto colon = pair.find(':');
      if (colon == std::string::npos) bad("expected block:node, got " + pair);
      try {
        s.blocks.push_back(std::stoull(pair.substr(0, colon)));
        s.nodes.push_back(static_cast<NodeId>(std::stoul(pair.substr(colon + 1))));
      } catch (const std::exception&) {
        bad("expected block:node, got " + pair);
      }
    }
    if (static_cast<int>(s.blocks.size()) != n) bad(s.scheme + " needs " + std::to_string(n) + " blocks");
    register_stripe(s);
    ++loaded;
  }
  return loaded;
}

std::size_t MetadataStore::load_placement_file(const std::filesystem::path& file, std::size_t block_size) {
  std::ifstream in(file);
  if (!in) raise(ErrorCode::not_found, "cannot open placement file " + file.string());
  return load_placement(in, block_size);
}

}  // namespace ecpipe::coord
