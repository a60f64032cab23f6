#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "ecpipe/bench.hpp"
#include "ecpipe/client.hpp"
#include "ecpipe/config.hpp"
#include "ecpipe/coordinator_server.hpp"
#include "ecpipe/error.hpp"
#include "ecpipe/helper.hpp"
#include "ecpipe/local_cluster.hpp"
#include "ecpipe/sim.hpp"

using namespace ecpipe;
using nlohmann::json;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void wait_for_signal() {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
}

struct Globals {
  std::string coordinator;
  std::string config_file;
  std::string csv;
  std::uint64_t seed = 1;
};

ClusterConfig load_config(const Globals& g) {
  ClusterConfig c;
  if (!g.config_file.empty()) c = ClusterConfig::load(g.config_file);
  if (!g.coordinator.empty()) c.coordinator = net::Endpoint::parse(g.coordinator);
  return c;
}

client::Client connect(const Globals& g) {
  auto c = load_config(g);
  if (!c.coordinator) raise(ErrorCode::invalid_argument, "no coordinator: pass --coordinator or set it in --config");
  return client::Client(*c.coordinator, c);
}

json read_json(const std::string& file) {
  std::ifstream in(file);
  if (!in) raise(ErrorCode::io, "cannot open " + file);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    raise(ErrorCode::invalid_argument, file + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) raise(ErrorCode::io, "cannot write " + path);
  out << text;
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

std::string join(const std::vector<std::uint64_t>& v, char sep = ' ') {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? std::string(1, sep) : "") + std::to_string(v[i]);
  return out;
}

template <class T>
std::vector<std::uint64_t> widen(const std::vector<T>& v) {
  return {v.begin(), v.end()};
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + '"';
}

// write: stripe,index,block,node,hash
std::string write_csv(const client::WriteReport& r) {
  std::ostringstream out;
  out << "stripe,index,block,node,hash\n";
  for (const auto& b : r.blocks) out << b.stripe << ',' << b.index << ',' << b.block << ',' << b.node << ',' << b.hash << '\n';
  return out.str();
}

// fail: block,stripe,node,deleted,error
std::string fail_csv(const std::vector<client::ErasedBlock>& blocks) {
  std::ostringstream out;
  out << "block,stripe,node,deleted,error\n";
  for (const auto& b : blocks) {
    out << b.block << ',' << b.stripe << ',' << b.node << ',' << b.deleted << ',' << csv_field(b.error) << '\n';
  }
  return out.str();
}

// repair: session,scheme,blocks,requestors,helpers,state,seconds,session_seconds,verified,failure
// (lists inside a field are space separated)
void repair_row(std::ostream& out, const client::RepairRecord& r) {
  out << r.session << ',' << r.scheme << ',' << join(widen(r.blocks)) << ',' << join(widen(r.requestors)) << ','
      << join(widen(r.helpers)) << ',' << r.state << ',' << r.seconds << ',' << r.session_seconds << ','
      << r.verified << ',' << csv_field(r.failure) << '\n';
}

constexpr const char* kRepairHeader = "session,scheme,blocks,requestors,helpers,state,seconds,session_seconds,verified,failure\n";

ecpipe::pipeline::Scheme scheme_arg(const std::string& s) { return pipeline::parse_scheme(s); }

// Simulator scenario: a config file with a "sim" object, or the object itself.
sim::SweepGrid sweep_grid(const json& file) {
  const json& j = file.contains("sim") ? file.at("sim") : file;
  sim::SweepGrid g;
  for (const auto& s : j.value("schemes", json::array({"rp-basic", "conventional"}))) {
    g.schemes.push_back(pipeline::parse_scheme(s.get<std::string>()));
  }
  g.k = j.value("k", std::vector<int>{10});
  g.s = j.value("s", std::vector<std::uint32_t>{2048});
  g.f = j.value("f", std::vector<int>{1});
  return g;
}

// Bench scenario: a config file with a "bench" object, or the object itself.
bench::BenchScenario bench_scenario(const json& file) {
  bench::BenchScenario b;
  const json& j = file.contains("bench") ? file.at("bench") : file;
  if (j.contains("schemes")) {
    b.schemes.clear();
    for (const auto& s : j.at("schemes")) b.schemes.push_back(pipeline::parse_scheme(s.get<std::string>()));
  }
  b.n = j.value("n", b.n);
  b.k = j.value("k", b.k);
  b.f = j.value("f", b.f);
  b.block_size = j.value("block_size", b.block_size);
  b.slice_size = j.value("slice_size", b.slice_size);
  if (j.contains("link_mbps")) b.link_rate = j.at("link_mbps").get<double>() * 1e6 / 8;
  b.requestor_edge = j.value("requestor_edge", b.requestor_edge);
  b.repetitions = j.value("repetitions", b.repetitions);
  b.window = j.value("window", b.window);
  return b;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ecpipe: repair-pipelined erasure-coded storage"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--coordinator", g.coordinator, "coordinator address host:port");
  app.add_option("--config", g.config_file, "cluster config (JSON)");
  app.add_option("--csv", g.csv, "also write the result as CSV to this path ('-' for stdout)");
  app.add_option("--seed", g.seed, "random seed");

  // write
  auto* write = app.add_subcommand("write", "encode data into stripes and store the blocks on the helpers");
  std::size_t stripes = 0;
  std::string input;
  bool no_verify = false;
  write->add_option("--stripes", stripes, "number of random stripes");
  write->add_option("--input", input, "file to store instead of random data");
  write->add_flag("--no-verify", no_verify, "skip reading blocks back");

  // fail
  auto* fail = app.add_subcommand("fail", "erase the blocks of a node, or single blocks");
  std::optional<NodeId> fail_node;
  std::vector<BlockId> fail_blocks;
  fail->add_option("--node", fail_node, "node whose blocks are erased");
  fail->add_option("--blocks", fail_blocks, "block IDs to erase");

  // repair
  auto* repair = app.add_subcommand("repair", "rebuild lost blocks and verify their hashes");
  client::RepairOptions ro;
  std::string repair_scheme, repair_path;
  std::optional<bool> repair_greedy;
  double repair_timeout = 120;
  repair->add_option("--blocks", ro.blocks, "lost block IDs")->required();
  repair->add_option("--requestors", ro.requestors, "one requestor node per block");
  repair->add_option("--scheme", repair_scheme, "conventional | ppr | rp-basic | rp-cyclic | rp-multi");
  repair->add_option("--path", repair_path, "plain | rack-aware | weighted");
  repair->add_option("--greedy", repair_greedy, "least-recently-used helper selection (true/false)");
  repair->add_option("--timeout", repair_timeout, "seconds to wait for the session");
  repair->add_flag("--aggregate-requestors", ro.aggregate_requestors,
                   "weighted multi-block paths: treat all requestors as one (experimental)");
  repair->add_flag("--no-verify", no_verify, "skip reading rebuilt blocks back");

  // recover-node
  auto* recover = app.add_subcommand("recover-node", "rebuild every block a failed node held");
  client::RecoverOptions rec;
  bool no_scheduling = false;
  std::string recover_scheme, recover_path;
  recover->add_option("--node", rec.node, "failed node")->required();
  recover->add_option("--requestors", rec.requestors, "nodes that receive rebuilt blocks");
  recover->add_flag("--no-scheduling", no_scheduling, "take the first k helpers instead of the least recently used");
  recover->add_option("--fanout", rec.fanout, "concurrent repair sessions");
  recover->add_option("--scheme", recover_scheme, "repair scheme");
  recover->add_option("--path", recover_path, "path mode");
  recover->add_flag("--no-verify", no_verify, "skip reading rebuilt blocks back");

  // sim
  auto* simc = app.add_subcommand("sim", "timeslot simulation sweep; prints CSV");
  std::string scenario;
  simc->add_option("--scenario", scenario, "scenario file (JSON)")->required();

  // probe-import
  auto* probe = app.add_subcommand("probe-import", "send measured link bandwidths (src,dst,mbps CSV) to the coordinator");
  std::string probe_file;
  probe->add_option("file", probe_file, "CSV file")->required();

  // daemons and local runs
  auto* coordc = app.add_subcommand("coordinator", "run the coordinator daemon");
  std::string listen;
  coordc->add_option("--listen", listen, "listen address (default: the config's coordinator)");

  auto* helperc = app.add_subcommand("helper", "run the helper daemon of one node");
  NodeId helper_id = 0;
  helperc->add_option("--node", helper_id, "node ID from the config")->required();
  helperc->add_option("--listen", listen, "listen address (default: the node's address)");

  auto* clusterc = app.add_subcommand("cluster", "run a coordinator and helpers in this process on loopback");
  int cluster_nodes = 16;
  std::string cluster_root, cluster_out;
  clusterc->add_option("--nodes", cluster_nodes, "helpers to start when the config lists none");
  clusterc->add_option("--root", cluster_root, "block directory root")->required();
  clusterc->add_option("--write-config", cluster_out, "write the running cluster's config here");

  auto* benchc = app.add_subcommand("bench", "time in-process repairs over shaped links; prints CSV");
  benchc->add_option("--scenario", scenario, "bench scenario file (JSON)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (write->parsed()) {
      auto c = connect(g);
      client::WriteOptions w;
      w.stripes = stripes;
      if (!input.empty()) w.input = input;
      w.seed = g.seed;
      w.verify = !no_verify;
      auto r = c.write(w);
      print(client::to_json(r));
      if (!g.csv.empty()) write_text(g.csv, write_csv(r));
      return w.verify && !r.verified && !r.blocks.empty() ? 2 : 0;
    }
    if (fail->parsed()) {
      if (!fail_node && fail_blocks.empty()) raise(ErrorCode::invalid_argument, "fail needs --node or --blocks");
      auto c = connect(g);
      auto erased = fail_node ? c.fail_node(*fail_node) : c.fail_blocks(fail_blocks);
      json out = json::array();
      for (const auto& b : erased) {
        out.push_back({{"block", b.block}, {"stripe", b.stripe}, {"node", b.node}, {"deleted", b.deleted}, {"error", b.error}});
      }
      print(out);
      if (!g.csv.empty()) write_text(g.csv, fail_csv(erased));
      return 0;
    }
    if (repair->parsed()) {
      auto c = connect(g);
      if (!repair_scheme.empty()) ro.scheme = scheme_arg(repair_scheme);
      if (!repair_path.empty()) ro.path = pathsel::parse_path_mode(repair_path);
      ro.greedy = repair_greedy;
      ro.verify = !no_verify;
      ro.timeout = std::chrono::milliseconds(static_cast<long long>(repair_timeout * 1000));
      auto r = c.repair(ro);
      print(client::to_json(r));
      if (!g.csv.empty()) {
        std::ostringstream out;
        out << kRepairHeader;
        repair_row(out, r);
        write_text(g.csv, out.str());
      }
      return r.state == "done" && (r.verified || !ro.verify) ? 0 : 2;
    }
    if (recover->parsed()) {
      auto c = connect(g);
      rec.scheduling = !no_scheduling;
      rec.verify = !no_verify;
      if (!recover_scheme.empty()) rec.scheme = scheme_arg(recover_scheme);
      if (!recover_path.empty()) rec.path = pathsel::parse_path_mode(recover_path);
      auto r = c.recover_node(rec);
      auto j = client::to_json(r);
      j.erase("repairs");
      print(j);
      if (!g.csv.empty()) {
        // node,scheduling,blocks,repaired,verified,bytes,seconds,rate_mb_s
        std::ostringstream out;
        out << "node,scheduling,blocks,repaired,verified,bytes,seconds,rate_mb_s\n"
            << r.node << ',' << rec.scheduling << ',' << r.blocks << ',' << r.repaired << ',' << r.verified << ','
            << r.bytes << ',' << r.seconds << ',' << r.rate_mb_s << '\n';
        write_text(g.csv, out.str());
      }
      return r.repaired == r.blocks && (!rec.verify || r.verified == r.blocks) ? 0 : 2;
    }
    if (simc->parsed()) {
      auto rows = sim::sweep(sweep_grid(read_json(scenario)));
      write_text(g.csv.empty() ? "-" : g.csv, sim::to_csv(rows));
      return 0;
    }
    if (probe->parsed()) {
      std::ifstream in(probe_file);
      if (!in) raise(ErrorCode::io, "cannot open " + probe_file);
      std::stringstream text;
      text << in.rdbuf();
      auto links = parse_probe_csv(text.str());
      auto c = connect(g);
      print({{"links", c.probe_import(links)}});
      return 0;
    }
    if (coordc->parsed()) {
      auto c = load_config(g);
      std::optional<net::Endpoint> ep;
      if (!listen.empty()) ep = net::Endpoint::parse(listen);
      coord::CoordinatorDaemon daemon(c, ep);
      std::cerr << "coordinator listening on " << daemon.endpoint().str() << std::endl;
      wait_for_signal();
      daemon.stop();
      return 0;
    }
    if (helperc->parsed()) {
      auto c = load_config(g);
      const auto& node = c.node(helper_id);
      helper::HelperOptions ho;
      if (c.shape) ho.shaper = std::make_shared<Shaper>(c.link_profile());
      const auto ep = listen.empty() ? node.address : net::Endpoint::parse(listen);
      const auto root = node.root.empty() ? std::filesystem::path("node" + std::to_string(helper_id)) : node.root;
      helper::HelperServer h(helper_id, ep, root, ho);
      h.start();
      std::cerr << "helper " << helper_id << " listening on " << h.endpoint().str() << std::endl;
      wait_for_signal();
      h.stop();
      return 0;
    }
    if (clusterc->parsed()) {
      auto c = load_config(g);
      LocalCluster cluster(c, cluster_root, cluster_nodes);
      if (!cluster_out.empty()) {
        // Written to a temporary name first so that watchers never see half a file.
        const std::string tmp = cluster_out + ".tmp";
        write_text(tmp, cluster.config().to_json().dump(2) + "\n");
        std::filesystem::rename(tmp, cluster_out);
      }
      std::cerr << "cluster: coordinator " << cluster.coordinator_endpoint().str() << ", "
                << cluster.config().nodes.size() << " helpers" << std::endl;
      wait_for_signal();
      cluster.stop();
      return 0;
    }
    if (benchc->parsed()) {
      auto b = scenario.empty() ? bench::BenchScenario{} : bench_scenario(read_json(scenario));
      b.seed = g.seed;
      bench::Harness h(b);
      auto rows = h.run_all();
      write_text(g.csv.empty() ? "-" : g.csv, bench::to_csv(b, rows));
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "ecpipe: " << e.what() << " (" << to_string(e.code()) << ")\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "ecpipe: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
