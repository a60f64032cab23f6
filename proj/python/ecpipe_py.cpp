#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ecpipe/bench.hpp"
#include "ecpipe/codec.hpp"
#include "ecpipe/error.hpp"
#include "ecpipe/pathsel.hpp"
#include "ecpipe/plan.hpp"
#include "ecpipe/sim.hpp"

namespace py = pybind11;
using namespace ecpipe;

namespace {

Bytes to_bytes(const py::bytes& b) {
  std::string_view v(b);
  return Bytes(v.begin(), v.end());
}

py::bytes from_bytes(const Bytes& b) { return py::bytes(reinterpret_cast<const char*>(b.data()), b.size()); }

py::object fraction(const Rational& r) {
  static py::object Fraction = py::module_::import("fractions").attr("Fraction");
  return Fraction(r.num(), r.den());
}

std::vector<py::bytes> encode(int n, int k, const std::vector<py::bytes>& data) {
  codec::CodingScheme code(n, k);
  std::vector<Bytes> in;
  for (const auto& d : data) in.push_back(to_bytes(d));
  std::vector<py::bytes> out;
  for (const auto& b : codec::encode_stripe(code, in)) out.push_back(from_bytes(b));
  return out;
}

std::vector<py::bytes> decode(int n, int k, const std::map<int, py::bytes>& available, const std::vector<int>& targets) {
  codec::CodingScheme code(n, k);
  std::map<int, Bytes> in;
  for (const auto& [i, d] : available) in[i] = to_bytes(d);
  std::vector<py::bytes> out;
  for (const auto& b : codec::decode(code, in, targets)) out.push_back(from_bytes(b));
  return out;
}

pathsel::LinkWeightMatrix weight_matrix(const std::map<std::pair<NodeId, NodeId>, double>& weights, double fallback) {
  pathsel::LinkWeightMatrix w(fallback);
  for (const auto& [link, v] : weights) w.set(link.first, link.second, v);
  return w;
}

}  // namespace

PYBIND11_MODULE(_ecpipe, m) {
  m.doc() = "Erasure coding, repair-pipelining plans, path selection and timeslot simulation";

  py::register_exception<Error>(m, "EcpipeError", PyExc_ValueError);

  m.def("encode", &encode, py::arg("n"), py::arg("k"), py::arg("data"),
        "Encode k equal-length data blocks into the n blocks of a stripe.");
  m.def("decode", &decode, py::arg("n"), py::arg("k"), py::arg("available"), py::arg("targets"),
        "Rebuild the blocks at `targets` from k available blocks {index: bytes}.");
  m.def(
      "decoding_coefficients",
      [](int n, int k, const std::vector<int>& targets, const std::vector<int>& helpers) {
        codec::CodingScheme code(n, k);
        auto c = codec::decoding_coefficients(code, targets, helpers);
        std::vector<std::vector<int>> out(c.coefficients.rows());
        for (int r = 0; r < c.coefficients.rows(); ++r) {
          for (int h = 0; h < c.coefficients.cols(); ++h) out[r].push_back(c.at(r, h));
        }
        return out;
      },
      py::arg("n"), py::arg("k"), py::arg("targets"), py::arg("helpers"));

  m.def("schemes", [] {
    std::vector<std::string> out;
    for (auto s : pipeline::all_schemes()) out.emplace_back(pipeline::to_string(s));
    return out;
  });
  m.def(
      "simulate",
      [](const std::string& scheme, int k, std::uint32_t s, int f) {
        auto plan = pipeline::RepairPlan::build(pipeline::parse_scheme(scheme), pipeline::synthetic_plan_inputs(k, f, s));
        return fraction(sim::simulate(plan).completion_time);
      },
      py::arg("scheme"), py::arg("k"), py::arg("s"), py::arg("f") = 1,
      "Completion time in timeslots of a repair over unit-capacity links.");
  m.def(
      "analytic_time",
      [](const std::string& scheme, int k, std::uint32_t s, int f) {
        return fraction(sim::analytic_time(pipeline::parse_scheme(scheme), k, s, f));
      },
      py::arg("scheme"), py::arg("k"), py::arg("s"), py::arg("f") = 1);
  m.def(
      "sweep_csv",
      [](const std::vector<std::string>& schemes, const std::vector<int>& k, const std::vector<std::uint32_t>& s,
         const std::vector<int>& f) {
        sim::SweepGrid g;
        for (const auto& name : schemes) g.schemes.push_back(pipeline::parse_scheme(name));
        g.k = k;
        g.s = s;
        g.f = f;
        return sim::to_csv(sim::sweep(g));
      },
      py::arg("schemes"), py::arg("k"), py::arg("s"), py::arg("f"));

  m.def(
      "weighted_path",
      [](const std::map<std::pair<NodeId, NodeId>, double>& weights, NodeId requestor,
         const std::vector<NodeId>& available, int k, double default_weight) {
        auto r = pathsel::weighted_path(weight_matrix(weights, default_weight), requestor, available, k);
        return py::make_tuple(r.path, r.max_weight, r.expanded);
      },
      py::arg("weights"), py::arg("requestor"), py::arg("available"), py::arg("k"), py::arg("default_weight") = 1.0,
      "Minimax helper path: (path, max link weight, expansions).");
  m.def(
      "rack_aware_path",
      [](const std::map<NodeId, int>& racks, NodeId requestor, const std::vector<NodeId>& available, int k) {
        return pathsel::rack_aware_path(racks, requestor, available, k);
      },
      py::arg("racks"), py::arg("requestor"), py::arg("available"), py::arg("k"));
  m.def(
      "cross_rack_links",
      [](const std::map<NodeId, int>& racks, const std::vector<NodeId>& path, NodeId requestor) {
        return pathsel::cross_rack_links(racks, path, requestor);
      },
      py::arg("racks"), py::arg("path"), py::arg("requestor"));

  py::class_<pathsel::HelperTimestamps>(m, "HelperTimestamps")
      .def(py::init<>())
      .def("select",
           [](pathsel::HelperTimestamps& ts, const std::vector<NodeId>& available, int k) {
             return ts.select(available, k);
           })
      .def("stamp", &pathsel::HelperTimestamps::stamp)
      .def("selections", &pathsel::HelperTimestamps::selections);

  m.def(
      "recovery_peak_load",
      [](const std::vector<std::vector<NodeId>>& available, int k, bool greedy) {
        std::vector<pathsel::RecoveryTask> tasks;
        for (std::size_t i = 0; i < available.size(); ++i) {
          tasks.push_back({static_cast<StripeId>(i), 0, static_cast<NodeId>(100000 + i), available[i]});
        }
        pathsel::HelperTimestamps ts;
        pathsel::SelectionPolicy policy;
        policy.greedy = greedy;
        int peak = 0;
        for (auto& [node, c] : pathsel::helper_load(pathsel::select_full_recovery(tasks, k, ts, policy))) {
          peak = std::max(peak, c);
        }
        return peak;
      },
      py::arg("available"), py::arg("k"), py::arg("greedy") = true,
      "Largest number of repair sessions any helper joins when recovering one block per stripe.");

  m.def(
      "bench",
      [](const std::vector<std::string>& schemes, int n, int k, int f, std::size_t block_size, std::size_t slice_size,
         double link_rate, double requestor_edge, int repetitions, std::uint64_t seed) {
        bench::BenchScenario s;
        s.schemes.clear();
        for (const auto& name : schemes) s.schemes.push_back(pipeline::parse_scheme(name));
        s.n = n;
        s.k = k;
        s.f = f;
        s.block_size = block_size;
        s.slice_size = slice_size;
        s.link_rate = link_rate;
        s.requestor_edge = requestor_edge;
        s.repetitions = repetitions;
        s.seed = seed;
        std::vector<bench::Measurement> rows;
        {
          py::gil_scoped_release release;
          rows = bench::Harness(s).run_all();
        }
        std::map<std::string, std::vector<double>> out;
        for (const auto& r : rows) out[r.label] = r.seconds;
        return out;
      },
      py::arg("schemes"), py::arg("n") = 14, py::arg("k") = 10, py::arg("f") = 1,
      py::arg("block_size") = 1 << 20, py::arg("slice_size") = 32 << 10, py::arg("link_rate") = 0.0,
      py::arg("requestor_edge") = 1.0, py::arg("repetitions") = 1, py::arg("seed") = 1,
      "Time in-process repairs; returns {label: [seconds per run]} including 'direct'.");
}
