#include "qfp/clocking.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

#include "qfp/numeric.hpp"

namespace qfp {

// ---------------------------------------------------------------------------
// Drive level conversions
// ---------------------------------------------------------------------------

double px_to_amplitude(double px_dbm, double z0) {
  if (!(z0 > 0.0)) throw std::invalid_argument("z0 must be > 0");
  double watts = 1e-3 * std::pow(10.0, px_dbm / 10.0);
  return std::sqrt(2.0 * watts / z0);
}

double amplitude_to_px(double amplitude, double z0) {
  if (!(z0 > 0.0)) throw std::invalid_argument("z0 must be > 0");
  if (!(amplitude > 0.0)) throw std::invalid_argument("amplitude must be > 0");
  return 10.0 * std::log10(amplitude * amplitude * z0 / 2.0 / 1e-3);
}

double ClockSpec::resolve_amplitude() const {
  if (px_dbm.has_value() == amplitude.has_value())
    throw std::invalid_argument("exactly one of px_dbm / amplitude must be set");
  return amplitude ? *amplitude : px_to_amplitude(*px_dbm, z0);
}

double ClockSpec::resolve_px() const {
  if (px_dbm.has_value() == amplitude.has_value())
    throw std::invalid_argument("exactly one of px_dbm / amplitude must be set");
  return px_dbm ? *px_dbm : amplitude_to_px(*amplitude, z0);
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

std::string_view to_string(ClockErrorCode code) {
  switch (code) {
    case ClockErrorCode::EmptyPhase: return "EmptyPhase";
    case ClockErrorCode::UnsupportedCut: return "UnsupportedCut";
    case ClockErrorCode::SkipTooLarge: return "SkipTooLarge";
    case ClockErrorCode::InfeasibleEdge: return "InfeasibleEdge";
  }
  return "UnknownError";
}

ClockError::ClockError(ClockErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

// ---------------------------------------------------------------------------
// Clock network
// ---------------------------------------------------------------------------

// The source sine is delayed so the first excitation peak of phase 0 sits at
// 0.56 / f; with offset = amplitude the drive current never goes negative.
static constexpr double kSourceDelayCycles = 0.31;
static constexpr double kPeakCycles = kSourceDelayCycles + 0.25;

ClockNetworkInfo build_clock_network(Netlist& n, std::vector<ClockPhase>& phases,
                                     const ClockSpec& clock, ExcitationMode mode) {
  if (phases.empty()) throw std::invalid_argument("clock network needs at least one phase");
  if (!(clock.f > 0.0)) throw std::invalid_argument("clock frequency must be > 0");
  if (!(clock.t_stage > 0.0)) throw std::invalid_argument("stage delay must be > 0");
  for (size_t p = 0; p < phases.size(); ++p) {
    if (phases[p].gates.empty() && !phases[p].skipped)
      throw ClockError(ClockErrorCode::EmptyPhase,
                       "phase " + std::to_string(p) + " has no gates and is not marked skipped");
    if (!phases[p].gates.empty() && phases[p].skipped)
      throw std::invalid_argument("phase " + std::to_string(p) +
                                  " marked skipped but carries gates");
  }

  ClockNetworkInfo info;
  info.amplitude = clock.resolve_amplitude();
  info.source_delay = kSourceDelayCycles / clock.f;
  double id = clock.id;
  double ramp = static_cast<double>(clock.ramp_cycles);

  // thread each phase's gates in series and record head/tail nodes
  std::vector<std::string> head(phases.size()), tail(phases.size());
  for (size_t p = 0; p < phases.size(); ++p) {
    auto& gates = phases[p].gates;
    if (gates.empty()) {
      head[p] = tail[p] = "xclk" + std::to_string(p);
      continue;
    }
    for (size_t i = 1; i < gates.size(); ++i) {
      rename_node(n.devices, gates[i].x_in, gates[i - 1].x_out);
      gates[i].x_in = gates[i - 1].x_out;
    }
    head[p] = gates.front().x_in;
    tail[p] = gates.back().x_out;
  }

  if (mode == ExcitationMode::FullLine) {
    n.devices.push_back({"iclk", {"0", head[0]},
                         CurrentSource{SineSpec{id, info.amplitude, clock.f,
                                                info.source_delay, ramp}}});
    info.sources.push_back("iclk");
    for (size_t p = 0; p + 1 < phases.size(); ++p) {
      std::string name = "tclk" + std::to_string(p + 1);
      n.devices.push_back({name, {tail[p], "0", head[p + 1], "0"},
                           TransmissionLine{clock.z0, clock.t_stage}});
      info.tlines.push_back(name);
    }
    n.devices.push_back({"rclkt", {tail.back(), "0"}, Resistor{clock.terminator}});
    info.terminators.push_back("rclkt");
  } else {
    for (size_t p = 0; p < phases.size(); ++p) {
      if (phases[p].gates.empty()) continue;
      std::string sname = "iclk" + std::to_string(p);
      std::string rname = "rclkt" + std::to_string(p);
      double delay = info.source_delay + static_cast<double>(p) * clock.t_stage;
      n.devices.push_back({sname, {"0", head[p]},
                           CurrentSource{SineSpec{id, info.amplitude, clock.f, delay, ramp}}});
      n.devices.push_back({rname, {tail[p], "0"}, Resistor{clock.terminator}});
      info.sources.push_back(sname);
      info.terminators.push_back(rname);
    }
  }
  return info;
}

double excitation_peak(int phase, const ClockSpec& clock, int cycle) {
  return (kPeakCycles + static_cast<double>(cycle)) / clock.f +
         static_cast<double>(phase) * clock.t_stage;
}

double sampling_instant(const SignalProbeSpec& probe, const ClockSpec& clock, int cycle) {
  return excitation_peak(probe.phase, clock, cycle) + probe.sample_offset;
}

// ---------------------------------------------------------------------------
// Benchmarks
// ---------------------------------------------------------------------------

namespace {

const char* kInputLabels[3] = {"a", "b", "c"};

int cut_input_count(CellKind cut) {
  switch (cut) {
    case CellKind::Buffer:
    case CellKind::Inverter: return 1;
    case CellKind::And:
    case CellKind::Or:
    case CellKind::XorMacro: return 2;
    case CellKind::Majority3: return 3;
    default: return 0;
  }
}

std::function<int(const std::vector<int>&)> cut_truth(CellKind cut) {
  switch (cut) {
    case CellKind::Buffer: return [](const std::vector<int>& b) { return b[0]; };
    case CellKind::Inverter: return [](const std::vector<int>& b) { return 1 - b[0]; };
    case CellKind::And: return [](const std::vector<int>& b) { return b[0] & b[1]; };
    case CellKind::Or: return [](const std::vector<int>& b) { return b[0] | b[1]; };
    case CellKind::XorMacro: return [](const std::vector<int>& b) { return b[0] ^ b[1]; };
    case CellKind::Majority3:
      return [](const std::vector<int>& b) { return (b[0] + b[1] + b[2]) >= 2 ? 1 : 0; };
    default: return {};
  }
}

// Appends a fragment's devices and phase-shifted gates to the harness under
// construction.
void merge_fragment(BenchmarkHarness& h, CellFragment frag, int phase) {
  for (auto& g : frag.gates) {
    g.phase += phase;
    g.probe.phase += phase;
    h.gates.push_back(std::move(g));
  }
  for (auto& d : frag.devices) h.netlist.devices.push_back(std::move(d));
}

// Standard probe set per elementary gate: signal current, excitation line
// current, and the power flowing in through both excitation primaries.
void add_gate_probes(BenchmarkHarness& h) {
  for (const auto& g : h.gates) {
    h.probes.push_back(BranchCurrentProbe{"l" + g.name + "_q"});
    h.probes.push_back(BranchCurrentProbe{"l" + g.name + "_x1"});
    h.probes.push_back(DevicePowerProbe{"l" + g.name + "_x1"});
    h.probes.push_back(DevicePowerProbe{"l" + g.name + "_x2"});
  }
}

const CellGate& find_gate(const BenchmarkHarness& h, const std::string& name) {
  for (const auto& g : h.gates)
    if (g.name == name) return g;
  throw std::logic_error("gate not found: " + name);
}

void attach_inputs(BenchmarkHarness& h, int count, const AqfpCellParams& p, double period) {
  for (int i = 0; i < count; ++i) {
    std::string label = kInputLabels[i];
    std::string source = "iin_" + label;
    h.netlist.devices.push_back(
        {source, {"0", "in_" + label},
         CurrentSource{BitSpec{"0", period, 0.1 * period, p.input_amplitude,
                               -p.input_amplitude}}});
    h.plan.inputs.push_back(label);
    h.plan.input_sources.push_back(source);
    h.plan.input_probes.push_back(find_gate(h, "g" + label).probe);
  }
}

void finish_harness(BenchmarkHarness& h, const ClockSpec& clock, ExcitationMode mode) {
  int max_phase = 0;
  for (const auto& g : h.gates) max_phase = std::max(max_phase, g.phase);
  h.phase_count = max_phase + 1;
  std::vector<ClockPhase> phases(static_cast<size_t>(h.phase_count));
  for (size_t p = 0; p < phases.size(); ++p) phases[p].skipped = true;
  // gates enter each phase in wiring order, which fixes the series thread
  for (auto& g : h.gates) {
    phases[static_cast<size_t>(g.phase)].gates.push_back(g);
    phases[static_cast<size_t>(g.phase)].skipped = false;
  }
  build_clock_network(h.netlist, phases, clock, mode);
  // copy the threaded x-port names back to the flat gate list
  h.gates.clear();
  for (auto& ph : phases)
    for (auto& g : ph.gates) h.gates.push_back(g);
  add_gate_probes(h);
}

}  // namespace

BenchmarkHarness build_benchmark(CellKind cut, const ClockSpec& clock,
                                 const AqfpCellParams& params, ExcitationMode mode) {
  int nin = cut_input_count(cut);
  if (nin == 0)
    throw ClockError(ClockErrorCode::UnsupportedCut,
                     std::string(to_string(cut)) +
                         " has no benchmark; supported cuts: buffer, inverter, and, or, "
                         "majority3, xor");
  BenchmarkHarness h;
  h.clock = clock;
  h.params = params;
  h.netlist.title = std::string("benchmark ") + std::string(to_string(cut));
  h.netlist.models[params.model.name] = params.model;
  double period = 1.0 / clock.f;

  if (cut == CellKind::XorMacro) {
    // A/B input buffers, two padding stages per input, the 3-phase macro,
    // one padding stage on the output, then Q: a 7-phase input-to-output span
    for (int i = 0; i < 2; ++i) {
      std::string la = kInputLabels[i];
      merge_fragment(h, build_cell(CellKind::Buffer, params, "g" + la, {"in_" + la},
                                   {"w" + la + "0"}),
                     0);
      merge_fragment(h, build_cell(CellKind::Buffer, params, "gp" + la + "1",
                                   {"w" + la + "0"}, {"w" + la + "1"}),
                     1);
      merge_fragment(h, build_cell(CellKind::Buffer, params, "gp" + la + "2",
                                   {"w" + la + "1"}, {"w" + la + "2"}),
                     2);
    }
    merge_fragment(h, build_cell(CellKind::XorMacro, params, "gx", {"wa2", "wb2"}, {"wq0"}), 3);
    merge_fragment(h, build_cell(CellKind::Buffer, params, "gpo", {"wq0"}, {"wq1"}), 6);
    merge_fragment(h, build_cell(CellKind::Buffer, params, "gq", {"wq1"}, {"out_q"}), 7);
    h.cut_gates = {"gxsa", "gxsb", "gxa1", "gxa2", "gxo"};
  } else {
    std::vector<std::string> cut_inputs;
    for (int i = 0; i < nin; ++i) {
      std::string la = kInputLabels[i];
      merge_fragment(h, build_cell(CellKind::Buffer, params, "g" + la, {"in_" + la},
                                   {"w" + la}),
                     0);
      cut_inputs.push_back("w" + la);
    }
    merge_fragment(h, build_cell(cut, params, "gx", cut_inputs, {"wq"}), 1);
    merge_fragment(h, build_cell(CellKind::Buffer, params, "gq", {"wq"}, {"out_q"}), 2);
    h.cut_gates = {"gx"};
  }

  attach_inputs(h, nin, params, period);
  // stand-in next-stage winding, same load the calibration fixture presents
  h.netlist.devices.push_back({"lload", {"out_q", "0"}, Inductor{params.lin}});
  h.plan.output_probe = find_gate(h, "gq").probe;
  h.plan.expected = cut_truth(cut);
  h.plan.threshold = params.threshold;
  finish_harness(h, clock, mode);
  return h;
}

BenchmarkHarness build_skip_chain(int k, const ClockSpec& clock, const AqfpCellParams& params,
                                  ExcitationMode mode) {
  if (k < 0 || k > 4)
    throw ClockError(ClockErrorCode::SkipTooLarge,
                     "skip count must be in [0, 4], got " + std::to_string(k));
  BenchmarkHarness h;
  h.clock = clock;
  h.params = params;
  h.netlist.title = "skip chain k=" + std::to_string(k);
  h.netlist.models[params.model.name] = params.model;
  double period = 1.0 / clock.f;

  // five buffers; the gap after the second stage covers k skipped phases
  int stage_phase[5] = {0, 1, 2 + k, 3 + k, 4 + k};
  std::vector<std::string> wires = {"in_a", "w1", "w2", "w3", "w4", "out_q"};
  for (int s = 0; s < 5; ++s) {
    std::string name = "g" + std::to_string(s + 1);
    merge_fragment(h, build_cell(CellKind::Buffer, params, name, {wires[s]}, {wires[s + 1]}),
                   stage_phase[s]);
  }

  h.netlist.devices.push_back(
      {"iin_a", {"0", "in_a"},
       CurrentSource{BitSpec{"0", period, 0.1 * period, params.input_amplitude,
                             -params.input_amplitude}}});
  h.plan.inputs = {"a"};
  h.plan.input_sources = {"iin_a"};
  h.plan.input_probes = {find_gate(h, "g1").probe};
  h.plan.output_probe = find_gate(h, "g5").probe;
  h.plan.expected = [](const std::vector<int>& b) { return b[0]; };
  h.plan.threshold = params.threshold;
  h.cut_gates = {"g1", "g2", "g3", "g4", "g5"};
  h.netlist.devices.push_back({"lload", {"out_q", "0"}, Inductor{params.lin}});
  finish_harness(h, clock, mode);
  return h;
}

// ---------------------------------------------------------------------------
// Phase assignment
// ---------------------------------------------------------------------------

namespace {

struct NodeInfo {
  const DagNode* node = nullptr;
  int phase = 0;
  int fanout = 0;
  bool removable = false;  // padding with fanin 1 and fanout 1
  bool removed = false;
};

}  // namespace

PhaseAssignment assign_phases(const std::vector<DagNode>& dag, double t_stage, double tmax,
                              double safety) {
  if (!(t_stage > 0.0)) throw std::invalid_argument("t_stage must be > 0");
  if (!(tmax > 0.0)) throw std::invalid_argument("tmax must be > 0");
  if (!(safety > 0.0 && safety <= 1.0))
    throw std::invalid_argument("safety must be in (0, 1]");

  std::map<std::string, NodeInfo> info;
  for (const auto& n : dag) {
    if (info.count(n.name)) throw std::invalid_argument("duplicate gate: " + n.name);
    info[n.name].node = &n;
  }
  bool any_edge = false;
  for (const auto& n : dag)
    for (const auto& in : n.inputs) {
      auto it = info.find(in);
      if (it == info.end())
        throw std::invalid_argument("gate " + n.name + " reads unknown input " + in);
      it->second.fanout += 1;
      any_edge = true;
    }

  // Kahn topological order (also the cycle check)
  std::map<std::string, int> pending;
  std::deque<const DagNode*> ready;
  for (const auto& n : dag) {
    pending[n.name] = static_cast<int>(n.inputs.size());
    if (n.inputs.empty()) ready.push_back(&n);
  }
  std::map<std::string, std::vector<const DagNode*>> consumers;
  for (const auto& n : dag)
    for (const auto& in : n.inputs) consumers[in].push_back(&n);
  std::vector<const DagNode*> order;
  while (!ready.empty()) {
    const DagNode* n = ready.front();
    ready.pop_front();
    order.push_back(n);
    for (const DagNode* c : consumers[n->name])
      if (--pending[c->name] == 0) ready.push_back(c);
  }
  if (order.size() != dag.size()) throw std::invalid_argument("gate graph has a cycle");

  // longest-path levelization
  for (const DagNode* n : order) {
    int ph = 0;
    for (const auto& in : n->inputs) ph = std::max(ph, info[in].phase + 1);
    info[n->name].phase = ph;
  }

  int gmax = static_cast<int>(std::floor(safety * tmax / t_stage + 1e-9));
  if (any_edge && gmax < 1)
    throw ClockError(ClockErrorCode::InfeasibleEdge,
                     "a single hop of " + format_quantity(t_stage) + "s exceeds " +
                         format_double(safety) + " * " + format_quantity(tmax) + "s");

  for (auto& [name, ni] : info)
    ni.removable = ni.node->padding && ni.node->inputs.size() == 1 && ni.fanout == 1;

  PhaseAssignment out;

  // walk every logical edge: non-removable node <- chain of removable pads
  for (const DagNode* v : order) {
    if (info[v->name].removable) continue;
    for (const auto& in0 : v->inputs) {
      std::vector<std::string> chain;  // removable pads, nearest-to-v first
      std::string u = in0;
      while (info[u].removable) {
        chain.push_back(u);
        u = info[u].node->inputs[0];
      }
      int span = info[v->name].phase - info[u].phase;
      int need = (span + gmax - 1) / gmax - 1;  // pads required on this edge
      out.buffers_saved += (span - 1) - need;

      // keep originals preferentially (nearest the driver first), add new ones
      std::reverse(chain.begin(), chain.end());
      std::vector<std::string> placed;
      for (int j = 0; j < need; ++j) {
        if (j < static_cast<int>(chain.size())) {
          placed.push_back(chain[j]);
        } else {
          std::string pname = "pad_" + u + "_" + v->name + "_" + std::to_string(j + 1);
          placed.push_back(pname);
        }
      }
      for (size_t j = need; j < chain.size(); ++j) {
        info[chain[j]].removed = true;
        out.removed.push_back(chain[j]);
      }
      // even spacing along the span
      std::vector<int> hop_phase;
      hop_phase.push_back(info[u].phase);
      for (int j = 1; j <= need; ++j) {
        int ph = info[u].phase +
                 static_cast<int>(std::lround(static_cast<double>(j) * span / (need + 1)));
        hop_phase.push_back(ph);
      }
      hop_phase.push_back(info[v->name].phase);
      for (int j = 0; j < need; ++j) {
        if (j < static_cast<int>(chain.size())) {
          info[placed[j]].phase = hop_phase[j + 1];
        } else {
          out.inserted.push_back({placed[j], hop_phase[j + 1]});
        }
      }
      // final hop list
      std::vector<std::string> path;
      path.push_back(u);
      for (auto& s : placed) path.push_back(s);
      path.push_back(v->name);
      for (size_t j = 0; j + 1 < path.size(); ++j) {
        PhaseEdge e;
        e.from = path[j];
        e.to = path[j + 1];
        e.gap = hop_phase[j + 1] - hop_phase[j];
        e.skew = e.gap * t_stage;
        out.edges.push_back(e);
        out.max_skew = std::max(out.max_skew, e.skew);
      }
    }
  }

  for (const auto& [name, ni] : info)
    if (!ni.removed) out.phase[name] = ni.phase;
  for (const auto& [name, ph] : out.inserted) out.phase[name] = ph;
  return out;
}

ClockSpec nominal_clock(const AqfpCellParams& params, double f, double t_stage) {
  ClockSpec c;
  c.f = f;
  c.amplitude = params.drive_amplitude;
  c.id = params.drive_dc;
  c.t_stage = t_stage;
  return c;
}

}  // namespace qfp
