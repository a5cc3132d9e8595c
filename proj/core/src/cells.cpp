#include "qfp/cells.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "json.hpp"
#include "qfp/engine.hpp"
#include "qfp/numeric.hpp"

namespace qfp {

namespace {

using nlohmann::json;

constexpr double kHalfPhi0 = 0.5 * kPhi0;

// Outer-loop mutual per ampere of excitation current: the ac (and dc) flux
// threading the full gate loop is kx * (sqrt(lx1*l1) + sqrt(lx2*l2)) * I_x.
double excitation_mutual(const AqfpCellParams& p) {
  return p.kx * (std::sqrt(p.lx1 * p.l1) + std::sqrt(p.lx2 * p.l2));
}

// Steady-state signal current at full excitation: the common-mode phase c
// settles in the well c = beta_q * sin(c) and I_st = 2 Ic sin(c), with
// beta_q = (Lavg + 2 Lq) Ic / (Phi0 / 2pi).
double analytic_ist(const AqfpCellParams& p) {
  double phi0bar = kPhi0 / (2.0 * std::acos(-1.0));
  double beta_q = (0.5 * (p.l1 + p.l2) + 2.0 * p.lq) * p.model.critical_current / phi0bar;
  if (beta_q <= 1.0) return 0.0;  // no bifurcation, no storage
  double c = 2.0;
  for (int i = 0; i < 60; ++i) {
    double f = c - beta_q * std::sin(c);
    double fp = 1.0 - beta_q * std::cos(c);
    double step = f / fp;
    c -= step;
    if (std::abs(step) < 1e-14) break;
  }
  return 2.0 * p.model.critical_current * std::sin(c);
}

bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0.0; }

// One elementary two-junction gate: grounded junctions joined by l1/l2 with
// the load lq at the center tap, excitation primaries in series between
// x-ports, one grounded input winding per input, one or more grounded
// output windings coupled to lq.
struct GateSpec {
  std::string instance;
  std::vector<std::string> in_ports;
  std::vector<double> in_signs;   // +1 plain, -1 inverted input
  std::vector<std::string> out_ports;
  double out_sign = 1.0;          // -1 builds an inverter
  int phase = 0;
};

void append_gate(const AqfpCellParams& p, const GateSpec& g, CellFragment& frag) {
  const std::string& gi = g.instance;
  std::string n1 = gi + "_1", n2 = gi + "_2", nq = gi + "_q";
  std::string xa = gi + "_xa", xm = gi + "_xm", xb = gi + "_xb";
  auto& dv = frag.devices;

  dv.push_back({"b" + gi + "_1", {n1, "0"}, Junction{p.model.name, 1.0}});
  dv.push_back({"b" + gi + "_2", {n2, "0"}, Junction{p.model.name, 1.0}});
  dv.push_back({"l" + gi + "_1", {n1, nq}, Inductor{p.l1}});
  dv.push_back({"l" + gi + "_2", {nq, n2}, Inductor{p.l2}});
  dv.push_back({"l" + gi + "_q", {nq, "0"}, Inductor{p.lq}});
  dv.push_back({"l" + gi + "_x1", {xa, xm}, Inductor{p.lx1}});
  dv.push_back({"l" + gi + "_x2", {xm, xb}, Inductor{p.lx2}});
  dv.push_back({"k" + gi + "_x1", {}, MutualCoupling{"l" + gi + "_x1", "l" + gi + "_1", p.kx}});
  dv.push_back({"k" + gi + "_x2", {}, MutualCoupling{"l" + gi + "_x2", "l" + gi + "_2", p.kx}});

  for (size_t i = 0; i < g.in_ports.size(); ++i) {
    std::string idx = std::to_string(i + 1);
    std::string lw = "l" + gi + "_in" + idx;
    double s = g.in_signs[i] * p.kin;
    dv.push_back({lw, {g.in_ports[i], "0"}, Inductor{p.lin}});
    dv.push_back({"k" + gi + "_i" + idx + "a", {}, MutualCoupling{lw, "l" + gi + "_1", s}});
    dv.push_back({"k" + gi + "_i" + idx + "b", {}, MutualCoupling{lw, "l" + gi + "_2", -s}});
  }

  if (g.out_ports.size() == 1) {
    dv.push_back({"l" + gi + "_out", {g.out_ports[0], "0"}, Inductor{p.lout}});
    dv.push_back({"k" + gi + "_o", {},
                  MutualCoupling{"l" + gi + "_q", "l" + gi + "_out", g.out_sign * p.kout}});
  } else {
    // Per-branch coupling shrinks with fanout so an n-way output reflects the
    // same load into the storage loop as a single output winding would. The
    // effective beta of every gate then stays uniform across the netlist.
    double kb = p.kout / std::sqrt(static_cast<double>(g.out_ports.size()));
    for (size_t j = 0; j < g.out_ports.size(); ++j) {
      std::string idx = std::to_string(j + 1);
      dv.push_back({"l" + gi + "_o" + idx, {g.out_ports[j], "0"}, Inductor{p.lout}});
      dv.push_back({"k" + gi + "_o" + idx, {},
                    MutualCoupling{"l" + gi + "_q", "l" + gi + "_o" + idx, g.out_sign * kb}});
    }
  }

  CellGate gate;
  gate.name = gi;
  gate.phase = g.phase;
  gate.x_in = xa;
  gate.x_out = xb;
  gate.probe = SignalProbeSpec{gi, "l" + gi + "_q", p.threshold, g.phase, 0.0};
  frag.gates.push_back(std::move(gate));
}

void append_constant(const AqfpCellParams& p, const std::string& instance, int polarity,
                     const std::string& port, CellFragment& frag) {
  double value = (polarity >= 0 ? 1.0 : -1.0) * p.const_amplitude;
  frag.devices.push_back({"i" + instance, {"0", port}, CurrentSource{DcSpec{value, 0.0}}});
}

std::vector<double> input_signs(size_t arity, const std::vector<bool>& invert,
                                const std::string& what) {
  if (!invert.empty() && invert.size() != arity)
    throw CellError(CellErrorCode::ArityMismatch,
                    what + ": invert_inputs size " + std::to_string(invert.size()) +
                        " does not match arity " + std::to_string(arity));
  std::vector<double> signs(arity, 1.0);
  for (size_t i = 0; i < invert.size(); ++i)
    if (invert[i]) signs[i] = -1.0;
  return signs;
}

void require_arity(CellKind kind, size_t nin, size_t nout, size_t want_in, size_t want_out) {
  if (nin != want_in || nout != want_out)
    throw CellError(CellErrorCode::ArityMismatch,
                    std::string(to_string(kind)) + " takes " + std::to_string(want_in) +
                        " input(s) and " + std::to_string(want_out) + " output(s), got " +
                        std::to_string(nin) + "/" + std::to_string(nout));
}

void check_calibration_invariant(const AqfpCellParams& p) {
  double m = excitation_mutual(p);
  double ac = m * p.drive_amplitude;
  double dc = m * p.drive_dc;
  auto off = [](double flux) { return std::abs(flux - kHalfPhi0) / kHalfPhi0; };
  if (off(ac) > 0.05 || off(dc) > 0.05)
    throw CellError(CellErrorCode::UncalibratedParams,
                    "excitation flux off target: ac " + format_quantity(ac) + " Wb, dc " +
                        format_quantity(dc) + " Wb, target " + format_quantity(kHalfPhi0) +
                        " Wb (run calibrate)");
}

json params_to_json_obj(const AqfpCellParams& p) {
  json j;
  j["model"] = {{"name", p.model.name},
                {"critical_current", p.model.critical_current},
                {"capacitance", p.model.capacitance},
                {"r_subgap", p.model.r_subgap},
                {"r_normal", p.model.r_normal},
                {"v_gap", p.model.v_gap}};
  j["inductances"] = {{"l1", p.l1},   {"l2", p.l2},   {"lq", p.lq},  {"lx1", p.lx1},
                      {"lx2", p.lx2}, {"lin", p.lin}, {"lout", p.lout}};
  j["couplings"] = {{"kx", p.kx}, {"kin", p.kin}, {"kout", p.kout}};
  j["drive"] = {{"amplitude", p.drive_amplitude},
                {"dc", p.drive_dc},
                {"input_amplitude", p.input_amplitude},
                {"const_amplitude", p.const_amplitude}};
  j["decode"] = {{"ist_nominal", p.ist_nominal}, {"threshold", p.threshold}};
  return j;
}

}  // namespace

std::string_view to_string(CellKind k) {
  switch (k) {
    case CellKind::Buffer: return "buffer";
    case CellKind::Inverter: return "inverter";
    case CellKind::ConstantBranch: return "constant";
    case CellKind::Splitter: return "splitter";
    case CellKind::Majority3: return "majority3";
    case CellKind::And: return "and";
    case CellKind::Or: return "or";
    case CellKind::XorMacro: return "xor";
  }
  return "unknown";
}

std::optional<CellKind> parse_cell_kind(std::string_view name) {
  std::string s = to_lower(name);
  if (s == "buffer" || s == "buf") return CellKind::Buffer;
  if (s == "inverter" || s == "not" || s == "inv") return CellKind::Inverter;
  if (s == "constant" || s == "const" || s == "constant_branch") return CellKind::ConstantBranch;
  if (s == "splitter" || s == "split") return CellKind::Splitter;
  if (s == "majority3" || s == "maj3" || s == "majority") return CellKind::Majority3;
  if (s == "and") return CellKind::And;
  if (s == "or") return CellKind::Or;
  if (s == "xor" || s == "xor_macro") return CellKind::XorMacro;
  return std::nullopt;
}

std::string_view to_string(CellErrorCode code) {
  switch (code) {
    case CellErrorCode::ArityMismatch: return "ArityMismatch";
    case CellErrorCode::InvalidParams: return "InvalidParams";
    case CellErrorCode::UncalibratedParams: return "UncalibratedParams";
    case CellErrorCode::CalibrationFailed: return "CalibrationFailed";
  }
  return "UnknownError";
}

CellError::CellError(CellErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

AqfpCellParams default_cell_params() {
  AqfpCellParams p;
  p.model.name = "jjfp";
  p.model.critical_current = 50e-6;
  p.model.capacitance = 0.15e-12;
  p.model.r_subgap = 100.0;
  // normal resistance from the gap voltage: Ic * Rn close to pi * Vg / 4
  p.model.r_normal = 44.0;
  p.model.v_gap = 2.8e-3;
  p.l1 = 1.6e-12;
  p.l2 = 1.6e-12;
  p.lq = 8e-12;
  // The two transformer halves are deliberately mismatched. A perfectly
  // symmetric pair would let a noiseless simulation resolve arbitrarily small
  // input residues, giving the gate an unphysical infinite retention time.
  // The imbalance acts as a deterministic decision floor, standing in for the
  // noise floor of real devices, and sets how long a held output can still
  // steer a late receiver.
  p.lx1 = 1.3385e-12;
  p.lx2 = 1.3015e-12;
  p.kx = 0.5;
  // The output transformer is strong on purpose. Its reflected load shallows
  // the storage wells (effective beta drops from 2.67 bare to about 1.4 for a
  // loaded stage), which is what keeps the per-cycle dissipation at the
  // zeptojoule scale: deep wells shed their depth as plasma ringing at every
  // window close. The ratio lout/lin also sets the signal tilt one stage
  // hands the next, about 0.41 of the signal current.
  p.lin = 7e-12;
  p.kin = 0.3;
  p.lout = 17e-12;
  p.kout = 0.85;
  p.drive_amplitude = kHalfPhi0 / excitation_mutual(p);
  p.drive_dc = p.drive_amplitude;
  // matched to the interior link tilt so the first gate of a chain sees the
  // same drive as any later stage
  p.input_amplitude = 44e-6;
  // matched to the tilt of one splitter branch, so the fixed minority input
  // of an and/or gate carries the same weight as a live input routed through
  // a splitter
  p.const_amplitude = 31e-6;
  p.ist_nominal = analytic_ist(p);
  p.threshold = 0.2 * p.ist_nominal;
  return p;
}

void validate_cell_params(const AqfpCellParams& p) {
  auto bad = [](const std::string& what) {
    throw CellError(CellErrorCode::InvalidParams, what);
  };
  auto pos = [&](double v, const char* name) {
    if (!(std::isfinite(v) && v > 0.0)) bad(std::string(name) + " must be > 0");
  };
  pos(p.l1, "l1");
  pos(p.l2, "l2");
  pos(p.lq, "lq");
  pos(p.lx1, "lx1");
  pos(p.lx2, "lx2");
  pos(p.lin, "lin");
  pos(p.lout, "lout");
  for (auto [k, name] : {std::pair{p.kx, "kx"}, {p.kin, "kin"}, {p.kout, "kout"}}) {
    if (!(std::isfinite(k) && std::abs(k) < 1.0))
      bad(std::string(name) + " must satisfy |k| < 1");
  }
  if (p.model.name.empty()) bad("model name empty");
  pos(p.model.critical_current, "model.critical_current");
  pos(p.model.capacitance, "model.capacitance");
  pos(p.model.r_subgap, "model.r_subgap");
  pos(p.model.r_normal, "model.r_normal");
  pos(p.model.v_gap, "model.v_gap");
  for (auto [v, name] : {std::pair{p.drive_amplitude, "drive_amplitude"},
                         {p.drive_dc, "drive_dc"},
                         {p.input_amplitude, "input_amplitude"},
                         {p.const_amplitude, "const_amplitude"},
                         {p.ist_nominal, "ist_nominal"},
                         {p.threshold, "threshold"}}) {
    if (!finite_nonneg(v)) bad(std::string(name) + " must be finite and >= 0");
  }
}

std::string cell_params_to_json(const AqfpCellParams& p) {
  return params_to_json_obj(p).dump(2) + "\n";
}

AqfpCellParams cell_params_from_json(std::string_view text) {
  AqfpCellParams p;
  try {
    json j = json::parse(text);
    const json& m = j.at("model");
    p.model.name = m.at("name").get<std::string>();
    p.model.critical_current = m.at("critical_current").get<double>();
    p.model.capacitance = m.at("capacitance").get<double>();
    p.model.r_subgap = m.at("r_subgap").get<double>();
    p.model.r_normal = m.at("r_normal").get<double>();
    p.model.v_gap = m.at("v_gap").get<double>();
    const json& l = j.at("inductances");
    p.l1 = l.at("l1").get<double>();
    p.l2 = l.at("l2").get<double>();
    p.lq = l.at("lq").get<double>();
    p.lx1 = l.at("lx1").get<double>();
    p.lx2 = l.at("lx2").get<double>();
    p.lin = l.at("lin").get<double>();
    p.lout = l.at("lout").get<double>();
    const json& k = j.at("couplings");
    p.kx = k.at("kx").get<double>();
    p.kin = k.at("kin").get<double>();
    p.kout = k.at("kout").get<double>();
    const json& d = j.at("drive");
    p.drive_amplitude = d.at("amplitude").get<double>();
    p.drive_dc = d.at("dc").get<double>();
    p.input_amplitude = d.at("input_amplitude").get<double>();
    p.const_amplitude = d.at("const_amplitude").get<double>();
    const json& dec = j.at("decode");
    p.ist_nominal = dec.at("ist_nominal").get<double>();
    p.threshold = dec.at("threshold").get<double>();
  } catch (const json::exception& e) {
    throw CellError(CellErrorCode::InvalidParams,
                    std::string("cell parameter json: ") + e.what());
  }
  validate_cell_params(p);
  return p;
}

void rename_node(std::vector<Device>& devices, const std::string& from, const std::string& to) {
  for (auto& d : devices)
    for (auto& t : d.terminals)
      if (t == from) t = to;
}

CellFragment build_cell(CellKind kind, const AqfpCellParams& p, const std::string& instance,
                        const std::vector<std::string>& inputs,
                        const std::vector<std::string>& outputs,
                        const std::vector<bool>& invert_inputs, int constant_polarity) {
  validate_cell_params(p);
  if (instance.empty())
    throw CellError(CellErrorCode::InvalidParams, "instance name empty");
  if (kind != CellKind::ConstantBranch) {
    if (!(p.threshold > 0.0))
      throw CellError(CellErrorCode::InvalidParams, "threshold must be > 0 (run calibrate)");
    check_calibration_invariant(p);
  }
  std::string gi = to_lower(instance);

  CellFragment frag;
  frag.inputs = inputs;
  frag.outputs = outputs;

  switch (kind) {
    case CellKind::Buffer:
    case CellKind::Inverter: {
      require_arity(kind, inputs.size(), outputs.size(), 1, 1);
      GateSpec g{gi, inputs, input_signs(1, invert_inputs, "buffer"), outputs,
                 kind == CellKind::Inverter ? -1.0 : 1.0, 0};
      append_gate(p, g, frag);
      break;
    }
    case CellKind::ConstantBranch: {
      require_arity(kind, inputs.size(), outputs.size(), 0, 1);
      if (constant_polarity != 1 && constant_polarity != -1)
        throw CellError(CellErrorCode::InvalidParams, "constant polarity must be +1 or -1");
      append_constant(p, gi, constant_polarity, outputs[0], frag);
      break;
    }
    case CellKind::Splitter: {
      if (inputs.size() != 1 || outputs.size() < 2 || outputs.size() > 3)
        throw CellError(CellErrorCode::ArityMismatch,
                        "splitter takes 1 input and 2 or 3 outputs, got " +
                            std::to_string(inputs.size()) + "/" + std::to_string(outputs.size()));
      GateSpec g{gi, inputs, input_signs(1, invert_inputs, "splitter"), outputs, 1.0, 0};
      append_gate(p, g, frag);
      break;
    }
    case CellKind::Majority3: {
      require_arity(kind, inputs.size(), outputs.size(), 3, 1);
      GateSpec g{gi, inputs, input_signs(3, invert_inputs, "majority3"), outputs, 1.0, 0};
      append_gate(p, g, frag);
      break;
    }
    case CellKind::And:
    case CellKind::Or: {
      require_arity(kind, inputs.size(), outputs.size(), 2, 1);
      auto signs = input_signs(2, invert_inputs, "and/or");
      std::string cw = gi + "_c";
      GateSpec g{gi, {inputs[0], inputs[1], cw}, {signs[0], signs[1], 1.0}, outputs, 1.0, 0};
      append_gate(p, g, frag);
      append_constant(p, gi + "_c", kind == CellKind::Or ? 1 : -1, cw, frag);
      break;
    }
    case CellKind::XorMacro: {
      require_arity(kind, inputs.size(), outputs.size(), 2, 1);
      auto signs = input_signs(2, invert_inputs, "xor");
      std::vector<bool> inv_a{signs[0] < 0}, inv_b{signs[1] < 0};
      CellFragment x = expand_xor(gi, p, inputs[0], inputs[1], outputs[0]);
      if (inv_a[0]) {
        // flip the a splitter's input coupling
        for (auto& d : x.devices)
          if (d.name == "k" + gi + "sa_i1a" || d.name == "k" + gi + "sa_i1b")
            std::get<MutualCoupling>(d.body).k *= -1.0;
      }
      if (inv_b[0]) {
        for (auto& d : x.devices)
          if (d.name == "k" + gi + "sb_i1a" || d.name == "k" + gi + "sb_i1b")
            std::get<MutualCoupling>(d.body).k *= -1.0;
      }
      return x;
    }
  }
  return frag;
}

CellFragment expand_xor(const std::string& instance, const AqfpCellParams& p,
                        const std::string& input_a, const std::string& input_b,
                        const std::string& output) {
  std::string gi = to_lower(instance);
  std::string wa1 = gi + "_a1", wa2 = gi + "_a2";
  std::string wb1 = gi + "_b1", wb2 = gi + "_b2";
  std::string wm1 = gi + "_m1", wm2 = gi + "_m2";

  CellFragment frag;
  frag.inputs = {input_a, input_b};
  frag.outputs = {output};
  frag.phase_span = 3;

  auto merge = [&frag](CellFragment part, int phase) {
    for (auto& g : part.gates) {
      g.phase += phase;
      g.probe.phase += phase;
      frag.gates.push_back(std::move(g));
    }
    for (auto& d : part.devices) frag.devices.push_back(std::move(d));
  };

  merge(build_cell(CellKind::Splitter, p, gi + "sa", {input_a}, {wa1, wa2}), 0);
  merge(build_cell(CellKind::Splitter, p, gi + "sb", {input_b}, {wb1, wb2}), 0);
  // and(a, not b) and and(not a, b)
  merge(build_cell(CellKind::And, p, gi + "a1", {wa1, wb1}, {wm1}, {false, true}), 1);
  merge(build_cell(CellKind::And, p, gi + "a2", {wa2, wb2}, {wm2}, {true, false}), 1);
  merge(build_cell(CellKind::Or, p, gi + "o", {wm1, wm2}, {output}), 2);
  return frag;
}

AqfpCellParams calibrate(const AqfpCellParams& params, const ClockSpec& clock,
                         CalibrationReport* report) {
  const AqfpCellParams& p = params;
  validate_cell_params(p);
  if (!(clock.f > 0.0) || !(clock.terminator > 0.0))
    throw CellError(CellErrorCode::InvalidParams, "clock needs f > 0 and terminator > 0");

  const double f = clock.f;
  const double period = 1.0 / f;
  // seed from the analytic mutual when no drive level is given
  double mutual = excitation_mutual(p);
  double seed = mutual > 0.0 ? kHalfPhi0 / mutual : 1e-3;
  double amp = params.drive_amplitude > 0.0 ? params.drive_amplitude : seed;
  double dc = params.drive_dc > 0.0 ? params.drive_dc : seed;

  auto fixture = [&](bool with_input, double a, double d) {
    Netlist n;
    n.title = "calibration fixture";
    n.models[p.model.name] = p.model;
    CellFragment frag;
    GateSpec g{"cal", {"w_in"}, {1.0}, {"w_out"}, 1.0, 0};
    append_gate(p, g, frag);
    n.devices = std::move(frag.devices);
    rename_node(n.devices, "cal_xa", "xh");
    rename_node(n.devices, "cal_xb", "xt");
    n.devices.push_back({"iclk", {"0", "xh"},
                         CurrentSource{SineSpec{d, a, f, 0.31 * period,
                                                static_cast<double>(clock.ramp_cycles)}}});
    n.devices.push_back({"rterm", {"xt", "0"}, Resistor{clock.terminator}});
    // next-stage input winding standing in for the real load
    n.devices.push_back({"lload", {"w_out", "0"}, Inductor{p.lin}});
    if (with_input)
      n.devices.push_back({"iin", {"0", "w_in"},
                           CurrentSource{DcSpec{p.input_amplitude, period}}});
    return n;
  };

  SimConfig cfg;
  cfg.dt = std::min(1e-13, period / 2000.0);

  // stage 1: scale the source until the loop flux hits 0.5 Phi0 ac and dc
  auto measure_flux = [&](double a, double d) {
    cfg.t_stop = 4.5 * period;
    RunResult r = run_transient(fixture(false, a, d), cfg,
                                {BranchCurrentProbe{"lcal_x1"}, BranchCurrentProbe{"lcal_x2"}});
    if (!r.converged)
      throw CellError(CellErrorCode::CalibrationFailed, "flux run diverged: " + r.error);
    const auto& i1 = r.waveform.column("I(lcal_x1)");
    const auto& i2 = r.waveform.column("I(lcal_x2)");
    double m1 = p.kx * std::sqrt(p.lx1 * p.l1);
    double m2 = p.kx * std::sqrt(p.lx2 * p.l2);
    double lo = 3.3 * period, hi = 4.3 * period;
    double fmin = 0.0, fmax = 0.0, fsum = 0.0;
    size_t count = 0;
    for (size_t i = 0; i < r.waveform.samples(); ++i) {
      double t = r.waveform.time(i);
      if (t < lo || t > hi) continue;
      double flux = m1 * i1[i] + m2 * i2[i];
      if (count == 0) fmin = fmax = flux;
      fmin = std::min(fmin, flux);
      fmax = std::max(fmax, flux);
      fsum += flux;
      ++count;
    }
    return std::pair{0.5 * (fmax - fmin), fsum / static_cast<double>(count)};
  };

  double ac_meas = 0.0, dc_meas = 0.0;
  int iters = 0;
  for (;; ++iters) {
    if (!(amp > 1e-6 && amp < 1.0) || !(dc > 1e-6 && dc < 1.0))
      throw CellError(CellErrorCode::CalibrationFailed,
                      "drive level out of range: amplitude " + format_quantity(amp) + " A, dc " +
                          format_quantity(dc) + " A");
    std::tie(ac_meas, dc_meas) = measure_flux(amp, dc);
    if (!(ac_meas > 1e-3 * kHalfPhi0) || !(dc_meas > 1e-3 * kHalfPhi0))
      throw CellError(CellErrorCode::CalibrationFailed,
                      "no excitation flux reaches the loop (kx or lx too small)");
    double ac_err = std::abs(ac_meas - kHalfPhi0) / kHalfPhi0;
    double dc_err = std::abs(dc_meas - kHalfPhi0) / kHalfPhi0;
    if (ac_err <= 0.005 && dc_err <= 0.005) break;
    if (iters >= 3 && ac_err <= 0.02 && dc_err <= 0.02) break;
    if (iters >= 5)
      throw CellError(CellErrorCode::CalibrationFailed,
                      "flux calibration did not settle within 2%: ac off by " +
                          format_double(ac_err * 100.0) + "%, dc off by " +
                          format_double(dc_err * 100.0) + "%");
    amp *= kHalfPhi0 / ac_meas;
    dc *= kHalfPhi0 / dc_meas;
  }

  // stage 2: measure the signal-current plateau under a logic-1 input
  cfg.t_stop = 4.8 * period;
  RunResult r = run_transient(fixture(true, amp, dc), cfg, {BranchCurrentProbe{"lcal_q"}});
  if (!r.converged)
    throw CellError(CellErrorCode::CalibrationFailed, "signal run diverged: " + r.error);
  double t_sample = (0.31 + 0.25) * period + 4.0 * period;
  double ist = r.waveform.at("I(lcal_q)", t_sample);
  if (!(ist > 1e-7))
    throw CellError(CellErrorCode::CalibrationFailed,
                    "no positive signal current for a logic-1 input (got " +
                        format_quantity(ist) + " A)");

  AqfpCellParams out = params;
  out.drive_amplitude = amp;
  out.drive_dc = dc;
  out.ist_nominal = ist;
  out.threshold = 0.2 * ist;
  if (report) {
    *report = CalibrationReport{};
    report->ac_flux_phi0 = ac_meas / kPhi0;
    report->dc_flux_phi0 = dc_meas / kPhi0;
    report->drive_amplitude = amp;
    report->drive_dc = dc;
    report->px_dbm = amplitude_to_px(amp, clock.z0);
    report->ist_nominal = ist;
    report->threshold = out.threshold;
    report->iterations = iters + 1;
  }
  return out;
}

}  // namespace qfp
