#include "qfp/clocking.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "qfp/cells.hpp"
#include "qfp/engine.hpp"

using namespace qfp;

namespace {

// Parabolic refinement of a sampled argmax; the excitation is a sine, so the
// three points around the grid peak pin the true peak well below dt.
double peak_time(const Waveform& w, const std::string& column, double lo, double hi) {
  const auto& y = w.column(column);
  size_t best = 0;
  bool seen = false;
  for (size_t i = 0; i < w.samples(); ++i) {
    double t = w.time(i);
    if (t < lo || t > hi) continue;
    if (!seen || y[i] > y[best]) {
      best = i;
      seen = true;
    }
  }
  REQUIRE(seen);
  if (best == 0 || best + 1 >= w.samples()) return w.time(best);
  double ym = y[best - 1], y0 = y[best], yp = y[best + 1];
  double denom = ym - 2.0 * y0 + yp;
  if (denom == 0.0) return w.time(best);
  double shift = 0.5 * (ym - yp) / denom;
  return w.time(best) + shift * (w.time(best) - w.time(best - 1));
}

}  // namespace

TEST_CASE("px level converts to source amplitude and back") {
  // P = A^2 Z0 / 2 against 1 mW
  CHECK(px_to_amplitude(-16.0, 50.0) == doctest::Approx(1.0024e-3).epsilon(1e-3));
  CHECK(px_to_amplitude(0.0, 50.0) == doctest::Approx(6.3246e-3).epsilon(1e-3));
  for (double px = -30.0; px <= 0.0; px += 2.5) {
    CHECK(amplitude_to_px(px_to_amplitude(px, 50.0), 50.0) ==
          doctest::Approx(px).epsilon(1e-12));
  }
}

TEST_CASE("clock spec resolves whichever drive form is given") {
  ClockSpec c;
  c.f = 5e9;
  c.px_dbm = -16.0;
  CHECK(c.resolve_amplitude() == doctest::Approx(px_to_amplitude(-16.0, c.z0)));
  ClockSpec d;
  d.f = 5e9;
  d.amplitude = 2e-3;
  CHECK(d.resolve_px() == doctest::Approx(amplitude_to_px(2e-3, d.z0)));
}

TEST_CASE("excitation peaks advance by one stage delay per phase") {
  ClockSpec c;
  c.f = 5e9;
  c.t_stage = 10e-12;
  double period = 1.0 / c.f;
  for (int cycle : {0, 3}) {
    for (int phase : {0, 1, 4}) {
      double expect = 0.56 * period + cycle * period + phase * c.t_stage;
      CHECK(excitation_peak(phase, c, cycle) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  SignalProbeSpec probe;
  probe.phase = 2;
  probe.sample_offset = 1.5e-12;
  CHECK(sampling_instant(probe, c, 5) ==
        doctest::Approx(excitation_peak(2, c, 5) + 1.5e-12).epsilon(1e-12));
}

TEST_CASE("unpopulated phases must be marked skipped") {
  Netlist n;
  std::vector<ClockPhase> phases(2);
  phases[0].skipped = true;  // fine
  // phases[1] empty and not skipped
  ClockSpec c;
  c.f = 5e9;
  c.t_stage = 10e-12;
  c.amplitude = 1e-3;
  try {
    build_clock_network(n, phases, c);
    FAIL("empty unskipped phase accepted");
  } catch (const ClockError& e) {
    CHECK(e.code() == ClockErrorCode::EmptyPhase);
  }
}

TEST_CASE("skipped phases keep their delay line but carry no gates") {
  Netlist n;
  std::vector<ClockPhase> phases(5);
  AqfpCellParams p = default_cell_params();
  std::vector<CellFragment> frags;
  for (int i = 0; i < 5; ++i) {
    if (i == 3) {
      phases[i].skipped = true;
      continue;
    }
    frags.push_back(build_cell(CellKind::Buffer, p, "g" + std::to_string(i),
                               {"w" + std::to_string(i)}, {"w" + std::to_string(i + 1)}));
    n.devices.insert(n.devices.end(), frags.back().devices.begin(),
                     frags.back().devices.end());
    phases[i].gates = frags.back().gates;
  }
  ClockSpec c = nominal_clock(p, 5e9, 10e-12);
  ClockNetworkInfo info = build_clock_network(n, phases, c);
  CHECK(info.sources.size() == 1);
  CHECK(info.terminators.size() == 1);
  // four inter-phase hops survive, including the one through the skipped slot
  CHECK(info.tlines.size() == 4);
}

TEST_CASE("benchmark harnesses have the documented shape") {
  AqfpCellParams p = default_cell_params();
  ClockSpec c = nominal_clock(p, 5e9, 10e-12);

  BenchmarkHarness buf = build_benchmark(CellKind::Buffer, c, p);
  CHECK(buf.phase_count == 3);
  CHECK(buf.plan.inputs.size() == 1);
  CHECK(buf.cut_gates.size() == 1);
  CHECK(buf.plan.output_probe.phase == 2);

  BenchmarkHarness andg = build_benchmark(CellKind::And, c, p);
  CHECK(andg.phase_count == 3);
  CHECK(andg.plan.inputs.size() == 2);
  CHECK(andg.cut_gates.size() == 1);

  // input pads, three macro phases, then splitter-free output pad and sink
  BenchmarkHarness x = build_benchmark(CellKind::XorMacro, c, p);
  CHECK(x.phase_count == 8);
  CHECK(x.plan.inputs.size() == 2);
  CHECK(x.cut_gates.size() == 5);
  CHECK(x.plan.output_probe.phase == 7);
}

TEST_CASE("skip chains displace the tail gates by k phases") {
  AqfpCellParams p = default_cell_params();
  ClockSpec c = nominal_clock(p, 5e9, 20e-12);
  for (int k : {0, 2, 4}) {
    BenchmarkHarness h = build_skip_chain(k, c, p);
    CHECK(h.phase_count == 5 + k);
    REQUIRE(h.gates.size() == 5);
    CHECK(h.gates[0].phase == 0);
    CHECK(h.gates[1].phase == 1);
    CHECK(h.gates[2].phase == 2 + k);
    CHECK(h.gates[3].phase == 3 + k);
    CHECK(h.gates[4].phase == 4 + k);
  }
  try {
    build_skip_chain(5, c, p);
    FAIL("k = 5 accepted");
  } catch (const ClockError& e) {
    CHECK(e.code() == ClockErrorCode::SkipTooLarge);
  }
}

TEST_CASE("phase assignment thins padding under the skip rule") {
  std::vector<DagNode> dag;
  dag.push_back({"src", {}, false});
  for (int i = 1; i <= 5; ++i)
    dag.push_back({"p" + std::to_string(i),
                   {i == 1 ? std::string("src") : "p" + std::to_string(i - 1)},
                   true});
  dag.push_back({"dst", {"p5"}, false});

  // gmax = floor(0.8 * 70 / 10) = 5: one pad suffices for the 6-phase span
  PhaseAssignment a = assign_phases(dag, 10e-12, 70e-12, 0.8);
  CHECK(a.buffers_saved == 4);
  CHECK(a.removed.size() == 4);
  CHECK(a.inserted.empty());
  CHECK(a.phase.at("src") == 0);
  CHECK(a.phase.at("dst") == 6);
  CHECK(a.max_skew == doctest::Approx(30e-12));
  for (const auto& e : a.edges) CHECK(e.gap <= 5);

  // gmax = floor(1.0 * 70 / 20) = 3
  PhaseAssignment b = assign_phases(dag, 20e-12, 70e-12, 1.0);
  CHECK(b.buffers_saved == 4);
  int max_gap = 0;
  for (const auto& e : b.edges) max_gap = std::max(max_gap, e.gap);
  CHECK(max_gap == 3);
  CHECK(b.max_skew == doctest::Approx(60e-12));
}

TEST_CASE("phase assignment inserts repeaters on over-long bypass edges") {
  std::vector<DagNode> dag{{"a", {}, false},
                           {"b", {"a"}, false},
                           {"c", {"b"}, false},
                           {"d", {"c", "a"}, false}};
  // gmax = floor(0.5 * 70 / 20) = 1: the a->d bypass needs two repeaters
  PhaseAssignment asg = assign_phases(dag, 20e-12, 70e-12, 0.5);
  CHECK(asg.inserted.size() == 2);
  CHECK(asg.phase.at("d") == 3);
  for (const auto& e : asg.edges) CHECK(e.gap <= 1);
}

TEST_CASE("phase assignment rejects infeasible hops and cycles") {
  try {
    assign_phases({{"a", {}, false}, {"b", {"a"}, false}}, 100e-12, 70e-12, 0.8);
    FAIL("single hop above safety*tmax accepted");
  } catch (const ClockError& e) {
    CHECK(e.code() == ClockErrorCode::InfeasibleEdge);
  }
  CHECK_THROWS_AS(
      assign_phases({{"a", {"b"}, false}, {"b", {"a"}, false}}, 10e-12, 70e-12, 0.8),
      std::invalid_argument);
}

TEST_CASE("excitation arrives one stage delay apart along the line") {
  AqfpCellParams p = default_cell_params();
  double f = 5e9, period = 1.0 / f;
  ClockSpec c = nominal_clock(p, f, 10e-12);
  BenchmarkHarness h = build_benchmark(CellKind::Buffer, c, p);

  std::vector<Probe> probes;
  for (const auto& g : h.gates) probes.push_back(BranchCurrentProbe{"l" + g.name + "_x1"});
  SimConfig cfg;
  cfg.t_stop = 4.5 * period;
  Netlist n = h.netlist;
  RunResult r = run_transient(n, cfg, probes);
  REQUIRE(r.converged);

  // peaks of cycle 3, one window per phase
  double t0 = 0.0;
  for (size_t i = 0; i < h.gates.size(); ++i) {
    double nominal = excitation_peak(h.gates[i].phase, c, 3);
    double t = peak_time(r.waveform, "I(l" + h.gates[i].name + "_x1)",
                         nominal - 0.3 * period, nominal + 0.3 * period);
    if (i == 0) {
      t0 = t;
      continue;
    }
    double want = double(h.gates[i].phase) * c.t_stage;
    CHECK(std::abs((t - t0) - want) < cfg.dt);
  }
}

TEST_CASE("an unloaded line delivers the full source power to the terminator") {
  Netlist n;
  std::vector<ClockPhase> phases(1);
  phases[0].skipped = true;
  ClockSpec c;
  c.f = 5e9;
  c.amplitude = 1e-3;
  c.t_stage = 10e-12;
  ClockNetworkInfo info = build_clock_network(n, phases, c);
  double period = 1.0 / c.f;
  SimConfig cfg;
  cfg.t_stop = 6 * period;
  RunResult r = run_transient(n, cfg, {DevicePowerProbe{info.terminators[0]}});
  REQUIRE(r.converged);
  EnergyReport er = energy_accounting(r.waveform, 4 * period, 5 * period);
  double expect = 0.5 * c.resolve_amplitude() * c.resolve_amplitude() * c.z0 * period;
  CHECK(er.per_device.at(info.terminators[0]) == doctest::Approx(expect).epsilon(0.01));
}
