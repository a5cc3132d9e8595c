#include "qfp/analysis.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "qfp/cells.hpp"
#include "qfp/clocking.hpp"
#include "qfp/engine.hpp"
#include "qfp/netlist.hpp"

using namespace qfp;

namespace {

constexpr double kF = 5e9;

const AqfpCellParams& calibrated() {
  static AqfpCellParams p = [] {
    AqfpCellParams d = default_cell_params();
    return calibrate(d, nominal_clock(d, kF, 10e-12));
  }();
  return p;
}

// Bit pattern through a resistor, decoded against a synthetic probe: the
// cheapest possible end-to-end decode fixture.
RunResult pattern_run(const std::string& pattern, double level, int cycles) {
  double period = 1.0 / kF;
  Netlist n;
  n.devices.push_back(
      {"i1", {"0", "a"},
       CurrentSource{BitSpec{pattern, period, 0.02 * period, level, -level}}});
  n.devices.push_back({"l1", {"a", "0"}, Inductor{1e-12}});
  SimConfig cfg;
  cfg.t_stop = (cycles + 1) * period;
  RunResult r = run_transient(n, cfg, {BranchCurrentProbe{"l1"}});
  REQUIRE(r.converged);
  return r;
}

SignalProbeSpec direct_probe() {
  SignalProbeSpec probe;
  probe.device = "l1";
  probe.threshold = 0.5e-3;
  probe.phase = 0;
  probe.sample_offset = 0.0;
  return probe;
}

ClockSpec plain_clock() {
  ClockSpec c;
  c.f = kF;
  c.amplitude = 1e-3;
  c.t_stage = 10e-12;
  return c;
}

}  // namespace

TEST_CASE("exhaustive patterns enumerate all input combinations") {
  auto two = exhaustive_patterns(2, 4);
  REQUIRE(two.size() == 2);
  CHECK(two[0] == "00000011");
  CHECK(two[1] == "00000101");
  auto three = exhaustive_patterns(3, 2);
  REQUIRE(three.size() == 3);
  CHECK(three[0] == "0000001111");
  CHECK(three[1] == "0000110011");
  CHECK(three[2] == "0001010101");
}

TEST_CASE("prbs stream is deterministic with a 127-bit period") {
  std::string a = prbs_bits(254);
  std::string b = prbs_bits(254);
  CHECK(a == b);
  CHECK(a.substr(0, 8) == "11111110");
  CHECK(a.substr(0, 127) == a.substr(127, 127));
  CHECK(a.find('0') != std::string::npos);
  // a different seed gives a shifted sequence, not a different cycle
  std::string c = prbs_bits(127, 0x3f);
  CHECK(c != a.substr(0, 127));
}

TEST_CASE("decode reads bits off a waveform at the sampling instants") {
  RunResult r = pattern_run("0101", 1e-3, 4);
  CHECK(decode(r.waveform, direct_probe(), plain_clock(), 4) == "0101");
}

TEST_CASE("decode marks sub-threshold samples indeterminate") {
  RunResult r = pattern_run("0101", 0.2e-3, 4);  // below the 0.5 mA threshold
  CHECK(decode(r.waveform, direct_probe(), plain_clock(), 4) == "????");
}

TEST_CASE("decode rejects missing probes and short runs") {
  RunResult r = pattern_run("01", 1e-3, 2);
  SignalProbeSpec wrong = direct_probe();
  wrong.device = "l9";
  try {
    decode(r.waveform, wrong, plain_clock(), 2);
    FAIL("missing probe accepted");
  } catch (const SimError& e) {
    CHECK(e.code() == SimErrorCode::ProbeMissing);
  }
  try {
    decode(r.waveform, direct_probe(), plain_clock(), 40);
    FAIL("window past end of run accepted");
  } catch (const SimError& e) {
    CHECK(e.code() == SimErrorCode::WindowOutsideRun);
  }
}

TEST_CASE("verify passes the buffer benchmark on the probe pattern") {
  const AqfpCellParams& p = calibrated();
  ClockSpec c = nominal_clock(p, kF, 20e-12);
  BenchmarkHarness h = build_benchmark(CellKind::Buffer, c, p);
  SimConfig cfg;
  VerifyResult v = verify_logic(h, cfg, {kProbePattern});
  CHECK(v.pass);
  CHECK(v.errors == 0);
  CHECK(v.scored_bits == int(std::string(kProbePattern).size()) - h.plan.settle_cycles);
  CHECK(v.got.size() == std::string(kProbePattern).size());
  // settle prefix is unscored
  for (int i = 0; i < h.plan.settle_cycles; ++i) CHECK(v.want[i] == '-');
  CHECK(v.audit_residual < 1e-3);
}

TEST_CASE("verify reports failures under a starved drive") {
  const AqfpCellParams& p = calibrated();
  ClockSpec c = nominal_clock(p, kF, 10e-12);
  c.amplitude = 0.25 * p.drive_amplitude;
  BenchmarkHarness h = build_benchmark(CellKind::Buffer, c, p);
  SimConfig cfg;
  VerifyResult v = verify_logic(h, cfg, {kProbePattern});
  CHECK(!v.pass);
  CHECK(v.errors > 0);
  CHECK(v.first_failure_cycle >= h.plan.settle_cycles);
  CHECK(v.got.size() == v.want.size());
}

TEST_CASE("exhaustive verify covers an inverter's truth table") {
  const AqfpCellParams& p = calibrated();
  ClockSpec c = nominal_clock(p, kF, 20e-12);
  BenchmarkHarness h = build_benchmark(CellKind::Inverter, c, p);
  SimConfig cfg;
  VerifyResult v = verify_exhaustive(h, cfg);
  CHECK(v.pass);
  CHECK(v.scored_bits == 2);
}

TEST_CASE("signal latency on the buffer benchmark is two stage delays") {
  const AqfpCellParams& p = calibrated();
  double t_stage = 10e-12;
  ClockSpec c = nominal_clock(p, kF, t_stage);
  BenchmarkHarness h = build_benchmark(CellKind::Buffer, c, p);

  Netlist n = h.netlist;
  for (auto& d : n.devices) {
    if (d.name != "iin_a") continue;
    auto& src = std::get<CurrentSource>(d.body);
    auto& bits = std::get<BitSpec>(src.wave);
    bits.pattern = kProbePattern;
  }
  std::vector<Probe> probes;
  for (const auto& pr : h.probes) probes.push_back(pr);
  SimConfig cfg;
  int nbits = int(std::string(kProbePattern).size());
  cfg.t_stop = sampling_instant(h.plan.output_probe, c, nbits - 1) + 0.15 / kF;
  RunResult r = run_transient(n, cfg, probes);
  REQUIRE(r.converged);

  double lat = signal_latency(r.waveform, h.plan.input_probes[0], h.plan.output_probe,
                              c, h.plan.settle_cycles, nbits - h.plan.settle_cycles);
  CHECK(lat == doctest::Approx(2.0 * t_stage).epsilon(0.1));
}

TEST_CASE("tmax estimate rejects multi-input cuts and bad grids") {
  const AqfpCellParams& p = calibrated();
  SimConfig cfg;
  try {
    tmax_estimate(CellKind::And, kF, p, cfg);
    FAIL("multi-input cut accepted");
  } catch (const ClockError& e) {
    CHECK(e.code() == ClockErrorCode::UnsupportedCut);
  }
  CHECK_THROWS_AS(tmax_estimate(CellKind::Buffer, kF, p, cfg, -1.0), AnalysisError);
}

TEST_CASE("tmax estimate fails cleanly when no skew passes") {
  AqfpCellParams p = calibrated();
  p.input_amplitude = 1e-6;  // too weak to flip the first stage
  SimConfig cfg;
  try {
    tmax_estimate(CellKind::Buffer, kF, p, cfg, 2e-12);
    FAIL("starved input produced a tmax");
  } catch (const AnalysisError& e) {
    CHECK(e.code() == AnalysisErrorCode::NoPassingPoint);
  }
}

TEST_CASE("tmax shrinks as the clock speeds up") {
  const AqfpCellParams& p = calibrated();
  SimConfig cfg;
  double t5 = tmax_estimate(CellKind::Buffer, 5e9, p, cfg, 2.5e-12);
  double t3 = tmax_estimate(CellKind::Buffer, 3e9, p, cfg, 2.5e-12);
  CHECK(t5 > 40e-12);
  CHECK(t5 < 100e-12);
  CHECK(t3 > t5);
}

TEST_CASE("energy per op averages the input combinations") {
  const AqfpCellParams& p = calibrated();
  SimConfig cfg;
  EnergyEntry e = energy_per_op(benchmark_factory(CellKind::And, p),
                                nominal_clock(p, kF, 20e-12), cfg);
  REQUIRE(e.per_combination.size() == 4);
  double mean = 0.0;
  for (double c : e.per_combination) mean += c;
  mean /= 4.0;
  CHECK(e.energy == doctest::Approx(mean).epsilon(1e-12));
  CHECK(e.energy > 0.0);
  CHECK(e.energy_all > e.energy);  // harness pads dissipate too
  CHECK(e.audit_residual < 1e-3);
  // transformer transfer is signed for pads mid-release; the cut itself
  // must draw net energy from the line
  BenchmarkHarness h =
      benchmark_factory(CellKind::And, p)(nominal_clock(p, kF, 20e-12));
  REQUIRE(!e.per_gate.empty());
  for (const auto& g : e.per_gate) {
    if (g.gate == h.cut_gates[0]) CHECK(g.energy > 0.0);
  }
}

TEST_CASE("margin search brackets the nominal drive") {
  const AqfpCellParams& p = calibrated();
  SimConfig cfg;
  ClockSpec c = nominal_clock(p, kF, 20e-12);
  SkipScanOptions opt;
  MarginResult m = margin_search(benchmark_factory(CellKind::Buffer, p), c, cfg,
                                 10.0, 0.5);
  CHECK(m.pass);
  double px0 = c.resolve_px();
  CHECK(m.p_low <= px0);
  CHECK(m.p_high >= px0);
  CHECK(m.width_db == doctest::Approx(m.p_high - m.p_low).epsilon(1e-9));
  CHECK(m.width_db >= 3.0);
  (void)opt;
}

TEST_CASE("skip scan grid is monotone and matches the skew predictor") {
  const AqfpCellParams& p = calibrated();
  SimConfig cfg;
  SkipScanOptions opt;
  opt.jobs = 3;
  SkipFeasibilityMatrix m =
      skip_scan({20e-12}, {0, 2, 4}, kF, p, cfg, opt);
  REQUIRE(m.cells.size() == 3);
  CHECK(m.tmax > 40e-12);
  CHECK(m.cell(0, 0).pass);
  CHECK(!m.cell(0, 2).pass);
  for (const auto& cell : m.cells) CHECK(cell.error.empty());
  CHECK(m.monotone_in_k());
  CHECK(m.predictor_agreement() == doctest::Approx(1.0));
}

TEST_CASE("skip scan rejects an empty grid") {
  const AqfpCellParams& p = calibrated();
  SimConfig cfg;
  CHECK_THROWS_AS(skip_scan({}, {0}, kF, p, cfg, {}), AnalysisError);
}

TEST_CASE("max passing frequency validates its bracket") {
  const AqfpCellParams& p = calibrated();
  SimConfig cfg;
  CHECK_THROWS_AS(max_passing_frequency(0, 20e-12, p, cfg, 8e9, 2e9), AnalysisError);
}

TEST_CASE("edp rows multiply exactly and sort ascending") {
  auto rows = edp_builtin_rows();
  REQUIRE(rows.size() == 3);
  std::vector<EdpEntry> table = edp(rows);
  for (size_t i = 1; i < table.size(); ++i) CHECK(table[i - 1].edp <= table[i].edp);
  for (const auto& row : table) CHECK(row.edp == row.energy * row.delay);

  // the delay-line and four-phase entries share the energy and differ in delay
  CHECK(table[0].energy == doctest::Approx(2.8e-21));
  CHECK(table[0].delay == doctest::Approx(10e-12));
  CHECK(table[0].edp == doctest::Approx(2.8e-32).epsilon(1e-12));
  CHECK(table[1].edp == doctest::Approx(1.4e-31).epsilon(1e-12));
  CHECK(table[2].edp == doctest::Approx(6.8e-29).epsilon(1e-12));
}
