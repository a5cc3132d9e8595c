#include "qfp/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>
#include <variant>

namespace qfp {

const char* const kProbePattern = "0000110101";

std::string_view to_string(AnalysisErrorCode code) {
  switch (code) {
    case AnalysisErrorCode::NoPassingPoint: return "NoPassingPoint";
    case AnalysisErrorCode::BadGrid: return "BadGrid";
  }
  return "?";
}

AnalysisError::AnalysisError(AnalysisErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

// ---------------------------------------------------------------------------
// Patterns
// ---------------------------------------------------------------------------

std::vector<std::string> exhaustive_patterns(int n_inputs, int settle_cycles) {
  if (n_inputs < 1 || n_inputs > 16)
    throw AnalysisError(AnalysisErrorCode::BadGrid,
                        "exhaustive pattern arity " + std::to_string(n_inputs));
  int combos = 1 << n_inputs;
  std::vector<std::string> out(static_cast<size_t>(n_inputs));
  for (int i = 0; i < n_inputs; ++i) {
    std::string& s = out[static_cast<size_t>(i)];
    s.assign(static_cast<size_t>(settle_cycles), '0');
    for (int c = 0; c < combos; ++c)
      s += char('0' + ((c >> (n_inputs - 1 - i)) & 1));
  }
  return out;
}

std::string prbs_bits(int length, unsigned seed) {
  unsigned state = seed & 0x7fu;
  if (state == 0) state = 0x7fu;
  std::string out;
  out.reserve(static_cast<size_t>(std::max(length, 0)));
  for (int i = 0; i < length; ++i) {
    out += char('0' + ((state >> 6) & 1u));
    unsigned feedback = ((state >> 6) ^ (state >> 5)) & 1u;
    state = ((state << 1) | feedback) & 0x7fu;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Decode and verify
// ---------------------------------------------------------------------------

std::string decode(const Waveform& w, const SignalProbeSpec& probe,
                   const ClockSpec& clock, int cycles) {
  std::string label = "I(" + probe.device + ")";
  if (!w.has_column(label))
    throw SimError(SimErrorCode::ProbeMissing, "decode probe " + label);
  double t_end = w.samples() ? w.time(w.samples() - 1) : 0.0;
  std::string bits;
  for (int c = 0; c < cycles; ++c) {
    double ts = sampling_instant(probe, clock, c);
    if (ts > t_end)
      throw SimError(SimErrorCode::WindowOutsideRun,
                     "sampling instant of cycle " + std::to_string(c) + " past run end");
    double i = w.at(label, ts);
    bits += i > probe.threshold ? '1' : (i < -probe.threshold ? '0' : '?');
  }
  return bits;
}

namespace {

void apply_bit_patterns(Netlist& n, const LogicTestPlan& plan,
                        const std::vector<std::string>& patterns) {
  for (size_t i = 0; i < plan.input_sources.size(); ++i) {
    for (auto& d : n.devices) {
      if (d.name != plan.input_sources[i]) continue;
      auto* cs = std::get_if<CurrentSource>(&d.body);
      if (!cs) continue;
      if (auto* bs = std::get_if<BitSpec>(&cs->wave)) bs->pattern = patterns[i];
    }
  }
}

void apply_dc_levels(Netlist& n, const LogicTestPlan& plan, const std::vector<int>& bits) {
  for (size_t i = 0; i < plan.input_sources.size(); ++i) {
    for (auto& d : n.devices) {
      if (d.name != plan.input_sources[i]) continue;
      auto* cs = std::get_if<CurrentSource>(&d.body);
      if (!cs) continue;
      if (auto* bs = std::get_if<BitSpec>(&cs->wave))
        cs->wave = DcSpec{bits[i] ? bs->high : bs->low, 0.0};
    }
  }
}

double verify_stop_time(const BenchmarkHarness& h, size_t nbits) {
  double period = 1.0 / h.clock.f;
  return sampling_instant(h.plan.output_probe, h.clock, static_cast<int>(nbits) - 1) +
         0.75 * period;
}

}  // namespace

VerifyResult verify_logic(const BenchmarkHarness& h, const SimConfig& config,
                          const std::vector<std::string>& patterns) {
  VerifyResult r;
  if (patterns.size() != h.plan.input_sources.size())
    throw AnalysisError(AnalysisErrorCode::BadGrid,
                        "pattern count " + std::to_string(patterns.size()) + " for " +
                            std::to_string(h.plan.input_sources.size()) + " inputs");
  size_t nbits = patterns.empty() ? 0 : patterns[0].size();
  for (const auto& p : patterns)
    if (p.size() != nbits)
      throw AnalysisError(AnalysisErrorCode::BadGrid, "ragged pattern lengths");

  Netlist n = h.netlist;
  apply_bit_patterns(n, h.plan, patterns);
  SimConfig cfg = config;
  if (cfg.t_stop <= 0.0) cfg.t_stop = verify_stop_time(h, nbits);

  RunResult rr = run_transient(n, cfg, h.probes);
  int settle = h.plan.settle_cycles;
  r.scored_bits = static_cast<int>(nbits) - settle;
  if (!rr.converged) {
    r.pass = false;
    r.errors = r.scored_bits;
    r.diagnostic = rr.error;
    return r;
  }
  r.audit_residual = rr.audit.relative_residual();
  r.got = decode(rr.waveform, h.plan.output_probe, h.clock, static_cast<int>(nbits));
  r.want.assign(static_cast<size_t>(settle), '-');
  for (size_t b = static_cast<size_t>(settle); b < nbits; ++b) {
    std::vector<int> combo;
    combo.reserve(patterns.size());
    for (const auto& p : patterns) combo.push_back(p[b] - '0');
    r.want += char('0' + h.plan.expected(combo));
  }
  r.pass = true;
  for (size_t b = static_cast<size_t>(settle); b < nbits; ++b) {
    if (r.got[b] == r.want[b]) continue;
    r.pass = false;
    ++r.errors;
    if (r.first_failure_cycle < 0) r.first_failure_cycle = static_cast<int>(b);
  }
  return r;
}

VerifyResult verify_exhaustive(const BenchmarkHarness& h, const SimConfig& config) {
  auto patterns =
      exhaustive_patterns(static_cast<int>(h.plan.inputs.size()), h.plan.settle_cycles);
  return verify_logic(h, config, patterns);
}

double signal_latency(const Waveform& w, const SignalProbeSpec& input,
                      const SignalProbeSpec& output, const ClockSpec& clock,
                      int first_cycle, int cycles) {
  auto hump_time = [&](const SignalProbeSpec& probe, int cycle) {
    std::string label = "I(" + probe.device + ")";
    if (!w.has_column(label))
      throw SimError(SimErrorCode::ProbeMissing, "latency probe " + label);
    const auto& col = w.column(label);
    double ts = sampling_instant(probe, clock, cycle);
    double lo = ts - 0.6 * clock.t_stage, hi = ts + 0.6 * clock.t_stage;
    double m0 = 0.0, m1 = 0.0;
    for (size_t i = 1; i < w.samples(); ++i) {
      double t = w.time(i);
      if (t < lo || t > hi) continue;
      double weight = col[i] * col[i] * (t - w.time(i - 1));
      m0 += weight;
      m1 += weight * t;
    }
    if (m0 <= 0.0)
      throw SimError(SimErrorCode::WindowOutsideRun, "no signal inside latency window");
    return m1 / m0;
  };
  double sum = 0.0;
  for (int c = first_cycle; c < first_cycle + cycles; ++c)
    sum += hump_time(output, c) - hump_time(input, c);
  return sum / std::max(cycles, 1);
}

// ---------------------------------------------------------------------------
// Operating margins
// ---------------------------------------------------------------------------

namespace {

MarginResult margin_search_with(const BenchmarkFactory& make, const ClockSpec& nominal,
                                const SimConfig& config,
                                const std::vector<std::string>& patterns, double span_db,
                                double resolution_db) {
  MarginResult r;
  r.f = nominal.f;
  r.t_stage = nominal.t_stage;
  auto passes = [&](double px) {
    ClockSpec c = nominal;
    c.amplitude.reset();
    c.px_dbm = px;
    BenchmarkHarness h = make(c);
    return verify_logic(h, config, patterns).pass;
  };
  double px0 = nominal.resolve_px();
  if (!passes(px0)) {
    r.pass = false;
    r.note = "NoPassingPoint";
    return r;
  }
  auto edge = [&](double direction) {
    double pass_at = px0;
    double probe = px0 + direction * span_db;
    if (passes(probe)) return probe;  // margin extends past the search window
    double fail_at = probe;
    while (std::fabs(fail_at - pass_at) > resolution_db) {
      double mid = 0.5 * (pass_at + fail_at);
      if (passes(mid)) pass_at = mid; else fail_at = mid;
    }
    return pass_at;
  };
  r.p_low = edge(-1.0);
  r.p_high = edge(+1.0);
  r.width_db = r.p_high - r.p_low;
  r.pass = true;
  return r;
}

}  // namespace

MarginResult margin_search(const BenchmarkFactory& make, const ClockSpec& nominal,
                           const SimConfig& config, double px_span_db,
                           double resolution_db) {
  BenchmarkHarness probe_harness = make(nominal);
  auto patterns = exhaustive_patterns(static_cast<int>(probe_harness.plan.inputs.size()),
                                      probe_harness.plan.settle_cycles);
  return margin_search_with(make, nominal, config, patterns, px_span_db, resolution_db);
}

// ---------------------------------------------------------------------------
// Energy per operation
// ---------------------------------------------------------------------------

EnergyEntry energy_per_op(const BenchmarkFactory& make, const ClockSpec& clock,
                          const SimConfig& config) {
  BenchmarkHarness h = make(clock);
  EnergyEntry entry;
  entry.f = clock.f;
  entry.t_stage = clock.t_stage;
  double period = 1.0 / clock.f;
  int n_inputs = static_cast<int>(h.plan.inputs.size());
  int combos = 1 << n_inputs;

  std::vector<double> per_gate(h.gates.size(), 0.0);
  for (int c = 0; c < combos; ++c) {
    std::vector<int> bits;
    bits.reserve(static_cast<size_t>(n_inputs));
    for (int i = 0; i < n_inputs; ++i) bits.push_back((c >> (n_inputs - 1 - i)) & 1);
    Netlist n = h.netlist;
    apply_dc_levels(n, h.plan, bits);
    SimConfig cfg = config;
    cfg.t_stop = (5.5 + 0.25) * period + h.phase_count * clock.t_stage;
    RunResult rr = run_transient(n, cfg, h.probes);
    if (!rr.converged)
      throw SimError(SimErrorCode::NewtonDivergence,
                     "energy run diverged: " + rr.error, rr.fail_time, rr.fail_iterations);
    entry.audit_residual = std::max(entry.audit_residual, rr.audit.relative_residual());
    EnergyReport report = energy_accounting(rr.waveform, 4.5 * period, 5.5 * period);
    double cut_sum = 0.0;
    for (size_t g = 0; g < h.gates.size(); ++g) {
      const std::string& name = h.gates[g].name;
      auto x1 = report.per_device.find("l" + name + "_x1");
      auto x2 = report.per_device.find("l" + name + "_x2");
      double e = (x1 != report.per_device.end() ? x1->second : 0.0) +
                 (x2 != report.per_device.end() ? x2->second : 0.0);
      per_gate[g] += e;
      if (std::find(h.cut_gates.begin(), h.cut_gates.end(), name) != h.cut_gates.end())
        cut_sum += e;
    }
    entry.per_combination.push_back(cut_sum);
  }
  for (size_t g = 0; g < h.gates.size(); ++g) {
    double e = per_gate[g] / combos;
    entry.per_gate.push_back({h.gates[g].name, e});
    entry.energy_all += e;
  }
  for (double e : entry.per_combination) entry.energy += e;
  entry.energy /= combos;
  return entry;
}

// ---------------------------------------------------------------------------
// Maximum allowable latency
// ---------------------------------------------------------------------------

namespace {

// Two-stage transmission harness with the second stage's excitation delayed
// by an arbitrary skew; the tail carries the same stand-in load every
// interior gate sees.
bool two_gate_passes(CellKind kind, double f, double skew, const AqfpCellParams& p,
                     const SimConfig& config) {
  Netlist n;
  n.models[p.model.name] = p.model;
  CellFragment g1 = build_cell(kind, p, "g1", {"in_a"}, {"w1"});
  CellFragment g2 = build_cell(kind, p, "g2", {"w1"}, {"out_q"});
  n.devices.insert(n.devices.end(), g1.devices.begin(), g1.devices.end());
  n.devices.insert(n.devices.end(), g2.devices.begin(), g2.devices.end());
  n.devices.push_back({"lload", {"out_q", "0"}, Inductor{p.lin}});
  double period = 1.0 / f;
  n.devices.push_back(
      {"iin_a", {"0", "in_a"},
       CurrentSource{BitSpec{kProbePattern, period, 0.1 * period, p.input_amplitude,
                             -p.input_amplitude}}});
  std::vector<ClockPhase> phases(2);
  phases[0].gates = g1.gates;
  phases[1].gates = g2.gates;
  ClockSpec clock = nominal_clock(p, f, skew);
  build_clock_network(n, phases, clock, config.excitation_mode);
  SignalProbeSpec probe = phases[1].gates[0].probe;
  probe.phase = 1;
  std::vector<Probe> probes{BranchCurrentProbe{probe.device}};
  std::string pattern = kProbePattern;
  SimConfig cfg = config;
  cfg.t_stop = sampling_instant(probe, clock, static_cast<int>(pattern.size()) - 1) +
               0.75 * period;
  RunResult rr = run_transient(n, cfg, probes);
  if (!rr.converged) return false;
  std::string got = decode(rr.waveform, probe, clock, static_cast<int>(pattern.size()));
  bool invert = kind == CellKind::Inverter;
  for (size_t b = 2; b < pattern.size(); ++b) {
    char want = invert ? char('0' + '1' - pattern[b]) : pattern[b];
    if (got[b] != want) return false;
  }
  return true;
}

}  // namespace

double tmax_estimate(CellKind kind, double f, const AqfpCellParams& params,
                     const SimConfig& config, double resolution) {
  if (kind != CellKind::Buffer && kind != CellKind::Inverter)
    throw ClockError(ClockErrorCode::UnsupportedCut,
                     "tmax estimate needs a single-input stage");
  if (resolution <= 0.0)
    throw AnalysisError(AnalysisErrorCode::BadGrid, "non-positive resolution");
  double period = 1.0 / f;
  double lo = std::min(resolution, 0.01 * period);
  if (!two_gate_passes(kind, f, lo, params, config))
    throw AnalysisError(AnalysisErrorCode::NoPassingPoint,
                        "two-gate transmission fails at minimal skew");
  double hi = 0.5 * period;
  if (two_gate_passes(kind, f, hi, params, config)) {
    double wide = 0.9 * period;
    if (two_gate_passes(kind, f, wide, params, config)) return wide;
    lo = hi;
    hi = wide;
  }
  while (hi - lo > resolution) {
    double mid = 0.5 * (lo + hi);
    if (two_gate_passes(kind, f, mid, params, config)) lo = mid; else hi = mid;
  }
  return lo;
}

// ---------------------------------------------------------------------------
// Phase-skip feasibility
// ---------------------------------------------------------------------------

const SkipCell& SkipFeasibilityMatrix::cell(size_t t_index, size_t k_index) const {
  return cells.at(t_index * k_values.size() + k_index);
}

bool SkipFeasibilityMatrix::monotone_in_k() const {
  for (size_t ti = 0; ti < t_values.size(); ++ti) {
    bool failed = false;
    for (size_t ki = 0; ki < k_values.size(); ++ki) {
      if (failed && cell(ti, ki).pass) return false;
      if (!cell(ti, ki).pass) failed = true;
    }
  }
  return true;
}

double SkipFeasibilityMatrix::predictor_agreement() const {
  if (cells.empty()) return 1.0;
  size_t agree = 0;
  for (const auto& c : cells)
    if (c.pass == c.predicted) ++agree;
  return static_cast<double>(agree) / static_cast<double>(cells.size());
}

namespace {

void parallel_cells(size_t count, int jobs, const std::function<void(size_t)>& fn) {
  unsigned workers = jobs > 0 ? static_cast<unsigned>(jobs)
                              : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(count));
  if (workers <= 1) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (size_t i; (i = next.fetch_add(1)) < count;) fn(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace

SkipFeasibilityMatrix skip_scan(const std::vector<double>& t_values,
                                const std::vector<int>& k_values, double f,
                                const AqfpCellParams& params, const SimConfig& config,
                                const SkipScanOptions& options) {
  if (t_values.empty() || k_values.empty())
    throw AnalysisError(AnalysisErrorCode::BadGrid, "empty scan grid");
  SkipFeasibilityMatrix m;
  m.t_values = t_values;
  m.k_values = k_values;
  m.f = f;
  m.tmax = tmax_estimate(CellKind::Buffer, f, params, config);
  m.cells.resize(t_values.size() * k_values.size());

  parallel_cells(m.cells.size(), options.jobs, [&](size_t index) {
    size_t ti = index / k_values.size();
    size_t ki = index % k_values.size();
    SkipCell& cell = m.cells[index];
    cell.t_stage = t_values[ti];
    cell.k = k_values[ki];
    cell.predicted = (cell.k + 1) * cell.t_stage <= m.tmax;
    try {
      ClockSpec clock = nominal_clock(params, f, cell.t_stage);
      BenchmarkHarness h =
          build_skip_chain(cell.k, clock, params, config.excitation_mode);
      VerifyResult v = verify_logic(h, config, {kProbePattern});
      cell.pass = v.pass;
      if (!v.diagnostic.empty()) cell.error = v.diagnostic;
      if (cell.pass && options.with_margins) {
        auto factory = [&](const ClockSpec& c) {
          return build_skip_chain(cell.k, c, params, config.excitation_mode);
        };
        MarginResult mr = margin_search_with(factory, clock, config, {kProbePattern},
                                             options.margin_span_db,
                                             options.margin_resolution_db);
        if (mr.pass) cell.margin_width_db = mr.width_db;
      }
    } catch (const std::exception& e) {
      cell.pass = false;
      cell.error = e.what();
    }
  });
  return m;
}

double max_passing_frequency(int k, double t_stage, const AqfpCellParams& params,
                             const SimConfig& config, double f_lo, double f_hi,
                             double resolution) {
  if (!(f_lo > 0.0) || !(f_hi > f_lo) || !(resolution > 0.0))
    throw AnalysisError(AnalysisErrorCode::BadGrid, "bad frequency bracket");
  auto passes = [&](double f) {
    ClockSpec clock = nominal_clock(params, f, t_stage);
    BenchmarkHarness h = build_skip_chain(k, clock, params, config.excitation_mode);
    try {
      return verify_logic(h, config, {kProbePattern}).pass;
    } catch (const std::exception&) {
      return false;
    }
  };
  if (!passes(f_lo))
    throw AnalysisError(AnalysisErrorCode::NoPassingPoint,
                        "chain fails at the lower frequency bound");
  if (passes(f_hi)) return f_hi;
  double lo = f_lo, hi = f_hi;
  while (hi - lo > resolution) {
    double mid = 0.5 * (lo + hi);
    if (passes(mid)) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Energy-delay product
// ---------------------------------------------------------------------------

std::vector<EdpEntry> edp(const std::vector<EdpEntry>& rows) {
  std::vector<EdpEntry> out = rows;
  for (auto& r : out) r.edp = r.energy * r.delay;
  std::stable_sort(out.begin(), out.end(),
                   [](const EdpEntry& a, const EdpEntry& b) { return a.edp < b.edp; });
  return out;
}

std::vector<EdpEntry> edp_builtin_rows() {
  return edp({{"aqfp delay-line clocking", 2.8e-21, 10e-12, 0.0},
              {"aqfp four-phase clocking", 2.8e-21, 50e-12, 0.0},
              {"rsfq 50 GHz", 17e-18, 4e-12, 0.0}});
}

// ---------------------------------------------------------------------------
// Factories
// ---------------------------------------------------------------------------

BenchmarkFactory benchmark_factory(CellKind cut, const AqfpCellParams& params,
                                   ExcitationMode mode) {
  return [cut, params, mode](const ClockSpec& clock) {
    return build_benchmark(cut, clock, params, mode);
  };
}

}  // namespace qfp
