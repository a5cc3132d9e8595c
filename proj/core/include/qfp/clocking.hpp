#pragma once

#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "qfp/cells.hpp"
#include "qfp/engine.hpp"

namespace qfp {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class ClockErrorCode {
  EmptyPhase,      // unpopulated phase that was not flagged as skipped
  UnsupportedCut,
  SkipTooLarge,
  InfeasibleEdge,  // a single hop already exceeds safety * tmax
};

std::string_view to_string(ClockErrorCode code);

class ClockError : public std::runtime_error {
 public:
  ClockError(ClockErrorCode code, const std::string& detail);
  ClockErrorCode code() const { return code_; }

 private:
  ClockErrorCode code_;
};

// ---------------------------------------------------------------------------
// Clock network
// ---------------------------------------------------------------------------

// One excitation phase: the gates threaded in series along the line at that
// position. An empty gate list is only legal when skipped is set; the delay
// line through a skipped phase remains.
struct ClockPhase {
  std::vector<CellGate> gates;
  bool skipped = false;
};

struct ClockNetworkInfo {
  std::vector<std::string> sources;      // one source (FullLine) or one per phase
  std::vector<std::string> tlines;       // inter-phase delay lines (FullLine)
  std::vector<std::string> terminators;  // one (FullLine) or one per phase
  double amplitude = 0.0;                // resolved drive amplitude, A
  double source_delay = 0.0;             // sine delay of the phase-0 source, s
};

// Threads the excitation line through every phase's gates and appends the
// source, delay lines, and termination to the netlist. FullLine mode builds
// source -> phase 0 gates -> TL(z0, T) -> phase 1 gates -> ... -> terminator;
// IdealDelay mode gives each phase its own source delayed by p * T and its
// own termination. Gate x_in/x_out fields are rewired in place.
ClockNetworkInfo build_clock_network(Netlist& n, std::vector<ClockPhase>& phases,
                                     const ClockSpec& clock,
                                     ExcitationMode mode = ExcitationMode::FullLine);

// Sampling instant of cycle n for a probe: source_delay + quarter period
// + phase * T + n / f + sample_offset.
double sampling_instant(const SignalProbeSpec& probe, const ClockSpec& clock, int cycle);

// Excitation-peak instant of cycle n at a given phase (no probe offset).
double excitation_peak(int phase, const ClockSpec& clock, int cycle);

// ---------------------------------------------------------------------------
// Logic test plans and benchmark harnesses
// ---------------------------------------------------------------------------

// Declarative plan for driving and scoring a benchmark. The named input
// sources carry bit patterns (settle prefix plus scored bits); the expected
// function maps one input combination to the output bit.
struct LogicTestPlan {
  std::vector<std::string> inputs;          // port labels, e.g. {"a", "b"}
  std::vector<std::string> input_sources;   // current-source device names
  std::vector<SignalProbeSpec> input_probes;  // labeled first-stage gates
  SignalProbeSpec output_probe;             // labeled output gate
  std::function<int(const std::vector<int>&)> expected;
  double threshold = 0.0;                   // decode threshold, A
  int settle_cycles = 4;
};

struct BenchmarkHarness {
  Netlist netlist;
  std::vector<Probe> probes;           // I_st, excitation current and power
  LogicTestPlan plan;
  ClockSpec clock;
  AqfpCellParams params;
  std::vector<std::string> cut_gates;  // instances counted as the CUT
  std::vector<CellGate> gates;         // every elementary gate, by phase
  int phase_count = 0;
};

// Builder used by sweeps that need the harness at varying clock settings.
using BenchmarkFactory = std::function<BenchmarkHarness(const ClockSpec&)>;

// Fig-style benchmark: input buffers (one per CUT input, labeled a/b/c) at
// phase 0, the CUT, and an output buffer labeled q in the last phase. The
// XOR macro is padded with peripheral buffers so the input-to-output span is
// exactly 7 phases; other CUTs span input buffer -> CUT -> output buffer.
// Supported CUTs: Buffer, Inverter, And, Or, Majority3, XorMacro; throws
// ClockError(UnsupportedCut) otherwise.
BenchmarkHarness build_benchmark(CellKind cut, const ClockSpec& clock,
                                 const AqfpCellParams& params,
                                 ExcitationMode mode = ExcitationMode::FullLine);

// Five-buffer chain with k consecutive skipped phases after the second
// stage: stages sit at phases {0, 1, 2+k, 3+k, 4+k}, the edge across the gap
// has skew (k+1) * T. Probes are published for every stage (I_st1..I_st5).
// k <= 4; throws ClockError(SkipTooLarge) above that.
BenchmarkHarness build_skip_chain(int k, const ClockSpec& clock,
                                  const AqfpCellParams& params,
                                  ExcitationMode mode = ExcitationMode::FullLine);

// ---------------------------------------------------------------------------
// Phase assignment
// ---------------------------------------------------------------------------

// Gate-level DAG for phase assignment. Padding nodes are plain buffers whose
// only job is data transport; the assignment may remove them when the skip
// rule allows the resulting skew.
struct DagNode {
  std::string name;
  std::vector<std::string> inputs;  // driver node names
  bool padding = false;
};

struct PhaseEdge {
  std::string from;
  std::string to;
  int gap = 0;          // phase(to) - phase(from)
  double skew = 0.0;    // gap * T, s
};

struct PhaseAssignment {
  std::map<std::string, int> phase;           // surviving gates only
  std::vector<PhaseEdge> edges;               // final data edges
  std::vector<std::string> removed;           // padding gates dropped
  std::vector<std::pair<std::string, int>> inserted;  // new pads and phases
  int buffers_saved = 0;                      // vs pad-every-phase baseline
  double max_skew = 0.0;
};

// Longest-path levelization plus skip-rule padding: an edge may span up to
// gmax = floor(safety * tmax / T) phases without a repeater. Padding runs
// are thinned to the minimum count and missing repeaters are inserted on
// over-long edges. Throws ClockError(InfeasibleEdge) when even a single hop
// exceeds safety * tmax, and std::invalid_argument on a cyclic graph.
PhaseAssignment assign_phases(const std::vector<DagNode>& dag, double t_stage,
                              double tmax, double safety = 0.8);

// Convenience: clock spec carrying a cell's nominal drive levels.
ClockSpec nominal_clock(const AqfpCellParams& params, double f, double t_stage);

}  // namespace qfp
