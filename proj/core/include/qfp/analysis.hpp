#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qfp/clocking.hpp"
#include "qfp/engine.hpp"

namespace qfp {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class AnalysisErrorCode {
  NoPassingPoint,  // no seed passes, nothing to bisect from
  BadGrid,
};

std::string_view to_string(AnalysisErrorCode code);

class AnalysisError : public std::runtime_error {
 public:
  AnalysisError(AnalysisErrorCode code, const std::string& detail);
  AnalysisErrorCode code() const { return code_; }

 private:
  AnalysisErrorCode code_;
};

// ---------------------------------------------------------------------------
// Patterns
// ---------------------------------------------------------------------------

// Per-input bit strings enumerating every input combination once, prefixed
// by settle_cycles repeats of the first combination. Input i toggles with
// stride 2^(n-1-i), so for two inputs the payload is a=0011, b=0101.
std::vector<std::string> exhaustive_patterns(int n_inputs, int settle_cycles);

// 7-bit LFSR, taps at bits 7 and 6, seed taken mod 2^7 (zero state bumped
// to all-ones). Deterministic for a given (length, seed).
std::string prbs_bits(int length, unsigned seed = 0x7f);

// ---------------------------------------------------------------------------
// Decode and verify
// ---------------------------------------------------------------------------

// Signed threshold decode of a signal-current probe at its per-cycle
// sampling instants: '1' above +threshold, '0' below -threshold, '?'
// between (indeterminate). Throws SimError(ProbeMissing) when the column is
// absent and SimError(WindowOutsideRun) when the run ends before the last
// requested cycle.
std::string decode(const Waveform& w, const SignalProbeSpec& probe,
                   const ClockSpec& clock, int cycles);

struct VerifyResult {
  bool pass = false;
  int errors = 0;
  int first_failure_cycle = -1;  // pattern bit index, -1 when clean
  int scored_bits = 0;
  std::string got;   // decoded output, full pattern length
  std::string want;  // expected output, '-' over the settle prefix
  std::string diagnostic;  // engine failure description, empty otherwise
  double audit_residual = std::numeric_limits<double>::quiet_NaN();
};

// Drives the harness inputs with the given per-input bit strings (one per
// plan input, equal lengths, settle prefix included), runs the transient,
// and scores the decoded output from plan.settle_cycles onward against
// plan.expected. Engine failures are reported as a failing result with the
// diagnostic filled in, never thrown.
VerifyResult verify_logic(const BenchmarkHarness& h, const SimConfig& config,
                          const std::vector<std::string>& patterns);

// Exhaustive patterns for the harness arity, then verify_logic.
VerifyResult verify_exhaustive(const BenchmarkHarness& h, const SimConfig& config);

// Center-of-mass latency between the signal-current humps of two probed
// gates: for each scored cycle the hump time is the first moment of I^2
// over a window of +-0.6 periods-per-stage around the sampling instant;
// the result is the mean output-minus-input difference in seconds.
double signal_latency(const Waveform& w, const SignalProbeSpec& input,
                      const SignalProbeSpec& output, const ClockSpec& clock,
                      int first_cycle, int cycles);

// ---------------------------------------------------------------------------
// Operating margins
// ---------------------------------------------------------------------------

struct MarginResult {
  double f = 0.0;       // Hz
  double t_stage = 0.0; // s
  double p_low = 0.0;   // dBm, lowest passing drive power
  double p_high = 0.0;  // dBm, highest passing drive power
  double width_db = 0.0;
  bool pass = false;
  std::string note;     // "NoPassingPoint" when the seed already fails
};

// Bisection outward from the clock's nominal drive power: each probe point
// rebuilds the benchmark at that Px and runs exhaustive verification.
// Search window is nominal +- px_span_db, boundary located to
// resolution_db. A failing seed reports pass=false rather than throwing.
MarginResult margin_search(const BenchmarkFactory& make, const ClockSpec& nominal,
                           const SimConfig& config, double px_span_db = 10.0,
                           double resolution_db = 0.1);

// ---------------------------------------------------------------------------
// Energy per operation
// ---------------------------------------------------------------------------

struct GateEnergy {
  std::string gate;
  double energy = 0.0;  // J per cycle, averaged over input combinations
};

struct EnergyEntry {
  double f = 0.0;
  double t_stage = 0.0;
  double energy = 0.0;      // CUT gates only, J per operation
  double energy_all = 0.0;  // every gate in the harness
  std::vector<GateEnergy> per_gate;
  std::vector<double> per_combination;  // CUT-only energy per combination
  double audit_residual = 0.0;          // worst over the combination runs
};

struct EnergySweepResult {
  std::vector<EnergyEntry> entries;  // one per swept T
};

// Holds each input at a constant +-input level per combination, integrates
// i*v over both excitation windings of every gate across one steady cycle
// (cycles 4.5 to 5.5), and averages the combinations. The headline number
// counts the CUT gates only; the breakdown lists every gate.
EnergyEntry energy_per_op(const BenchmarkFactory& make, const ClockSpec& clock,
                          const SimConfig& config);

// ---------------------------------------------------------------------------
// Maximum allowable latency
// ---------------------------------------------------------------------------

// Largest single-hop skew, in seconds, at which a two-gate transmission of
// the probe pattern still decodes cleanly, bisected to `resolution` with
// the drive held at the calibrated nominal. Throws
// AnalysisError(NoPassingPoint) when even the smallest skew fails.
double tmax_estimate(CellKind kind, double f, const AqfpCellParams& params,
                     const SimConfig& config, double resolution = 1e-12);

// ---------------------------------------------------------------------------
// Phase-skip feasibility
// ---------------------------------------------------------------------------

struct SkipCell {
  double t_stage = 0.0;
  int k = 0;
  bool pass = false;
  bool predicted = false;  // (k+1)*T <= tmax
  double margin_width_db = std::numeric_limits<double>::quiet_NaN();
  std::string error;  // engine diagnostic when the run failed
};

struct SkipFeasibilityMatrix {
  std::vector<double> t_values;
  std::vector<int> k_values;
  std::vector<SkipCell> cells;  // row-major, rows = t_values
  double f = 0.0;
  double tmax = 0.0;  // estimate behind the predicted column

  const SkipCell& cell(size_t t_index, size_t k_index) const;
  // fail at k implies fail at every larger k, per row
  bool monotone_in_k() const;
  // fraction of cells where the (k+1)*T <= tmax predicate matches
  double predictor_agreement() const;
};

struct SkipScanOptions {
  int jobs = 0;              // 0 = hardware concurrency
  bool with_margins = false; // fill margin_width_db on passing cells
  double margin_span_db = 10.0;
  double margin_resolution_db = 0.1;
};

// Simulates build_skip_chain(k) at every (T, k) grid point with the probe
// pattern, in parallel over cells, and attaches the analytic prediction
// from tmax_estimate at the same frequency.
SkipFeasibilityMatrix skip_scan(const std::vector<double>& t_values,
                                const std::vector<int>& k_values, double f,
                                const AqfpCellParams& params, const SimConfig& config,
                                const SkipScanOptions& options = {});

// Highest frequency at which the k-skip chain still verifies at the given
// T, bisected from a passing f_lo toward a failing f_hi. Throws
// AnalysisError(NoPassingPoint) when f_lo already fails.
double max_passing_frequency(int k, double t_stage, const AqfpCellParams& params,
                             const SimConfig& config, double f_lo = 2e9,
                             double f_hi = 8e9, double resolution = 0.02e9);

// ---------------------------------------------------------------------------
// Energy-delay product
// ---------------------------------------------------------------------------

struct EdpEntry {
  std::string label;
  double energy = 0.0;  // J per cycle
  double delay = 0.0;   // s per gate
  double edp = 0.0;     // exactly energy * delay
};

// Computes the products and returns the table sorted ascending by EDP.
std::vector<EdpEntry> edp(const std::vector<EdpEntry>& rows);

// The three literature comparison rows: delay-line clocked AQFP
// (2.8 zJ, 10 ps), four-phase AQFP (2.8 zJ, 50 ps), RSFQ at 50 GHz
// (17 aJ, 4 ps).
std::vector<EdpEntry> edp_builtin_rows();

// ---------------------------------------------------------------------------
// Harness factories
// ---------------------------------------------------------------------------

// Factory closing over a cell kind and calibrated parameters.
BenchmarkFactory benchmark_factory(CellKind cut, const AqfpCellParams& params,
                                   ExcitationMode mode = ExcitationMode::FullLine);

// The probe pattern used by hold-time and skip scans: two settle bits plus
// the mixed run/toggle payload scored from bit 2.
extern const char* const kProbePattern;

}  // namespace qfp
