#pragma once

#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qfp/clock_spec.hpp"
#include "qfp/netlist.hpp"

namespace qfp {

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

// Parameter set for the two-junction flux-parametron gates. Each elementary
// gate is a pair of grounded junctions joined by the loop inductors l1/l2
// with the load inductor lq at the center tap. The excitation line threads
// the series primaries lx1/lx2, which couple flux into the two loop halves;
// inputs arrive on grounded lin windings and the output leaves through a
// grounded lout winding coupled to lq.
struct AqfpCellParams {
  JjModel model;            // junction model (Ic, C, Rsg, Rn, Vg)
  double l1 = 0.0;          // loop inductor, first half, H
  double l2 = 0.0;          // loop inductor, second half, H
  double lq = 0.0;          // output/load inductor, H
  double lx1 = 0.0;         // excitation primary over the first half, H
  double lx2 = 0.0;         // excitation primary over the second half, H
  double kx = 0.0;          // excitation coupling into each half
  double lin = 0.0;         // input winding, H
  double kin = 0.0;         // input coupling (+ into l1, - into l2)
  double lout = 0.0;        // output winding, H
  double kout = 0.0;        // output transformer coupling lq -> lout
  double drive_amplitude = 0.0;  // nominal excitation current amplitude, A
  double drive_dc = 0.0;         // nominal dc offset current, A
  double input_amplitude = 0.0;  // direct input source amplitude, A
  double const_amplitude = 0.0;  // constant-branch source current, A
  double ist_nominal = 0.0;      // |I_st| plateau under nominal drive, A
  double threshold = 0.0;        // decode threshold, A

  bool operator==(const AqfpCellParams&) const = default;
};

// The documented default parameter set. The drive levels are chosen so the
// excitation applies an ac flux of amplitude 0.5 Phi0 plus a 0.5 Phi0 dc
// offset through each gate loop (0.25 Phi0 per half), which is what
// calibrate() enforces empirically.
AqfpCellParams default_cell_params();

// JSON round-trip for parameter files, schema
// {"model": {...}, "inductances": {...}, "couplings": {...},
//  "drive": {...}, "decode": {...}}.
std::string cell_params_to_json(const AqfpCellParams& p);
AqfpCellParams cell_params_from_json(std::string_view text);

// ---------------------------------------------------------------------------
// Cell kinds and errors
// ---------------------------------------------------------------------------

enum class CellKind {
  Buffer,
  Inverter,
  ConstantBranch,  // polarity passed separately; 1 output, no junctions
  Splitter,        // fanout 2 or 3, taken from the output port count
  Majority3,
  And,             // Majority3 with an internal negative constant branch
  Or,              // Majority3 with an internal positive constant branch
  XorMacro,        // splitters -> two ANDs -> OR across three phases
};

std::string_view to_string(CellKind k);

// Accepts the to_string names plus common aliases ("xor", "maj3", "const").
std::optional<CellKind> parse_cell_kind(std::string_view name);

enum class CellErrorCode {
  ArityMismatch,
  InvalidParams,
  UncalibratedParams,
  CalibrationFailed,
};

std::string_view to_string(CellErrorCode code);

class CellError : public std::runtime_error {
 public:
  CellError(CellErrorCode code, const std::string& detail);
  CellErrorCode code() const { return code_; }

 private:
  CellErrorCode code_;
};

// ---------------------------------------------------------------------------
// Fragments
// ---------------------------------------------------------------------------

// Where and how to read a gate's logic state: sample the output inductor
// current at the gate's own excitation peak (plus sample_offset) and compare
// against +-threshold.
struct SignalProbeSpec {
  std::string gate;           // gate instance name
  std::string device;         // output inductor device, "l<gate>_q"
  double threshold = 0.0;     // decode threshold, A
  int phase = 0;              // excitation phase index of the gate
  double sample_offset = 0.0; // s, relative to the gate's excitation peak
  bool operator==(const SignalProbeSpec&) const = default;
};

// One elementary two-junction gate inside a fragment. x_in/x_out are the
// series-through excitation terminals the clock builder threads.
struct CellGate {
  std::string name;
  int phase = 0;              // phase offset within the fragment
  std::string x_in;
  std::string x_out;
  SignalProbeSpec probe;
  bool operator==(const CellGate&) const = default;
};

struct CellFragment {
  std::vector<Device> devices;
  std::vector<CellGate> gates;       // excludes constant branches
  std::vector<std::string> inputs;   // exposed input port nodes
  std::vector<std::string> outputs;  // exposed output port nodes
  int phase_span = 1;
};

// Basic invariant check: positive inductances, |k| < 1, positive junction
// parameters, positive drive levels. Throws CellError(InvalidParams).
void validate_cell_params(const AqfpCellParams& p);

// Builds one cell as a flat netlist fragment. Port nodes are caller-chosen;
// internal nodes and devices are prefixed with the instance name. For
// Splitter the fanout is outputs.size() (2 or 3); for ConstantBranch
// constant_polarity selects the driven logic value. invert_inputs flips the
// kin coupling sign of the matching input (logical negation of that input,
// no extra phase). Throws CellError on arity violations, invalid parameters,
// or a parameter set whose analytic loop flux misses the 0.5 Phi0 targets by
// more than 5% (UncalibratedParams).
CellFragment build_cell(CellKind kind, const AqfpCellParams& p,
                        const std::string& instance,
                        const std::vector<std::string>& inputs,
                        const std::vector<std::string>& outputs,
                        const std::vector<bool>& invert_inputs = {},
                        int constant_polarity = 1);

// The three-phase XOR macro: fanout-2 splitters on both inputs at relative
// phase 0, two ANDs with one inverted input each at phase 1, the OR at
// phase 2. Or(And(a, not b), And(not a, b)).
CellFragment expand_xor(const std::string& instance, const AqfpCellParams& p,
                        const std::string& input_a, const std::string& input_b,
                        const std::string& output);

// Renames every terminal equal to `from` across the devices. Used by the
// clock builder to thread excitation ports.
void rename_node(std::vector<Device>& devices, const std::string& from,
                 const std::string& to);

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

struct CalibrationReport {
  double ac_flux_phi0 = 0.0;      // achieved ac loop-flux amplitude, in Phi0
  double dc_flux_phi0 = 0.0;      // achieved dc loop flux, in Phi0
  double drive_amplitude = 0.0;   // calibrated source amplitude, A
  double drive_dc = 0.0;          // calibrated dc offset, A
  double px_dbm = 0.0;            // calibrated amplitude as power into z0
  double ist_nominal = 0.0;       // measured |I_st| at the sampling instant, A
  double threshold = 0.0;         // 20% of ist_nominal
  int iterations = 0;
  // Operating-margin width at 5 GHz, T = 20 ps. Filled by the margin
  // harness in the analysis layer, NaN here.
  double margin_width_db = std::numeric_limits<double>::quiet_NaN();
};

// Adjusts the drive amplitude and dc offset until the simulated excitation
// flux through a buffer's loop reaches 0.5 Phi0 ac amplitude and 0.5 Phi0 dc
// within 2%, then measures the nominal signal current and decode threshold.
// Returns the calibrated parameter set and writes the report. Throws
// CellError(CalibrationFailed) when no drive level can reach the targets
// (zero coupling, absurd ranges).
AqfpCellParams calibrate(const AqfpCellParams& p, const ClockSpec& clock,
                         CalibrationReport* report = nullptr);

}  // namespace qfp
