#pragma once

#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "qfp/netlist.hpp"

namespace qfp {

enum class ExcitationMode { FullLine, IdealDelay };

struct SimConfig {
  double dt = 1e-13;
  double t_stop = 0.0;
  double newton_rel_tol = 1e-6;
  double newton_abs_tol_v = 1e-9;
  double newton_abs_tol_i = 1e-12;
  int max_newton_iters = 50;
  ExcitationMode excitation_mode = ExcitationMode::FullLine;
};

// ---------------------------------------------------------------------------
// Probes
// ---------------------------------------------------------------------------

struct NodeVoltageProbe {
  std::string node;
  bool operator==(const NodeVoltageProbe&) const = default;
};
struct BranchCurrentProbe {
  std::string device;
  bool operator==(const BranchCurrentProbe&) const = default;
};
struct JunctionPhaseProbe {
  std::string device;
  bool operator==(const JunctionPhaseProbe&) const = default;
};
struct DevicePowerProbe {
  std::string device;
  bool operator==(const DevicePowerProbe&) const = default;
};
using Probe = std::variant<NodeVoltageProbe, BranchCurrentProbe, JunctionPhaseProbe,
                           DevicePowerProbe>;

// "V(node)", "I(device)", "PHI(device)", "P(device)".
std::string probe_label(const Probe& p);

// ---------------------------------------------------------------------------
// Waveform
// ---------------------------------------------------------------------------

class Waveform {
 public:
  Waveform() = default;
  Waveform(double dt, double t0, std::vector<std::string> labels);

  double dt() const { return dt_; }
  double start_time() const { return t0_; }
  size_t samples() const { return columns_.empty() ? 0 : columns_[0].size(); }
  size_t column_count() const { return columns_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  double time(size_t i) const { return t0_ + static_cast<double>(i) * dt_; }
  const std::vector<double>& column(size_t c) const { return columns_[c]; }
  const std::vector<double>& column(const std::string& label) const;
  bool has_column(const std::string& label) const;

  // Linear interpolation at time t (clamped to the run interval).
  double at(const std::string& label, double t) const;

  void append_sample(const std::vector<double>& values);

 private:
  double dt_ = 0.0;
  double t0_ = 0.0;
  std::vector<std::string> labels_;
  std::vector<std::vector<double>> columns_;
};

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class SimErrorCode {
  SingularTopology,
  NewtonDivergence,
  HistoryUnderflow,
  ProbeMissing,
  WindowOutsideRun,
  InvalidConfig,
};

std::string_view to_string(SimErrorCode code);

class SimError : public std::runtime_error {
 public:
  SimError(SimErrorCode code, const std::string& detail, double t = -1.0, int iterations = -1);
  SimErrorCode code() const { return code_; }
  double time() const { return time_; }
  int iterations() const { return iterations_; }

 private:
  SimErrorCode code_;
  double time_;
  int iterations_;
};

// ---------------------------------------------------------------------------
// State snapshot and energy audit
// ---------------------------------------------------------------------------

struct SystemState {
  double time = 0.0;
  std::map<std::string, double> node_voltages;
  std::map<std::string, double> branch_currents;  // inductors, sources, TL ports
  std::map<std::string, double> junction_phases;
  std::map<std::string, double> junction_voltages;
};

struct EnergyAudit {
  double source_input = 0.0;      // cumulative energy delivered by sources
  double dissipated = 0.0;        // cumulative energy burned in R and JJ resistive channels
  double stored = 0.0;            // instantaneous: 1/2 i'Li + 1/2 Cv^2 + Ej(1-cos phi)
  double tl_in_flight = 0.0;      // instantaneous energy inside transmission lines
  double initial_stored = 0.0;
  // |source - dissipated - (stored - initial_stored) - tl_in_flight| / max(source, 1 aJ)
  double relative_residual() const;
};

// ---------------------------------------------------------------------------
// Simulator
// ---------------------------------------------------------------------------

class SimulatorImpl;

class Simulator {
 public:
  // Netlist must be flat (no subckt instances); call flatten() first.
  Simulator(const Netlist& flat, const SimConfig& config);
  ~Simulator();
  Simulator(Simulator&&) noexcept;
  Simulator& operator=(Simulator&&) noexcept;

  size_t unknown_count() const;
  double time() const;

  // Advances one step of config.dt; throws SimError(NewtonDivergence) on failure.
  void step();

  // Static operating point from the current state as initial guess.
  void solve_operating_point();

  SystemState state() const;
  EnergyAudit energy_audit() const;

  double probe_value(const Probe& p) const;
  void check_probe(const Probe& p) const;

 private:
  std::unique_ptr<SimulatorImpl> impl_;
};

struct RunResult {
  Waveform waveform;
  bool converged = true;
  std::string error;                    // empty when converged
  double fail_time = -1.0;
  int fail_iterations = -1;
  EnergyAudit audit;                    // as of the last accepted step
};

// Flattens, assembles, and integrates to t_stop; the waveform has
// floor(t_stop/dt)+1 samples. Newton divergence is reported in the result
// with the partial waveform preserved; structural errors throw SimError.
RunResult run_transient(const Netlist& netlist, const SimConfig& config,
                        const std::vector<Probe>& probes);

// Integrates every "P(...)" column of a run over [t_begin, t_end] by
// trapezoidal quadrature. Throws SimError(WindowOutsideRun) when the window
// is not inside the run interval.
struct EnergyReport {
  std::map<std::string, double> per_device;
  double total = 0.0;
};
EnergyReport energy_accounting(const Waveform& w, double t_begin, double t_end);

}  // namespace qfp
