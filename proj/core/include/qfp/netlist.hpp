#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace qfp {

// ---------------------------------------------------------------------------
// Source waveforms
// ---------------------------------------------------------------------------

struct DcSpec {
  double value = 0.0;
  double ramp = 0.0;  // linear turn-on time in seconds, 0 = hard start
  bool operator==(const DcSpec&) const = default;
};

struct SineSpec {
  double offset = 0.0;
  double amplitude = 0.0;
  double frequency = 0.0;
  double delay = 0.0;
  double ramp_cycles = 0.0;  // envelope ramp, in periods from t = 0
  bool operator==(const SineSpec&) const = default;
};

struct PwlSpec {
  std::vector<std::pair<double, double>> points;  // (time, value), time ascending
  bool operator==(const PwlSpec&) const = default;
};

struct BitSpec {
  std::string pattern;  // e.g. "0110", bit k occupies [k*period, (k+1)*period)
  double period = 0.0;
  double trise = 0.0;  // linear transition time at each bit boundary
  double high = 0.0;
  double low = 0.0;
  bool operator==(const BitSpec&) const = default;
};

using SourceWaveform = std::variant<DcSpec, SineSpec, PwlSpec, BitSpec>;

// Value of a waveform at time t (t < 0 behaves like t = 0).
double eval_waveform(const SourceWaveform& w, double t);

// ---------------------------------------------------------------------------
// Devices
// ---------------------------------------------------------------------------

struct Resistor {
  double resistance = 0.0;
  bool operator==(const Resistor&) const = default;
};
struct Inductor {
  double inductance = 0.0;
  bool operator==(const Inductor&) const = default;
};
struct Capacitor {
  double capacitance = 0.0;
  bool operator==(const Capacitor&) const = default;
};
struct MutualCoupling {
  std::string first;   // inductor device name
  std::string second;  // inductor device name
  double k = 0.0;      // coupling coefficient, |k| < 1
  bool operator==(const MutualCoupling&) const = default;
};
struct Junction {
  std::string model;
  double area = 1.0;
  bool operator==(const Junction&) const = default;
};
struct TransmissionLine {
  double z0 = 0.0;
  double delay = 0.0;
  bool operator==(const TransmissionLine&) const = default;
};
struct CurrentSource {
  SourceWaveform wave;
  bool operator==(const CurrentSource&) const = default;
};
struct VoltageSource {
  SourceWaveform wave;
  bool operator==(const VoltageSource&) const = default;
};
struct SubcktInstance {
  std::string subckt;
  bool operator==(const SubcktInstance&) const = default;
};

using DeviceBody = std::variant<Resistor, Inductor, Capacitor, MutualCoupling, Junction,
                                TransmissionLine, CurrentSource, VoltageSource, SubcktInstance>;

struct Device {
  std::string name;                    // lowercased, first char encodes the kind
  std::vector<std::string> terminals;  // node names; empty for K
  DeviceBody body;
  bool operator==(const Device&) const = default;

  bool is(char kind_letter) const { return !name.empty() && name[0] == kind_letter; }
};

// Josephson junction model card (.model NAME jj(...)).
struct JjModel {
  std::string name;
  double critical_current = 0.0;  // Ic, A
  double capacitance = 0.0;       // C, F
  double r_subgap = 0.0;          // Rsg, ohm
  double r_normal = 0.0;          // Rn, ohm
  double v_gap = 0.0;             // Vg, V
  bool operator==(const JjModel&) const = default;
};

struct SubcircuitDef {
  std::string name;
  std::vector<std::string> ports;
  std::vector<Device> devices;
  bool operator==(const SubcircuitDef&) const = default;
};

struct Netlist {
  std::string title;
  std::map<std::string, JjModel> models;
  std::map<std::string, SubcircuitDef> subckts;
  std::vector<Device> devices;
  bool operator==(const Netlist&) const = default;
};

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

enum class NetlistErrorCode {
  BadSyntax,
  UnknownDeviceKind,
  DuplicateName,
  UnbalancedSubckt,
  BadNumber,
  DanglingMutualReference,
  UnknownModel,
  ArityMismatch,
  RecursionDetected,
  InvalidValue,
};

std::string_view to_string(NetlistErrorCode code);

class NetlistError : public std::runtime_error {
 public:
  NetlistError(NetlistErrorCode code, int line, int column, const std::string& detail);
  NetlistErrorCode code() const { return code_; }
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  NetlistErrorCode code_;
  int line_;
  int column_;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Parses netlist text. Case-insensitive; '*' comments; '+' continuations;
// throws NetlistError with 1-based line/column on failure.
Netlist parse_netlist(std::string_view text);

// Expands all subcircuit instances. Internal nodes become "<inst>.<node>",
// device names "<inst>.<name>"; ground "0" is never remapped.
Netlist flatten(const Netlist& n);

// Canonical text form; parse_netlist(serialize(n)) == n for valid netlists.
std::string serialize(const Netlist& n);

// Structural checks shared by parse and the builders: unique names, known
// models, resolvable mutual references, positive element values, |k| < 1,
// transmission-line delay > 0. Throws NetlistError (line/column 0).
void validate(const Netlist& n);

}  // namespace qfp
