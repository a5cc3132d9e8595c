#include <sstream>

#include "qfp/netlist.hpp"
#include "qfp/numeric.hpp"

namespace qfp {

namespace {

void write_wave(std::ostream& os, const SourceWaveform& w) {
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, DcSpec>) {
          os << "dc " << format_quantity(s.value);
          if (s.ramp != 0.0) os << " ramp=" << format_quantity(s.ramp);
        } else if constexpr (std::is_same_v<T, SineSpec>) {
          os << "sin(" << format_quantity(s.offset) << ' ' << format_quantity(s.amplitude) << ' '
             << format_quantity(s.frequency) << ' ' << format_quantity(s.delay);
          if (s.ramp_cycles != 0.0) os << ' ' << format_quantity(s.ramp_cycles);
          os << ')';
        } else if constexpr (std::is_same_v<T, PwlSpec>) {
          os << "pwl(";
          bool first = true;
          for (const auto& [t, v] : s.points) {
            if (!first) os << ' ';
            first = false;
            os << format_quantity(t) << ' ' << format_quantity(v);
          }
          os << ')';
        } else {
          os << "bits(" << s.pattern << ' ' << format_quantity(s.period) << ' '
             << format_quantity(s.trise) << ' ' << format_quantity(s.high) << ' '
             << format_quantity(s.low) << ')';
        }
      },
      w);
}

void write_device(std::ostream& os, const Device& d) {
  os << d.name;
  std::visit(
      [&](const auto& body) {
        using T = std::decay_t<decltype(body)>;
        if constexpr (std::is_same_v<T, MutualCoupling>) {
          os << ' ' << body.first << ' ' << body.second << ' ' << format_quantity(body.k);
          return;
        } else if constexpr (std::is_same_v<T, SubcktInstance>) {
          os << ' ' << body.subckt;
          for (const auto& t : d.terminals) os << ' ' << t;
          return;
        } else {
          for (const auto& t : d.terminals) os << ' ' << t;
          if constexpr (std::is_same_v<T, Resistor>) {
            os << ' ' << format_quantity(body.resistance);
          } else if constexpr (std::is_same_v<T, Inductor>) {
            os << ' ' << format_quantity(body.inductance);
          } else if constexpr (std::is_same_v<T, Capacitor>) {
            os << ' ' << format_quantity(body.capacitance);
          } else if constexpr (std::is_same_v<T, Junction>) {
            os << ' ' << body.model;
            if (body.area != 1.0) os << " area=" << format_quantity(body.area);
          } else if constexpr (std::is_same_v<T, TransmissionLine>) {
            os << " z0=" << format_quantity(body.z0) << " td=" << format_quantity(body.delay);
          } else if constexpr (std::is_same_v<T, CurrentSource> ||
                               std::is_same_v<T, VoltageSource>) {
            os << ' ';
            write_wave(os, body.wave);
          }
        }
      },
      d.body);
  os << '\n';
}

}  // namespace

std::string serialize(const Netlist& n) {
  std::ostringstream os;
  os << '*';
  if (!n.title.empty()) os << ' ' << n.title;
  os << '\n';

  for (const auto& [name, m] : n.models) {
    os << ".model " << name << " jj(Ic=" << format_quantity(m.critical_current)
       << " C=" << format_quantity(m.capacitance) << " Rsg=" << format_quantity(m.r_subgap)
       << " Rn=" << format_quantity(m.r_normal) << " Vg=" << format_quantity(m.v_gap) << ")\n";
  }

  for (const auto& [name, def] : n.subckts) {
    os << ".subckt " << name;
    for (const auto& p : def.ports) os << ' ' << p;
    os << '\n';
    for (const auto& d : def.devices) write_device(os, d);
    os << ".ends\n";
  }

  for (const auto& d : n.devices) write_device(os, d);
  os << ".end\n";
  return os.str();
}

}  // namespace qfp
