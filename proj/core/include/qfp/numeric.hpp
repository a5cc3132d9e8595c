#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace qfp {

// Magnetic flux quantum in Wb.
inline constexpr double kPhi0 = 2.067833848e-15;

// Parses a netlist value token: a decimal number with an optional
// engineering suffix (f p n u m k meg g, case-insensitive). The whole
// token must be consumed. Returns nullopt on malformed input.
std::optional<double> parse_quantity(std::string_view token);

// Prints a value as the shortest mantissa plus engineering suffix that
// parses back to the identical double; falls back to plain shortest
// scientific notation when no suffixed form round-trips.
std::string format_quantity(double value);

// Shortest decimal form that round-trips to the same double (no suffix).
std::string format_double(double value);

// CLI-facing quantity parsing: a number immediately followed by a unit,
// e.g. "10ps", "5GHz", "2.8zJ", "50ohm", "-16dBm", "0.1mA".
// `unit` is the bare unit ("s", "Hz", "J", "ohm", "A", "V", "dBm");
// SI prefixes y z a f p n u m k M G T are understood (plus "meg").
// Returns the value in base units; dBm values are returned as given.
std::optional<double> parse_unit_quantity(std::string_view text, std::string_view unit);

// ASCII lowercase copy.
std::string to_lower(std::string_view s);

}  // namespace qfp
