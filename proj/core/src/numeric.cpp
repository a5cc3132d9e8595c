#include "qfp/numeric.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <string>

namespace qfp {

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

namespace {

struct Scale {
  const char* text;
  int pow10;
};

// "meg" must be matched before "m".
constexpr std::array<Scale, 8> kEngSuffixes{{
    {"meg", 6},
    {"f", -15},
    {"p", -12},
    {"n", -9},
    {"u", -6},
    {"m", -3},
    {"k", 3},
    {"g", 9},
}};

constexpr std::array<Scale, 13> kSiPrefixes{{
    {"meg", 6},
    {"y", -24},
    {"z", -21},
    {"a", -18},
    {"f", -15},
    {"p", -12},
    {"n", -9},
    {"u", -6},
    {"m", -3},
    {"k", 3},
    {"M", 6},
    {"G", 9},
    {"T", 12},
}};

std::optional<double> parse_plain_double(std::string_view text, std::string_view* rest = nullptr) {
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc()) return std::nullopt;
  if (!std::isfinite(value)) return std::nullopt;  // rejects nan/inf spellings too
  if (rest)
    *rest = text.substr(static_cast<size_t>(ptr - text.data()));
  else if (ptr != text.data() + text.size())
    return std::nullopt;
  return value;
}

// Applies a power-of-ten scale to a numeric literal exactly: the decimal
// exponent is combined in text so the result is the correctly rounded
// double of the scaled decimal (multiplying doubles can be off by an ulp).
std::optional<double> parse_scaled(std::string_view num_text, int pow10) {
  size_t epos = num_text.find_first_of("eE");
  int exp10 = pow10;
  std::string base(num_text.substr(0, epos));
  if (epos != std::string_view::npos) {
    std::string_view etext = num_text.substr(epos + 1);
    int explicit_exp = 0;
    auto [ptr, ec] =
        std::from_chars(etext.data(), etext.data() + etext.size(), explicit_exp);
    if (ec != std::errc() || ptr != etext.data() + etext.size()) return std::nullopt;
    exp10 += explicit_exp;
  }
  std::string rebuilt = base + "e" + std::to_string(exp10);
  return parse_plain_double(rebuilt);
}

}  // namespace

std::optional<double> parse_quantity(std::string_view token) {
  std::string lowered = to_lower(token);
  std::string_view text = lowered;
  std::string_view rest;
  auto base = parse_plain_double(text, &rest);
  if (!base) return std::nullopt;
  if (rest.empty()) return *base;
  for (const auto& s : kEngSuffixes) {
    if (rest == s.text) {
      std::string_view num_text = text.substr(0, text.size() - rest.size());
      return parse_scaled(num_text, s.pow10);
    }
  }
  return std::nullopt;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  (void)ec;
  return std::string(buf, ptr);
}

std::string format_quantity(double value) {
  if (value == 0.0 || !std::isfinite(value)) return format_double(value);
  std::string plain = format_double(value);

  // Decompose the shortest round-trip form into sign, digit string, and a
  // decimal exponent, so the suffixed rendering shifts the exponent in text
  // and keeps the digits (and therefore the parsed double) identical.
  bool neg = plain[0] == '-';
  std::string body = neg ? plain.substr(1) : plain;
  int exp10 = 0;
  if (size_t epos = body.find('e'); epos != std::string::npos) {
    exp10 = std::stoi(body.substr(epos + 1));
    body.resize(epos);
  }
  if (size_t dot = body.find('.'); dot != std::string::npos) {
    exp10 -= static_cast<int>(body.size() - dot - 1);
    body.erase(dot, 1);
  }
  size_t first = body.find_first_not_of('0');
  if (first == std::string::npos) return "0";
  size_t last = body.find_last_not_of('0');
  exp10 += static_cast<int>(body.size() - 1 - last);
  std::string digits = body.substr(first, last - first + 1);

  // value = [-]digits * 10^exp10; magnitude exponent of the leading digit:
  int mag = static_cast<int>(digits.size()) - 1 + exp10;
  int p = static_cast<int>(std::floor(static_cast<double>(mag) / 3.0)) * 3;
  if (p < -15 || p > 9) return plain;

  const char* suffix = "";
  switch (p) {
    case -15: suffix = "f"; break;
    case -12: suffix = "p"; break;
    case -9: suffix = "n"; break;
    case -6: suffix = "u"; break;
    case -3: suffix = "m"; break;
    case 3: suffix = "k"; break;
    case 6: suffix = "meg"; break;
    case 9: suffix = "g"; break;
    default: break;
  }

  int shift = exp10 - p;
  std::string mant;
  if (shift >= 0) {
    mant = digits + std::string(static_cast<size_t>(shift), '0');
  } else {
    size_t frac = static_cast<size_t>(-shift);
    if (frac < digits.size()) {
      mant = digits.substr(0, digits.size() - frac) + "." + digits.substr(digits.size() - frac);
    } else {
      mant = "0." + std::string(frac - digits.size(), '0') + digits;
    }
  }
  std::string out = (neg ? "-" : "") + mant + suffix;
  auto back = parse_quantity(out);
  if (back && *back == value) return out;
  return plain;
}

std::optional<double> parse_unit_quantity(std::string_view text, std::string_view unit) {
  std::string_view rest;
  auto base = parse_plain_double(text, &rest);
  if (!base) return std::nullopt;
  std::string_view num_text = text.substr(0, text.size() - rest.size());

  if (unit == "dBm") {
    if (to_lower(rest) == "dbm") return *base;
    return std::nullopt;
  }

  if (rest.empty()) return std::nullopt;  // units are mandatory
  std::string rest_l = to_lower(rest);
  std::string unit_l = to_lower(unit);
  if (rest_l == unit_l) return *base;

  if (rest_l.size() > unit_l.size() &&
      rest_l.compare(rest_l.size() - unit_l.size(), unit_l.size(), unit_l) == 0) {
    std::string_view prefix(rest.data(), rest.size() - unit.size());
    std::string prefix_l = to_lower(prefix);
    for (const auto& p : kSiPrefixes) {
      // Case decides the scale where both spellings exist (m vs M, g vs G);
      // the unambiguous prefixes are accepted in either case.
      bool match = false;
      std::string pt(p.text);
      if (pt == "M" || pt == "G" || pt == "T") {
        match = (prefix == pt);
      } else if (pt == "m") {
        match = (prefix == "m");
      } else {
        match = (prefix_l == pt);
      }
      if (match) return parse_scaled(num_text, p.pow10);
    }
    return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace qfp
