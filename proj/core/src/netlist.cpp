#include "qfp/netlist.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "qfp/numeric.hpp"

namespace qfp {

std::string_view to_string(NetlistErrorCode code) {
  switch (code) {
    case NetlistErrorCode::BadSyntax: return "BadSyntax";
    case NetlistErrorCode::UnknownDeviceKind: return "UnknownDeviceKind";
    case NetlistErrorCode::DuplicateName: return "DuplicateName";
    case NetlistErrorCode::UnbalancedSubckt: return "UnbalancedSubckt";
    case NetlistErrorCode::BadNumber: return "BadNumber";
    case NetlistErrorCode::DanglingMutualReference: return "DanglingMutualReference";
    case NetlistErrorCode::UnknownModel: return "UnknownModel";
    case NetlistErrorCode::ArityMismatch: return "ArityMismatch";
    case NetlistErrorCode::RecursionDetected: return "RecursionDetected";
    case NetlistErrorCode::InvalidValue: return "InvalidValue";
  }
  return "UnknownError";
}

namespace {

std::string describe(NetlistErrorCode code, int line, int column, const std::string& detail) {
  std::ostringstream os;
  os << "line " << line << ", col " << column << ": " << to_string(code);
  if (!detail.empty()) os << ": " << detail;
  return os.str();
}

}  // namespace

NetlistError::NetlistError(NetlistErrorCode code, int line, int column, const std::string& detail)
    : std::runtime_error(describe(code, line, column, detail)),
      code_(code),
      line_(line),
      column_(column) {}

// ---------------------------------------------------------------------------
// Waveform evaluation
// ---------------------------------------------------------------------------

double eval_waveform(const SourceWaveform& w, double t) {
  if (t < 0.0) t = 0.0;
  return std::visit(
      [t](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, DcSpec>) {
          if (s.ramp > 0.0 && t < s.ramp) return s.value * (t / s.ramp);
          return s.value;
        } else if constexpr (std::is_same_v<T, SineSpec>) {
          double v = s.offset +
                     s.amplitude * std::sin(2.0 * std::numbers::pi * s.frequency * (t - s.delay));
          if (s.ramp_cycles > 0.0) {
            double ramp_time = s.ramp_cycles / s.frequency;
            if (t < ramp_time) v *= t / ramp_time;
          }
          return v;
        } else if constexpr (std::is_same_v<T, PwlSpec>) {
          const auto& p = s.points;
          if (p.empty()) return 0.0;
          if (t <= p.front().first) return p.front().second;
          if (t >= p.back().first) return p.back().second;
          for (size_t i = 1; i < p.size(); ++i) {
            if (t <= p[i].first) {
              double u = (t - p[i - 1].first) / (p[i].first - p[i - 1].first);
              return p[i - 1].second + u * (p[i].second - p[i - 1].second);
            }
          }
          return p.back().second;
        } else {
          // BitSpec
          if (s.pattern.empty()) return 0.0;
          auto level = [&](ptrdiff_t k) {
            k = std::clamp<ptrdiff_t>(k, 0, static_cast<ptrdiff_t>(s.pattern.size()) - 1);
            return s.pattern[static_cast<size_t>(k)] == '1' ? s.high : s.low;
          };
          ptrdiff_t k = static_cast<ptrdiff_t>(std::floor(t / s.period));
          if (k < 0) return level(0);
          double t_in = t - static_cast<double>(k) * s.period;
          double from = level(k - 1), to = level(k);
          if (k == 0 || t_in >= s.trise || s.trise <= 0.0) return to;
          return from + (to - from) * (t_in / s.trise);
        }
      },
      w);
}

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

namespace {

struct Token {
  std::string text;
  int line = 0;
  int col = 0;
};

bool is_separator(char c) { return c == ' ' || c == '\t' || c == ','; }
bool is_solo(char c) { return c == '(' || c == ')' || c == '='; }

std::vector<Token> tokenize_line(std::string_view text, int line_no) {
  std::vector<Token> out;
  size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (is_separator(c)) {
      ++i;
      continue;
    }
    if (is_solo(c)) {
      out.push_back({std::string(1, c), line_no, static_cast<int>(i) + 1});
      ++i;
      continue;
    }
    size_t start = i;
    while (i < text.size() && !is_separator(text[i]) && !is_solo(text[i])) ++i;
    out.push_back({std::string(text.substr(start, i - start)), line_no,
                   static_cast<int>(start) + 1});
  }
  return out;
}

struct LogicalLine {
  std::vector<Token> tokens;
};

[[noreturn]] void fail(NetlistErrorCode code, const Token& at, const std::string& detail) {
  throw NetlistError(code, at.line, at.col, detail);
}

class Parser {
 public:
  explicit Parser(std::string_view text) { split(text); }

  Netlist run() {
    Netlist n;
    n.title = title_;
    SubcircuitDef* open_subckt = nullptr;
    Token open_tok;
    bool ended = false;

    for (auto& ll : lines_) {
      Token& head = ll.tokens.front();
      if (ended) fail(NetlistErrorCode::BadSyntax, head, "content after .end");
      std::string first = to_lower(head.text);

      if (first == ".end") {
        if (open_subckt) fail(NetlistErrorCode::UnbalancedSubckt, head, "missing .ends");
        ended = true;
        continue;
      }
      if (first == ".ends") {
        if (!open_subckt) fail(NetlistErrorCode::UnbalancedSubckt, head, "no open .subckt");
        open_subckt = nullptr;
        continue;
      }
      if (first == ".subckt") {
        if (open_subckt)
          fail(NetlistErrorCode::UnbalancedSubckt, head, "nested .subckt not supported");
        if (ll.tokens.size() < 3)
          fail(NetlistErrorCode::BadSyntax, head, ".subckt needs a name and ports");
        std::string name = to_lower(ll.tokens[1].text);
        if (n.subckts.count(name))
          fail(NetlistErrorCode::DuplicateName, ll.tokens[1], "subckt " + name);
        SubcircuitDef def;
        def.name = name;
        for (size_t i = 2; i < ll.tokens.size(); ++i)
          def.ports.push_back(to_lower(ll.tokens[i].text));
        open_subckt = &n.subckts.emplace(name, std::move(def)).first->second;
        open_tok = head;
        continue;
      }
      if (first == ".model") {
        if (open_subckt)
          fail(NetlistErrorCode::BadSyntax, head, ".model not allowed inside .subckt");
        parse_model(n, ll);
        continue;
      }
      if (first[0] == '.') fail(NetlistErrorCode::BadSyntax, head, "unknown directive " + first);

      Device dev = parse_device(ll);
      auto& scope = open_subckt ? open_subckt->devices : n.devices;
      for (const auto& d : scope) {
        if (d.name == dev.name) fail(NetlistErrorCode::DuplicateName, head, dev.name);
      }
      scope.push_back(std::move(dev));
    }

    if (open_subckt) {
      fail(NetlistErrorCode::UnbalancedSubckt, open_tok, "missing .ends");
    }
    if (!ended) {
      Token eof{"", line_count_, 1};
      fail(NetlistErrorCode::BadSyntax, eof, "missing .end");
    }
    validate(n);
    return n;
  }

 private:
  void split(std::string_view text) {
    std::vector<std::pair<int, std::string>> physical;
    int line_no = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
      size_t nl = text.find('\n', pos);
      std::string_view raw =
          text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
      if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
      ++line_no;
      physical.emplace_back(line_no, std::string(raw));
      if (nl == std::string_view::npos) break;
      pos = nl + 1;
    }
    line_count_ = line_no;

    bool seen_content = false;
    for (auto& [no, raw] : physical) {
      size_t ws = raw.find_first_not_of(" \t");
      if (ws == std::string::npos) continue;
      if (raw[ws] == '*') {
        if (!seen_content && !got_title_) {
          std::string t = raw.substr(ws + 1);
          if (!t.empty() && t.front() == ' ') t.erase(t.begin());
          title_ = t;
          got_title_ = true;
        }
        continue;
      }
      if (raw[ws] == '+') {
        if (lines_.empty())
          throw NetlistError(NetlistErrorCode::BadSyntax, no, static_cast<int>(ws) + 1,
                             "continuation with no previous line");
        auto cont = tokenize_line(std::string_view(raw).substr(ws + 1), no);
        for (auto& t : cont) {
          t.col += static_cast<int>(ws) + 1;
          lines_.back().tokens.push_back(std::move(t));
        }
        continue;
      }
      seen_content = true;
      auto toks = tokenize_line(raw, no);
      if (!toks.empty()) lines_.push_back({std::move(toks)});
    }
  }

  static double number(const Token& t) {
    auto v = parse_quantity(t.text);
    if (!v) fail(NetlistErrorCode::BadNumber, t, t.text);
    return *v;
  }

  // Parses "key = value" groups from tokens[i..]; returns lowercase key → token index of value.
  static std::map<std::string, Token> kv_pairs(const std::vector<Token>& toks, size_t i,
                                               size_t end) {
    std::map<std::string, Token> out;
    while (i < end) {
      if (i + 2 >= end || toks[i + 1].text != "=")
        fail(NetlistErrorCode::BadSyntax, toks[i], "expected key=value");
      std::string key = to_lower(toks[i].text);
      if (out.count(key)) fail(NetlistErrorCode::DuplicateName, toks[i], "duplicate " + key);
      out.emplace(key, toks[i + 2]);
      i += 3;
    }
    return out;
  }

  void parse_model(Netlist& n, LogicalLine& ll) {
    auto& toks = ll.tokens;
    // .model NAME jj ( k=v ... )
    if (toks.size() < 4) fail(NetlistErrorCode::BadSyntax, toks[0], "malformed .model");
    std::string name = to_lower(toks[1].text);
    if (n.models.count(name)) fail(NetlistErrorCode::DuplicateName, toks[1], "model " + name);
    if (to_lower(toks[2].text) != "jj")
      fail(NetlistErrorCode::BadSyntax, toks[2], "only jj models supported");
    if (toks[3].text != "(" || toks.back().text != ")")
      fail(NetlistErrorCode::BadSyntax, toks[3], "expected (...) parameter list");
    auto kv = kv_pairs(toks, 4, toks.size() - 1);

    JjModel m;
    m.name = name;
    struct Field {
      const char* key;
      double JjModel::*member;
    };
    const Field fields[] = {{"ic", &JjModel::critical_current},
                            {"c", &JjModel::capacitance},
                            {"rsg", &JjModel::r_subgap},
                            {"rn", &JjModel::r_normal},
                            {"vg", &JjModel::v_gap}};
    for (const auto& f : fields) {
      auto it = kv.find(f.key);
      if (it == kv.end())
        fail(NetlistErrorCode::BadSyntax, toks[1], std::string("model missing ") + f.key);
      m.*(f.member) = number(it->second);
      kv.erase(it);
    }
    if (!kv.empty())
      fail(NetlistErrorCode::BadSyntax, kv.begin()->second, "unknown model parameter");
    n.models.emplace(name, std::move(m));
  }

  SourceWaveform parse_wave(const std::vector<Token>& toks, size_t i) {
    const Token& head = toks[i];
    std::string kind = to_lower(head.text);
    if (kind == "dc") {
      if (i + 1 >= toks.size()) fail(NetlistErrorCode::BadSyntax, head, "dc needs a value");
      DcSpec s;
      s.value = number(toks[i + 1]);
      size_t j = i + 2;
      if (j < toks.size()) {
        auto kv = kv_pairs(toks, j, toks.size());
        for (auto& [k, v] : kv) {
          if (k == "ramp")
            s.ramp = number(v);
          else
            fail(NetlistErrorCode::BadSyntax, v, "unknown dc parameter " + k);
        }
      }
      return s;
    }

    auto args = [&](const char* what, size_t lo, size_t hi) {
      if (i + 1 >= toks.size() || toks[i + 1].text != "(")
        fail(NetlistErrorCode::BadSyntax, head, std::string(what) + " expects (...)");
      if (toks.back().text != ")")
        fail(NetlistErrorCode::BadSyntax, head, std::string(what) + " missing )");
      std::vector<Token> inner(toks.begin() + static_cast<ptrdiff_t>(i) + 2, toks.end() - 1);
      if (inner.size() < lo || inner.size() > hi)
        fail(NetlistErrorCode::BadSyntax, head, std::string(what) + " argument count");
      return inner;
    };

    if (kind == "sin") {
      auto a = args("sin", 4, 5);
      SineSpec s;
      s.offset = number(a[0]);
      s.amplitude = number(a[1]);
      s.frequency = number(a[2]);
      s.delay = number(a[3]);
      if (a.size() == 5) s.ramp_cycles = number(a[4]);
      return s;
    }
    if (kind == "pwl") {
      auto a = args("pwl", 2, 4096);
      if (a.size() % 2) fail(NetlistErrorCode::BadSyntax, head, "pwl needs (t v) pairs");
      PwlSpec s;
      for (size_t j = 0; j < a.size(); j += 2)
        s.points.emplace_back(number(a[j]), number(a[j + 1]));
      return s;
    }
    if (kind == "bits") {
      auto a = args("bits", 5, 5);
      BitSpec s;
      s.pattern = a[0].text;
      for (char c : s.pattern) {
        if (c != '0' && c != '1')
          fail(NetlistErrorCode::BadSyntax, a[0], "bit pattern must be 0/1");
      }
      s.period = number(a[1]);
      s.trise = number(a[2]);
      s.high = number(a[3]);
      s.low = number(a[4]);
      return s;
    }
    fail(NetlistErrorCode::BadSyntax, head, "unknown waveform " + kind);
  }

  Device parse_device(LogicalLine& ll) {
    auto& toks = ll.tokens;
    Token& head = toks[0];
    std::string name = to_lower(head.text);
    char kind = name[0];
    Device dev;
    dev.name = name;

    auto need = [&](size_t count) {
      if (toks.size() != count)
        fail(NetlistErrorCode::BadSyntax, head, "wrong field count for " + name);
    };
    auto node = [&](size_t i) { return to_lower(toks[i].text); };

    switch (kind) {
      case 'r':
        need(4);
        dev.terminals = {node(1), node(2)};
        dev.body = Resistor{number(toks[3])};
        break;
      case 'l':
        need(4);
        dev.terminals = {node(1), node(2)};
        dev.body = Inductor{number(toks[3])};
        break;
      case 'c':
        need(4);
        dev.terminals = {node(1), node(2)};
        dev.body = Capacitor{number(toks[3])};
        break;
      case 'k':
        need(4);
        dev.body = MutualCoupling{node(1), node(2), number(toks[3])};
        break;
      case 'b': {
        if (toks.size() < 4) fail(NetlistErrorCode::BadSyntax, head, "junction needs model");
        dev.terminals = {node(1), node(2)};
        Junction j;
        j.model = node(3);
        if (toks.size() > 4) {
          auto kv = kv_pairs(toks, 4, toks.size());
          for (auto& [k, v] : kv) {
            if (k == "area")
              j.area = number(v);
            else
              fail(NetlistErrorCode::BadSyntax, v, "unknown junction parameter " + k);
          }
        }
        dev.body = j;
        break;
      }
      case 't': {
        if (toks.size() != 11)
          fail(NetlistErrorCode::BadSyntax, head, "transmission line needs 4 nodes, z0=, td=");
        dev.terminals = {node(1), node(2), node(3), node(4)};
        auto kv = kv_pairs(toks, 5, toks.size());
        TransmissionLine tl;
        bool got_z0 = false, got_td = false;
        for (auto& [k, v] : kv) {
          if (k == "z0") {
            tl.z0 = number(v);
            got_z0 = true;
          } else if (k == "td") {
            tl.delay = number(v);
            got_td = true;
          } else {
            fail(NetlistErrorCode::BadSyntax, v, "unknown line parameter " + k);
          }
        }
        if (!got_z0 || !got_td)
          fail(NetlistErrorCode::BadSyntax, head, "transmission line needs z0= and td=");
        dev.body = tl;
        break;
      }
      case 'i':
      case 'v': {
        if (toks.size() < 4) fail(NetlistErrorCode::BadSyntax, head, "source needs a waveform");
        dev.terminals = {node(1), node(2)};
        SourceWaveform w = parse_wave(toks, 3);
        if (kind == 'i')
          dev.body = CurrentSource{std::move(w)};
        else
          dev.body = VoltageSource{std::move(w)};
        break;
      }
      case 'x': {
        if (toks.size() < 3)
          fail(NetlistErrorCode::BadSyntax, head, "instance needs subckt and nodes");
        SubcktInstance inst;
        inst.subckt = node(1);
        for (size_t i = 2; i < toks.size(); ++i) dev.terminals.push_back(node(i));
        dev.body = inst;
        break;
      }
      default:
        fail(NetlistErrorCode::UnknownDeviceKind, head, std::string(1, kind));
    }
    return dev;
  }

  std::vector<LogicalLine> lines_;
  std::string title_;
  bool got_title_ = false;
  int line_count_ = 0;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

void validate_scope(const Netlist& n, const std::vector<Device>& devices,
                    const std::string& scope_name);

}  // namespace

void validate(const Netlist& n) {
  validate_scope(n, n.devices, "");
  for (const auto& [name, def] : n.subckts) validate_scope(n, def.devices, name);
  for (const auto& [name, m] : n.models) {
    if (m.critical_current <= 0 || m.capacitance <= 0 || m.r_subgap <= 0 || m.r_normal <= 0 ||
        m.v_gap <= 0)
      throw NetlistError(NetlistErrorCode::InvalidValue, 0, 0,
                         "model " + name + ": all parameters must be > 0");
  }
}

Netlist parse_netlist(std::string_view text) { return Parser(text).run(); }

namespace {

void validate_scope(const Netlist& n, const std::vector<Device>& devices,
                    const std::string& scope_name) {
  auto err = [&](NetlistErrorCode code, const std::string& detail) {
    throw NetlistError(code, 0, 0, scope_name.empty() ? detail : scope_name + ": " + detail);
  };

  std::map<std::string, const Device*> by_name;
  for (const auto& d : devices) {
    if (d.name.empty()) err(NetlistErrorCode::BadSyntax, "unnamed device");
    if (!by_name.emplace(d.name, &d).second)
      err(NetlistErrorCode::DuplicateName, d.name);
  }

  for (const auto& d : devices) {
    std::visit(
        [&](const auto& body) {
          using T = std::decay_t<decltype(body)>;
          if constexpr (std::is_same_v<T, Resistor>) {
            if (body.resistance <= 0)
              err(NetlistErrorCode::InvalidValue, d.name + ": resistance must be > 0");
          } else if constexpr (std::is_same_v<T, Inductor>) {
            if (body.inductance <= 0)
              err(NetlistErrorCode::InvalidValue, d.name + ": inductance must be > 0");
          } else if constexpr (std::is_same_v<T, Capacitor>) {
            if (body.capacitance <= 0)
              err(NetlistErrorCode::InvalidValue, d.name + ": capacitance must be > 0");
          } else if constexpr (std::is_same_v<T, MutualCoupling>) {
            for (const std::string* ref : {&body.first, &body.second}) {
              auto it = by_name.find(*ref);
              if (it == by_name.end() || !it->second->is('l'))
                err(NetlistErrorCode::DanglingMutualReference, d.name + " -> " + *ref);
            }
            if (body.first == body.second)
              err(NetlistErrorCode::DanglingMutualReference, d.name + ": self coupling");
            if (!(std::fabs(body.k) < 1.0))
              err(NetlistErrorCode::InvalidValue, d.name + ": |k| must be < 1");
          } else if constexpr (std::is_same_v<T, Junction>) {
            if (!n.models.count(body.model))
              err(NetlistErrorCode::UnknownModel, d.name + " -> " + body.model);
            if (body.area <= 0)
              err(NetlistErrorCode::InvalidValue, d.name + ": area must be > 0");
          } else if constexpr (std::is_same_v<T, TransmissionLine>) {
            if (body.z0 <= 0) err(NetlistErrorCode::InvalidValue, d.name + ": z0 must be > 0");
            if (body.delay <= 0)
              err(NetlistErrorCode::InvalidValue, d.name + ": td must be > 0");
          } else if constexpr (std::is_same_v<T, CurrentSource> ||
                               std::is_same_v<T, VoltageSource>) {
            std::visit(
                [&](const auto& w) {
                  using W = std::decay_t<decltype(w)>;
                  if constexpr (std::is_same_v<W, SineSpec>) {
                    if (w.frequency <= 0)
                      err(NetlistErrorCode::InvalidValue, d.name + ": frequency must be > 0");
                    if (w.ramp_cycles < 0)
                      err(NetlistErrorCode::InvalidValue, d.name + ": rampcycles must be >= 0");
                  } else if constexpr (std::is_same_v<W, PwlSpec>) {
                    for (size_t i = 1; i < w.points.size(); ++i) {
                      if (!(w.points[i].first > w.points[i - 1].first))
                        err(NetlistErrorCode::InvalidValue,
                            d.name + ": pwl times must be strictly increasing");
                    }
                  } else if constexpr (std::is_same_v<W, BitSpec>) {
                    if (w.pattern.empty())
                      err(NetlistErrorCode::InvalidValue, d.name + ": empty bit pattern");
                    if (w.period <= 0)
                      err(NetlistErrorCode::InvalidValue, d.name + ": bit period must be > 0");
                    if (w.trise < 0 || !(w.period > 4.0 * w.trise))
                      err(NetlistErrorCode::InvalidValue,
                          d.name + ": bit period must exceed 4x transition time");
                  } else {
                    if (w.ramp < 0)
                      err(NetlistErrorCode::InvalidValue, d.name + ": ramp must be >= 0");
                  }
                },
                body.wave);
          } else if constexpr (std::is_same_v<T, SubcktInstance>) {
            auto it = n.subckts.find(body.subckt);
            if (it == n.subckts.end())
              err(NetlistErrorCode::UnknownModel, d.name + " -> subckt " + body.subckt);
            if (it->second.ports.size() != d.terminals.size())
              err(NetlistErrorCode::ArityMismatch,
                  d.name + ": " + std::to_string(d.terminals.size()) + " nodes for " +
                      std::to_string(it->second.ports.size()) + "-port subckt");
          }
        },
        d.body);
  }
}

}  // namespace

}  // namespace qfp
