#include "qfp/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "qfp/numeric.hpp"

namespace qfp {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("short write to " + path);
}

// ---------------------------------------------------------------------------
// Waveform
// ---------------------------------------------------------------------------

std::string waveform_to_csv(const Waveform& w) {
  std::string out = "time";
  for (const auto& label : w.labels()) {
    out += ',';
    out += label;
  }
  out += '\n';
  for (size_t i = 0; i < w.samples(); ++i) {
    out += format_double(w.time(i));
    for (size_t c = 0; c < w.column_count(); ++c) {
      out += ',';
      out += format_double(w.column(c)[i]);
    }
    out += '\n';
  }
  return out;
}

std::string waveform_to_json(const Waveform& w) {
  json j;
  j["dt"] = w.dt();
  j["t0"] = w.start_time();
  j["samples"] = w.samples();
  json cols = json::object();
  for (size_t c = 0; c < w.column_count(); ++c) cols[w.labels()[c]] = w.column(c);
  j["columns"] = std::move(cols);
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Analysis tables
// ---------------------------------------------------------------------------

std::string margin_results_to_csv(const std::vector<MarginResult>& rows) {
  std::string out = "f_hz,t_s,p_low_dbm,p_high_dbm,width_db,pass,note\n";
  for (const auto& r : rows) {
    out += format_double(r.f) + ',' + format_double(r.t_stage) + ',' +
           format_double(r.p_low) + ',' + format_double(r.p_high) + ',' +
           format_double(r.width_db) + ',' + (r.pass ? "1" : "0") + ',' + r.note + '\n';
  }
  return out;
}

std::string margin_results_to_json(const std::vector<MarginResult>& rows) {
  json arr = json::array();
  for (const auto& r : rows) {
    json j;
    j["f_hz"] = r.f;
    j["t_s"] = r.t_stage;
    j["p_low_dbm"] = r.p_low;
    j["p_high_dbm"] = r.p_high;
    j["width_db"] = r.width_db;
    j["pass"] = r.pass;
    if (!r.note.empty()) j["note"] = r.note;
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

std::string energy_sweep_to_csv(const EnergySweepResult& sweep) {
  std::string out = "f_hz,t_s,energy_j,energy_all_j,audit_residual\n";
  for (const auto& e : sweep.entries) {
    out += format_double(e.f) + ',' + format_double(e.t_stage) + ',' +
           format_double(e.energy) + ',' + format_double(e.energy_all) + ',' +
           format_double(e.audit_residual) + '\n';
  }
  return out;
}

std::string energy_sweep_to_json(const EnergySweepResult& sweep) {
  json arr = json::array();
  for (const auto& e : sweep.entries) {
    json j;
    j["f_hz"] = e.f;
    j["t_s"] = e.t_stage;
    j["energy_j"] = e.energy;
    j["energy_all_j"] = e.energy_all;
    j["audit_residual"] = e.audit_residual;
    j["per_combination_j"] = e.per_combination;
    json gates = json::array();
    for (const auto& g : e.per_gate) gates.push_back({{"gate", g.gate}, {"energy_j", g.energy}});
    j["per_gate"] = std::move(gates);
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

std::string skip_matrix_to_csv(const SkipFeasibilityMatrix& m) {
  std::string out = "f_hz,t_s,k,pass,predicted,margin_width_db,error\n";
  for (const auto& c : m.cells) {
    out += format_double(m.f) + ',' + format_double(c.t_stage) + ',' +
           std::to_string(c.k) + ',' + (c.pass ? "1" : "0") + ',' +
           (c.predicted ? "1" : "0") + ',' + format_double(c.margin_width_db) + ',' +
           c.error + '\n';
  }
  return out;
}

std::string skip_matrix_to_json(const SkipFeasibilityMatrix& m) {
  json j;
  j["f_hz"] = m.f;
  j["tmax_s"] = m.tmax;
  j["t_values_s"] = m.t_values;
  j["k_values"] = m.k_values;
  json cells = json::array();
  for (const auto& c : m.cells) {
    json cj;
    cj["t_s"] = c.t_stage;
    cj["k"] = c.k;
    cj["pass"] = c.pass;
    cj["predicted"] = c.predicted;
    if (!std::isnan(c.margin_width_db)) cj["margin_width_db"] = c.margin_width_db;
    if (!c.error.empty()) cj["error"] = c.error;
    cells.push_back(std::move(cj));
  }
  j["cells"] = std::move(cells);
  return j.dump(2) + "\n";
}

std::string skip_matrix_to_text(const SkipFeasibilityMatrix& m) {
  std::string out = "T \\ k";
  for (int k : m.k_values) out += '\t' + std::to_string(k);
  out += '\n';
  for (size_t ti = 0; ti < m.t_values.size(); ++ti) {
    out += format_quantity(m.t_values[ti]) + 's';
    for (size_t ki = 0; ki < m.k_values.size(); ++ki)
      out += std::string("\t") + (m.cell(ti, ki).pass ? "✓" : "✗");
    out += '\n';
  }
  return out;
}

std::string edp_table_to_csv(const std::vector<EdpEntry>& rows) {
  std::string out = "label,energy_j,delay_s,edp_js\n";
  for (const auto& r : rows)
    out += r.label + ',' + format_double(r.energy) + ',' + format_double(r.delay) + ',' +
           format_double(r.edp) + '\n';
  return out;
}

std::string edp_table_to_json(const std::vector<EdpEntry>& rows) {
  json arr = json::array();
  for (const auto& r : rows)
    arr.push_back({{"label", r.label},
                   {"energy_j", r.energy},
                   {"delay_s", r.delay},
                   {"edp_js", r.edp}});
  return arr.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Figures
// ---------------------------------------------------------------------------

namespace {

const char* const kSeriesColors[] = {"#1f6fb2", "#c23b22", "#2e8540", "#8a5fb0",
                                     "#b8860b", "#3b7b8a"};

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string fmt_tick(double v) {
  // short engineering-style tick labels
  return format_quantity(v);
}

}  // namespace

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label,
                           const std::vector<ChartSeries>& series, bool log_y) {
  const double width = 640, height = 420;
  const double ml = 70, mr = 20, mt = 40, mb = 50;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      double yy = log_y ? std::log10(std::max(y, 1e-300)) : y;
      if (first) { xmin = xmax = x; ymin = ymax = yy; first = false; continue; }
      xmin = std::min(xmin, x); xmax = std::max(xmax, x);
      ymin = std::min(ymin, yy); ymax = std::max(ymax, yy);
    }
  if (xmax == xmin) { xmax += 1; xmin -= 1; }
  if (ymax == ymin) { ymax += 1; ymin -= 1; }
  double xpad = 0.05 * (xmax - xmin), ypad = 0.08 * (ymax - ymin);
  xmin -= xpad; xmax += xpad; ymin -= ypad; ymax += ypad;
  auto X = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr); };
  auto Y = [&](double y) {
    double yy = log_y ? std::log10(std::max(y, 1e-300)) : y;
    return height - mb - (yy - ymin) / (ymax - ymin) * (height - mt - mb);
  };

  std::string svg =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + format_double(width) +
      "\" height=\"" + format_double(height) + "\" font-family=\"sans-serif\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + format_double(width / 2) + "\" y=\"24\" text-anchor=\"middle\" "
         "font-size=\"15\">" + svg_escape(title) + "</text>\n";
  // axes
  svg += "<line x1=\"" + format_double(ml) + "\" y1=\"" + format_double(height - mb) +
         "\" x2=\"" + format_double(width - mr) + "\" y2=\"" + format_double(height - mb) +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + format_double(ml) + "\" y1=\"" + format_double(mt) + "\" x2=\"" +
         format_double(ml) + "\" y2=\"" + format_double(height - mb) +
         "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    double fx = xmin + (xmax - xmin) * i / 5.0;
    double fy = ymin + (ymax - ymin) * i / 5.0;
    double px = X(fx);
    double py = height - mb - (fy - ymin) / (ymax - ymin) * (height - mt - mb);
    svg += "<line x1=\"" + format_double(px) + "\" y1=\"" + format_double(height - mb) +
           "\" x2=\"" + format_double(px) + "\" y2=\"" + format_double(height - mb + 5) +
           "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + format_double(px) + "\" y=\"" + format_double(height - mb + 18) +
           "\" text-anchor=\"middle\" font-size=\"11\">" + fmt_tick(fx) + "</text>\n";
    svg += "<line x1=\"" + format_double(ml - 5) + "\" y1=\"" + format_double(py) +
           "\" x2=\"" + format_double(ml) + "\" y2=\"" + format_double(py) +
           "\" stroke=\"black\"/>\n";
    double tick = log_y ? std::pow(10.0, fy) : fy;
    svg += "<text x=\"" + format_double(ml - 8) + "\" y=\"" + format_double(py + 4) +
           "\" text-anchor=\"end\" font-size=\"11\">" + fmt_tick(tick) + "</text>\n";
  }
  svg += "<text x=\"" + format_double((ml + width - mr) / 2) + "\" y=\"" +
         format_double(height - 12) + "\" text-anchor=\"middle\" font-size=\"12\">" +
         svg_escape(x_label) + "</text>\n";
  svg += "<text x=\"16\" y=\"" + format_double((mt + height - mb) / 2) +
         "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 " +
         format_double((mt + height - mb) / 2) + ")\">" + svg_escape(y_label) +
         "</text>\n";
  for (size_t s = 0; s < series.size(); ++s) {
    const char* color = kSeriesColors[s % 6];
    std::string pts;
    for (auto [x, y] : series[s].points) {
      if (!pts.empty()) pts += ' ';
      pts += format_double(X(x)) + ',' + format_double(Y(y));
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"1.8\" points=\"" + pts + "\"/>\n";
    for (auto [x, y] : series[s].points)
      svg += "<circle cx=\"" + format_double(X(x)) + "\" cy=\"" + format_double(Y(y)) +
             "\" r=\"2.6\" fill=\"" + color + "\"/>\n";
    svg += "<text x=\"" + format_double(width - mr - 6) + "\" y=\"" +
           format_double(mt + 14 + 16 * static_cast<double>(s)) +
           "\" text-anchor=\"end\" font-size=\"11\" fill=\"" + color + "\">" +
           svg_escape(series[s].name) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::string skip_heatmap_svg(const SkipFeasibilityMatrix& m) {
  const double cell = 56, ml = 90, mt = 50, mb = 40, mr = 20;
  double width = ml + cell * static_cast<double>(m.k_values.size()) + mr;
  double height = mt + cell * static_cast<double>(m.t_values.size()) + mb;
  std::string svg =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + format_double(width) +
      "\" height=\"" + format_double(height) + "\" font-family=\"sans-serif\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + format_double(width / 2) +
         "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">phase-skip feasibility, f = " +
         format_quantity(m.f) + "Hz</text>\n";
  for (size_t ti = 0; ti < m.t_values.size(); ++ti) {
    svg += "<text x=\"" + format_double(ml - 10) + "\" y=\"" +
           format_double(mt + cell * (static_cast<double>(ti) + 0.5) + 4) +
           "\" text-anchor=\"end\" font-size=\"12\">T = " + format_quantity(m.t_values[ti]) +
           "s</text>\n";
    for (size_t ki = 0; ki < m.k_values.size(); ++ki) {
      const SkipCell& c = m.cell(ti, ki);
      const char* fill = c.pass ? "#7fbf7f" : "#e08080";
      svg += "<rect x=\"" + format_double(ml + cell * static_cast<double>(ki)) + "\" y=\"" +
             format_double(mt + cell * static_cast<double>(ti)) + "\" width=\"" +
             format_double(cell - 2) + "\" height=\"" + format_double(cell - 2) +
             "\" fill=\"" + fill + "\"/>\n";
      svg += "<text x=\"" + format_double(ml + cell * (static_cast<double>(ki) + 0.5) - 1) +
             "\" y=\"" + format_double(mt + cell * (static_cast<double>(ti) + 0.5) + 4) +
             "\" text-anchor=\"middle\" font-size=\"13\">" + (c.pass ? "pass" : "fail") +
             "</text>\n";
    }
  }
  for (size_t ki = 0; ki < m.k_values.size(); ++ki)
    svg += "<text x=\"" + format_double(ml + cell * (static_cast<double>(ki) + 0.5) - 1) +
           "\" y=\"" + format_double(height - 16) +
           "\" text-anchor=\"middle\" font-size=\"12\">k = " +
           std::to_string(m.k_values[ki]) + "</text>\n";
  svg += "</svg>\n";
  return svg;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

std::string manifest_to_json(const RunManifest& m) {
  json j;
  j["command"] = m.command;
  json inputs = json::array();
  for (const auto& [path, digest] : m.inputs)
    inputs.push_back({{"path", path}, {"sha256", digest}});
  j["inputs"] = std::move(inputs);
  json cfg = json::parse(m.config_json, nullptr, false);
  j["config"] = cfg.is_discarded() ? json(m.config_json) : cfg;
  j["out_dir"] = m.out_dir;
  j["seed"] = m.seed;
  j["tool_version"] = m.tool_version;
  j["timestamp"] = m.timestamp;
  return j.dump(2) + "\n";
}

}  // namespace qfp
