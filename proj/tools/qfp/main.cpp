#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qfp/analysis.hpp"
#include "qfp/cells.hpp"
#include "qfp/clocking.hpp"
#include "qfp/engine.hpp"
#include "qfp/io.hpp"
#include "qfp/netlist.hpp"
#include "qfp/numeric.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "qfp 0.1.0";

// exit codes: 0 ok, 2 parse/usage error, 3 convergence or physics failure,
// 4 file I/O
constexpr int kExitParse = 2;
constexpr int kExitConverge = 3;
constexpr int kExitIo = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Argument plumbing
// ---------------------------------------------------------------------------

double need_unit(const std::string& text, const std::string& unit, const char* flag) {
  auto v = qfp::parse_unit_quantity(text, unit);
  if (!v)
    throw UsageError(std::string(flag) + ": expected a value with unit " + unit +
                     ", got '" + text + "'");
  return *v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos <= s.size()) {
    size_t next = s.find(sep, pos);
    if (next == std::string::npos) next = s.size();
    out.push_back(s.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

std::vector<double> parse_unit_list(const std::string& text, const std::string& unit,
                                    const char* flag) {
  std::vector<double> out;
  for (const auto& item : split(text, ','))
    if (!item.empty()) out.push_back(need_unit(item, unit, flag));
  if (out.empty()) throw UsageError(std::string(flag) + ": empty list");
  return out;
}

// "0..4" or "0,1,3"
std::vector<int> parse_int_range(const std::string& text, const char* flag) {
  std::vector<int> out;
  size_t dots = text.find("..");
  try {
    if (dots != std::string::npos) {
      int lo = std::stoi(text.substr(0, dots));
      int hi = std::stoi(text.substr(dots + 2));
      for (int k = lo; k <= hi; ++k) out.push_back(k);
    } else {
      for (const auto& item : split(text, ','))
        if (!item.empty()) out.push_back(std::stoi(item));
    }
  } catch (const std::exception&) {
    throw UsageError(std::string(flag) + ": expected N..M or a comma list, got '" + text +
                     "'");
  }
  if (out.empty()) throw UsageError(std::string(flag) + ": empty range");
  return out;
}

qfp::CellKind need_cut(const std::string& name) {
  auto kind = qfp::parse_cell_kind(name);
  if (!kind) throw UsageError("--cut: unknown cell kind '" + name + "'");
  return *kind;
}

std::string now_iso8601() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Shared run context
// ---------------------------------------------------------------------------

struct Context {
  std::string config_path;
  std::string out_dir;
  int jobs = 0;
  uint64_t seed = 0x7f;
  std::string mode_name = "fullline";
  bool figures = false;
  std::string params_path;

  std::string command_line;
  qfp::SimConfig sim;
  json config_doc = json::object();

  qfp::ExcitationMode mode() const {
    if (mode_name == "fullline") return qfp::ExcitationMode::FullLine;
    if (mode_name == "idealdelay") return qfp::ExcitationMode::IdealDelay;
    throw UsageError("--mode: expected fullline or idealdelay, got '" + mode_name + "'");
  }

  // Applies the optional JSON config file: {"sim": {...}, "clock": {...}},
  // numeric fields in SI units.
  void load_config() {
    sim.excitation_mode = mode();
    if (config_path.empty()) return;
    json doc = json::parse(qfp::read_text_file(config_path));
    config_doc = doc;
    if (doc.contains("sim")) {
      const json& s = doc["sim"];
      if (s.contains("dt")) sim.dt = s["dt"].get<double>();
      if (s.contains("t_stop")) sim.t_stop = s["t_stop"].get<double>();
      if (s.contains("newton_rel_tol")) sim.newton_rel_tol = s["newton_rel_tol"].get<double>();
      if (s.contains("newton_abs_tol_v"))
        sim.newton_abs_tol_v = s["newton_abs_tol_v"].get<double>();
      if (s.contains("newton_abs_tol_i"))
        sim.newton_abs_tol_i = s["newton_abs_tol_i"].get<double>();
      if (s.contains("max_newton_iters")) sim.max_newton_iters = s["max_newton_iters"].get<int>();
    }
  }

  // Clock fields not owned by a command flag.
  void apply_clock_config(qfp::ClockSpec& clock) const {
    if (!config_doc.contains("clock")) return;
    const json& c = config_doc["clock"];
    if (c.contains("z0")) clock.z0 = c["z0"].get<double>();
    if (c.contains("terminator")) clock.terminator = c["terminator"].get<double>();
    if (c.contains("ramp_cycles")) clock.ramp_cycles = c["ramp_cycles"].get<int>();
    if (c.contains("id")) clock.id = c["id"].get<double>();
    if (c.contains("px_dbm")) {
      clock.amplitude.reset();
      clock.px_dbm = c["px_dbm"].get<double>();
    }
    if (c.contains("amplitude")) {
      clock.px_dbm.reset();
      clock.amplitude = c["amplitude"].get<double>();
    }
  }

  qfp::AqfpCellParams cell_params(bool calibrated, double f, double t_cal) const {
    qfp::AqfpCellParams p = params_path.empty()
                                ? qfp::default_cell_params()
                                : qfp::cell_params_from_json(qfp::read_text_file(params_path));
    if (!calibrated) return p;
    qfp::ClockSpec cal = qfp::nominal_clock(p, f, t_cal);
    apply_clock_config(cal);
    return qfp::calibrate(p, cal, nullptr);
  }

  fs::path outdir() const {
    if (out_dir.empty()) throw UsageError("--out is required for this command");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("cannot create " + out_dir + ": " + ec.message());
    return out_dir;
  }

  void write_manifest(const std::vector<std::pair<std::string, std::string>>& inputs,
                      const json& resolved) const {
    qfp::RunManifest m;
    m.command = command_line;
    m.inputs = inputs;
    m.config_json = resolved.dump();
    m.out_dir = out_dir;
    m.seed = seed;
    m.tool_version = kVersion;
    m.timestamp = now_iso8601();
    qfp::write_text_file((outdir() / "manifest.json").string(), qfp::manifest_to_json(m));
  }
};

// Tool-side grid parallelism (analysis.skip_scan has its own).
void for_each_parallel(size_t count, int jobs, const std::function<void(size_t)>& fn) {
  unsigned workers = jobs > 0 ? static_cast<unsigned>(jobs)
                              : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(count));
  if (workers <= 1) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (size_t i; (i = next.fetch_add(1)) < count;) fn(i);
    });
  for (auto& t : pool) t.join();
}

json sim_to_json(const qfp::SimConfig& sim) {
  return {{"dt", sim.dt},
          {"t_stop", sim.t_stop},
          {"newton_rel_tol", sim.newton_rel_tol},
          {"newton_abs_tol_v", sim.newton_abs_tol_v},
          {"newton_abs_tol_i", sim.newton_abs_tol_i},
          {"max_newton_iters", sim.max_newton_iters},
          {"excitation_mode",
           sim.excitation_mode == qfp::ExcitationMode::FullLine ? "fullline" : "idealdelay"}};
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

int cmd_run(Context& ctx, const std::string& netlist_path, const std::string& tstop_text,
            const std::string& dt_text, const std::vector<std::string>& probe_texts) {
  std::string text = qfp::read_text_file(netlist_path);
  if (!dt_text.empty()) ctx.sim.dt = need_unit(dt_text, "s", "--dt");
  if (!tstop_text.empty()) ctx.sim.t_stop = need_unit(tstop_text, "s", "--tstop");
  if (ctx.sim.t_stop <= 0.0) throw UsageError("--tstop (or config t_stop) is required");

  std::vector<qfp::Probe> probes;
  for (const auto& p : probe_texts) {
    std::string low = qfp::to_lower(p);
    auto open = low.find('(');
    if (open == std::string::npos || low.back() != ')')
      throw UsageError("--probe: expected v(node), i(dev), phi(dev) or p(dev), got '" + p +
                       "'");
    std::string kind = low.substr(0, open);
    std::string arg = low.substr(open + 1, low.size() - open - 2);
    if (kind == "v") probes.push_back(qfp::NodeVoltageProbe{arg});
    else if (kind == "i") probes.push_back(qfp::BranchCurrentProbe{arg});
    else if (kind == "phi") probes.push_back(qfp::JunctionPhaseProbe{arg});
    else if (kind == "p") probes.push_back(qfp::DevicePowerProbe{arg});
    else throw UsageError("--probe: unknown probe kind '" + kind + "'");
  }

  json resolved = {{"sim", sim_to_json(ctx.sim)}, {"netlist", netlist_path}};
  ctx.write_manifest({{netlist_path, qfp::sha256_hex(text)}}, resolved);

  qfp::Netlist n = qfp::parse_netlist(text);
  qfp::RunResult rr = qfp::run_transient(n, ctx.sim, probes);

  fs::path out = ctx.outdir();
  qfp::write_text_file((out / "waveform.csv").string(), qfp::waveform_to_csv(rr.waveform));
  qfp::write_text_file((out / "waveform.json").string(), qfp::waveform_to_json(rr.waveform));
  json summary = {{"converged", rr.converged},
                  {"samples", rr.waveform.samples()},
                  {"audit_residual", rr.audit.relative_residual()}};
  if (!rr.converged) {
    summary["error"] = rr.error;
    summary["fail_time"] = rr.fail_time;
  }
  qfp::write_text_file((out / "run.json").string(), summary.dump(2) + "\n");
  if (!rr.converged) {
    std::fprintf(stderr, "convergence failure at t=%gs: %s (partial waveform written)\n",
                 rr.fail_time, rr.error.c_str());
    return kExitConverge;
  }
  std::printf("wrote %s (%zu samples, %zu columns)\n", (out / "waveform.csv").c_str(),
              rr.waveform.samples(), rr.waveform.column_count());
  return 0;
}

// ---------------------------------------------------------------------------
// margins
// ---------------------------------------------------------------------------

int cmd_margins(Context& ctx, const std::string& cut_name, const std::string& f_text,
                const std::string& t_text, const std::string& span_text,
                const std::string& res_text) {
  qfp::CellKind cut = need_cut(cut_name);
  double f = need_unit(f_text, "Hz", "--f");
  std::vector<double> t_values = parse_unit_list(t_text, "s", "--T");
  double span = span_text.empty() ? 10.0 : need_unit(span_text, "dB", "--span");
  double res = res_text.empty() ? 0.1 : need_unit(res_text, "dB", "--resolution");

  json resolved = {{"sim", sim_to_json(ctx.sim)}, {"cut", std::string(qfp::to_string(cut))},
                   {"f", f},                      {"T", t_values},
                   {"span_db", span},             {"resolution_db", res}};
  std::vector<std::pair<std::string, std::string>> inputs;
  if (!ctx.params_path.empty())
    inputs.push_back({ctx.params_path, qfp::sha256_hex(qfp::read_text_file(ctx.params_path))});
  ctx.write_manifest(inputs, resolved);

  qfp::AqfpCellParams p = ctx.cell_params(true, f, t_values.front());
  auto factory = qfp::benchmark_factory(cut, p, ctx.mode());
  std::vector<qfp::MarginResult> rows(t_values.size());
  for_each_parallel(t_values.size(), ctx.jobs, [&](size_t i) {
    qfp::ClockSpec clock = qfp::nominal_clock(p, f, t_values[i]);
    ctx.apply_clock_config(clock);
    rows[i] = qfp::margin_search(factory, clock, ctx.sim, span, res);
  });

  fs::path out = ctx.outdir();
  qfp::write_text_file((out / "margins.csv").string(), qfp::margin_results_to_csv(rows));
  qfp::write_text_file((out / "margins.json").string(), qfp::margin_results_to_json(rows));
  if (ctx.figures) {
    qfp::ChartSeries s{"margin width", {}};
    for (const auto& r : rows)
      if (r.pass) s.points.push_back({r.t_stage * 1e12, r.width_db});
    qfp::write_text_file((out / "margins.svg").string(),
                         qfp::line_chart_svg("operating margin vs T", "T (ps)", "width (dB)",
                                             {s}));
  }
  bool all_pass = true;
  for (const auto& r : rows) {
    std::printf("T=%5.1fps  %s  [%.2f, %.2f] dBm  width %.2f dB\n", r.t_stage * 1e12,
                r.pass ? "pass" : "FAIL", r.p_low, r.p_high, r.width_db);
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : kExitConverge;
}

// ---------------------------------------------------------------------------
// energy
// ---------------------------------------------------------------------------

int cmd_energy(Context& ctx, const std::string& cut_name, const std::string& f_text,
               const std::string& t_text) {
  qfp::CellKind cut = need_cut(cut_name);
  double f = need_unit(f_text, "Hz", "--f");
  std::vector<double> t_values = parse_unit_list(t_text, "s", "--T");

  json resolved = {{"sim", sim_to_json(ctx.sim)},
                   {"cut", std::string(qfp::to_string(cut))},
                   {"f", f},
                   {"T", t_values}};
  std::vector<std::pair<std::string, std::string>> inputs;
  if (!ctx.params_path.empty())
    inputs.push_back({ctx.params_path, qfp::sha256_hex(qfp::read_text_file(ctx.params_path))});
  ctx.write_manifest(inputs, resolved);

  qfp::AqfpCellParams p = ctx.cell_params(true, f, 10e-12);
  auto factory = qfp::benchmark_factory(cut, p, ctx.mode());
  qfp::EnergySweepResult sweep;
  sweep.entries.resize(t_values.size());
  for_each_parallel(t_values.size(), ctx.jobs, [&](size_t i) {
    qfp::ClockSpec clock = qfp::nominal_clock(p, f, t_values[i]);
    ctx.apply_clock_config(clock);
    sweep.entries[i] = qfp::energy_per_op(factory, clock, ctx.sim);
  });

  fs::path out = ctx.outdir();
  qfp::write_text_file((out / "energy.csv").string(), qfp::energy_sweep_to_csv(sweep));
  qfp::write_text_file((out / "energy.json").string(), qfp::energy_sweep_to_json(sweep));
  if (ctx.figures) {
    qfp::ChartSeries s{"E per op", {}};
    for (const auto& e : sweep.entries) s.points.push_back({e.t_stage * 1e12, e.energy * 1e21});
    qfp::write_text_file((out / "energy.svg").string(),
                         qfp::line_chart_svg("energy per operation vs T", "T (ps)", "E (zJ)",
                                             {s}));
  }
  for (const auto& e : sweep.entries)
    std::printf("T=%5.1fps  E=%.4g zJ (all gates %.4g zJ, residual %.1e)\n",
                e.t_stage * 1e12, e.energy * 1e21, e.energy_all * 1e21, e.audit_residual);
  return 0;
}

// ---------------------------------------------------------------------------
// skipscan
// ---------------------------------------------------------------------------

int cmd_skipscan(Context& ctx, const std::string& f_text, const std::string& t_text,
                 const std::string& k_text, bool with_margins) {
  double f = need_unit(f_text, "Hz", "--f");
  std::vector<double> t_values = parse_unit_list(t_text, "s", "--T");
  std::vector<int> k_values = parse_int_range(k_text, "--k");

  json resolved = {{"sim", sim_to_json(ctx.sim)}, {"f", f},
                   {"T", t_values},               {"k", k_values},
                   {"with_margins", with_margins}};
  std::vector<std::pair<std::string, std::string>> inputs;
  if (!ctx.params_path.empty())
    inputs.push_back({ctx.params_path, qfp::sha256_hex(qfp::read_text_file(ctx.params_path))});
  ctx.write_manifest(inputs, resolved);

  qfp::AqfpCellParams p = ctx.cell_params(true, f, t_values.front());
  qfp::SkipScanOptions opts;
  opts.jobs = ctx.jobs;
  opts.with_margins = with_margins;
  qfp::SkipFeasibilityMatrix m = qfp::skip_scan(t_values, k_values, f, p, ctx.sim, opts);

  fs::path out = ctx.outdir();
  qfp::write_text_file((out / "skipscan.csv").string(), qfp::skip_matrix_to_csv(m));
  qfp::write_text_file((out / "skipscan.json").string(), qfp::skip_matrix_to_json(m));
  qfp::write_text_file((out / "skipscan.txt").string(), qfp::skip_matrix_to_text(m));
  if (ctx.figures)
    qfp::write_text_file((out / "skipscan.svg").string(), qfp::skip_heatmap_svg(m));
  std::printf("%s", qfp::skip_matrix_to_text(m).c_str());
  std::printf("tmax %.1f ps, predictor agreement %.0f%%, monotone %s\n", m.tmax * 1e12,
              100.0 * m.predictor_agreement(), m.monotone_in_k() ? "yes" : "NO");
  return 0;
}

// ---------------------------------------------------------------------------
// tmax
// ---------------------------------------------------------------------------

int cmd_tmax(Context& ctx, const std::string& cut_name, const std::string& f_text,
             const std::string& res_text) {
  qfp::CellKind cut = need_cut(cut_name);
  double f = need_unit(f_text, "Hz", "--f");
  double res = res_text.empty() ? 1e-12 : need_unit(res_text, "s", "--resolution");

  json resolved = {{"sim", sim_to_json(ctx.sim)},
                   {"cut", std::string(qfp::to_string(cut))},
                   {"f", f},
                   {"resolution", res}};
  ctx.write_manifest({}, resolved);

  qfp::AqfpCellParams p = ctx.cell_params(true, f, 10e-12);
  double tmax = qfp::tmax_estimate(cut, f, p, ctx.sim, res);
  json j = {{"cut", std::string(qfp::to_string(cut))}, {"f_hz", f}, {"tmax_s", tmax}};
  qfp::write_text_file((ctx.outdir() / "tmax.json").string(), j.dump(2) + "\n");
  std::printf("tmax(%s, %s) = %.1f ps\n", std::string(qfp::to_string(cut)).c_str(),
              f_text.c_str(), tmax * 1e12);
  return 0;
}

// ---------------------------------------------------------------------------
// edp
// ---------------------------------------------------------------------------

int cmd_edp(Context& ctx, bool builtin, const std::vector<std::string>& row_texts) {
  std::vector<qfp::EdpEntry> rows;
  if (builtin) rows = qfp::edp_builtin_rows();
  for (const auto& text : row_texts) {
    auto parts = split(text, ':');
    if (parts.size() != 3)
      throw UsageError("--row: expected label:energy:delay, got '" + text + "'");
    qfp::EdpEntry e;
    e.label = parts[0];
    e.energy = need_unit(parts[1], "J", "--row energy");
    e.delay = need_unit(parts[2], "s", "--row delay");
    rows.push_back(e);
  }
  if (rows.empty()) throw UsageError("edp: nothing to tabulate (use --builtin or --row)");
  rows = qfp::edp(rows);

  json resolved = {{"builtin", builtin}, {"rows", row_texts.size()}};
  ctx.write_manifest({}, resolved);
  fs::path out = ctx.outdir();
  qfp::write_text_file((out / "edp.csv").string(), qfp::edp_table_to_csv(rows));
  qfp::write_text_file((out / "edp.json").string(), qfp::edp_table_to_json(rows));
  for (const auto& r : rows)
    std::printf("%-28s %10.4g J x %8.4g s = %.4g J*s\n", r.label.c_str(), r.energy, r.delay,
                r.edp);
  return 0;
}

// ---------------------------------------------------------------------------
// cells dump-defaults / bench emit
// ---------------------------------------------------------------------------

int cmd_dump_defaults(Context& ctx, bool calibrated, const std::string& f_text,
                      const std::string& t_text) {
  double f = f_text.empty() ? 5e9 : need_unit(f_text, "Hz", "--f");
  double t = t_text.empty() ? 10e-12 : need_unit(t_text, "s", "--T");
  qfp::AqfpCellParams p = ctx.cell_params(calibrated, f, t);
  std::string text = qfp::cell_params_to_json(p);
  if (ctx.out_dir.empty()) {
    std::printf("%s", text.c_str());
  } else {
    json resolved = {{"calibrated", calibrated}, {"f", f}, {"T", t}};
    ctx.write_manifest({}, resolved);
    qfp::write_text_file((ctx.outdir() / "cells.json").string(), text);
  }
  return 0;
}

int cmd_bench_emit(Context& ctx, const std::string& cut_name, const std::string& f_text,
                   const std::string& t_text, bool skip, int k) {
  double f = need_unit(f_text, "Hz", "--f");
  double t = need_unit(t_text, "s", "--T");
  qfp::AqfpCellParams p = ctx.cell_params(true, f, t);
  qfp::ClockSpec clock = qfp::nominal_clock(p, f, t);
  ctx.apply_clock_config(clock);
  qfp::BenchmarkHarness h =
      skip ? qfp::build_skip_chain(k, clock, p, ctx.mode())
           : qfp::build_benchmark(need_cut(cut_name), clock, p, ctx.mode());
  std::string text = qfp::serialize(h.netlist);
  if (ctx.out_dir.empty()) {
    std::printf("%s", text.c_str());
  } else {
    json resolved = {{"cut", cut_name}, {"f", f}, {"T", t}, {"skip", skip}, {"k", k}};
    ctx.write_manifest({}, resolved);
    qfp::write_text_file((ctx.outdir() / "benchmark.cir").string(), text);
  }
  return 0;
}


CLI::App* add_sub(CLI::App& parent, const std::string& name, const std::string& desc) {
  CLI::App* sub = parent.add_subcommand(name, desc);
  sub->fallthrough();
  return sub;
}

}  // namespace

// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
  Context ctx;
  for (int i = 0; i < argc; ++i) {
    if (i) ctx.command_line += ' ';
    ctx.command_line += argv[i];
  }

  CLI::App app{"quantum-flux-parametron circuit workbench"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.add_option("--config", ctx.config_path, "JSON config mirroring sim/clock settings");
  app.add_option("--out", ctx.out_dir, "output directory");
  app.add_option("--jobs", ctx.jobs, "parallel grid cells (0 = hardware)");
  app.add_option("--seed", ctx.seed, "PRBS seed recorded in the manifest");
  app.add_option("--mode", ctx.mode_name, "excitation mode: fullline | idealdelay");
  app.add_flag("--figures", ctx.figures, "emit SVG figures next to result files");
  app.add_option("--params", ctx.params_path, "cell parameter JSON file");

  std::string netlist_path, tstop_text, dt_text;
  std::vector<std::string> probe_texts;
  CLI::App* run = add_sub(app, "run", "simulate a netlist file");
  run->add_option("netlist", netlist_path, "netlist file")->required();
  run->add_option("--tstop", tstop_text, "stop time, e.g. 2ns");
  run->add_option("--dt", dt_text, "time step, e.g. 0.1ps");
  run->add_option("--probe", probe_texts, "v(node) | i(dev) | phi(dev) | p(dev)");

  std::string cut_name = "buffer", f_text = "5GHz", t_text, k_text = "0..4";
  std::string span_text, res_text;
  CLI::App* margins = add_sub(app, "margins", "drive-power margin sweep");
  margins->add_option("--cut", cut_name, "cell under test")->required();
  margins->add_option("--f", f_text, "clock frequency, e.g. 5GHz");
  margins->add_option("--T", t_text, "stage delays, e.g. 10ps,20ps")->required();
  margins->add_option("--span", span_text, "search span around nominal, e.g. 10dB");
  margins->add_option("--resolution", res_text, "bisection resolution, e.g. 0.1dB");

  CLI::App* energy = add_sub(app, "energy", "energy-per-operation sweep");
  energy->add_option("--cut", cut_name, "cell under test")->required();
  energy->add_option("--f", f_text, "clock frequency");
  energy->add_option("--T", t_text, "stage delays")->required();

  bool skip_margins = false;
  CLI::App* skipscan = add_sub(app, "skipscan", "phase-skip feasibility matrix");
  skipscan->add_option("--f", f_text, "clock frequency");
  skipscan->add_option("--T", t_text, "stage delays")->required();
  skipscan->add_option("--k", k_text, "skip levels, e.g. 0..4");
  skipscan->add_flag("--margins", skip_margins, "measure margin width on passing cells");

  CLI::App* tmax = add_sub(app, "tmax", "maximum allowable latency estimate");
  tmax->add_option("--cut", cut_name, "buffer or inverter");
  tmax->add_option("--f", f_text, "clock frequency");
  tmax->add_option("--resolution", res_text, "bisection resolution, e.g. 1ps");

  bool edp_builtin = false;
  std::vector<std::string> edp_rows;
  CLI::App* edp_cmd = add_sub(app, "edp", "energy-delay product table");
  edp_cmd->add_flag("--builtin", edp_builtin, "include the literature comparison rows");
  edp_cmd->add_option("--row", edp_rows, "extra row as label:energy:delay, e.g. x:2.8zJ:10ps");

  CLI::App* cells = add_sub(app, "cells", "cell parameter utilities");
  cells->require_subcommand(1);
  bool dump_calibrated = false;
  std::string dump_f, dump_t;
  CLI::App* dump = add_sub(*cells, "dump-defaults", "print the default parameter set");
  dump->add_flag("--calibrated", dump_calibrated, "calibrate the drive first");
  dump->add_option("--f", dump_f, "calibration frequency");
  dump->add_option("--T", dump_t, "calibration stage delay");

  CLI::App* bench = add_sub(app, "bench", "benchmark circuit utilities");
  bench->require_subcommand(1);
  bool emit_skip = false;
  int emit_k = 0;
  CLI::App* emit = add_sub(*bench, "emit", "emit a benchmark netlist");
  emit->add_option("--cut", cut_name, "cell under test");
  emit->add_option("--f", f_text, "clock frequency")->required();
  emit->add_option("--T", t_text, "stage delay")->required();
  emit->add_flag("--skip", emit_skip, "emit a skip chain instead of a gate benchmark");
  emit->add_option("--k", emit_k, "skip level for --skip");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForVersion")
      return app.exit(e);
    std::fprintf(stderr, "%s\n", e.what());
    return kExitParse;
  }

  try {
    ctx.load_config();
    if (run->parsed()) return cmd_run(ctx, netlist_path, tstop_text, dt_text, probe_texts);
    if (margins->parsed())
      return cmd_margins(ctx, cut_name, f_text, t_text, span_text, res_text);
    if (energy->parsed()) return cmd_energy(ctx, cut_name, f_text, t_text);
    if (skipscan->parsed()) return cmd_skipscan(ctx, f_text, t_text, k_text, skip_margins);
    if (tmax->parsed()) return cmd_tmax(ctx, cut_name, f_text, res_text);
    if (edp_cmd->parsed()) return cmd_edp(ctx, edp_builtin, edp_rows);
    if (cells->parsed() && dump->parsed())
      return cmd_dump_defaults(ctx, dump_calibrated, dump_f, dump_t);
    if (bench->parsed() && emit->parsed())
      return cmd_bench_emit(ctx, cut_name, f_text, t_text, emit_skip, emit_k);
    std::fprintf(stderr, "no command\n");
    return kExitParse;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kExitParse;
  } catch (const qfp::NetlistError& e) {
    std::fprintf(stderr, "netlist error: %s\n", e.what());
    return kExitParse;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "json error: %s\n", e.what());
    return kExitParse;
  } catch (const qfp::AnalysisError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return e.code() == qfp::AnalysisErrorCode::BadGrid ? kExitParse : kExitConverge;
  } catch (const qfp::CellError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return e.code() == qfp::CellErrorCode::CalibrationFailed ? kExitConverge : kExitParse;
  } catch (const qfp::ClockError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kExitParse;
  } catch (const qfp::SimError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return e.code() == qfp::SimErrorCode::NewtonDivergence ? kExitConverge : kExitParse;
  } catch (const std::runtime_error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kExitIo;
  }
}
