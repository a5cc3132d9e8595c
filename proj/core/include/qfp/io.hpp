#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qfp/analysis.hpp"
#include "qfp/engine.hpp"

namespace qfp {

// ---------------------------------------------------------------------------
// Hashing and files
// ---------------------------------------------------------------------------

// SHA-256 digest as lowercase hex.
std::string sha256_hex(std::string_view data);

// Whole-file read/write; throw std::runtime_error with the path on failure.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

// ---------------------------------------------------------------------------
// Result serialization. Every emitter is deterministic: identical inputs
// produce byte-identical text (doubles print in shortest round-trip form).
// ---------------------------------------------------------------------------

std::string waveform_to_csv(const Waveform& w);
std::string waveform_to_json(const Waveform& w);

std::string margin_results_to_csv(const std::vector<MarginResult>& rows);
std::string margin_results_to_json(const std::vector<MarginResult>& rows);

std::string energy_sweep_to_csv(const EnergySweepResult& sweep);
std::string energy_sweep_to_json(const EnergySweepResult& sweep);

std::string skip_matrix_to_csv(const SkipFeasibilityMatrix& m);
std::string skip_matrix_to_json(const SkipFeasibilityMatrix& m);
// Rows = T, columns = k, pass/fail symbols.
std::string skip_matrix_to_text(const SkipFeasibilityMatrix& m);

std::string edp_table_to_csv(const std::vector<EdpEntry>& rows);
std::string edp_table_to_json(const std::vector<EdpEntry>& rows);

// ---------------------------------------------------------------------------
// Figures (self-contained SVG)
// ---------------------------------------------------------------------------

struct ChartSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label,
                           const std::vector<ChartSeries>& series, bool log_y = false);

std::string skip_heatmap_svg(const SkipFeasibilityMatrix& m);

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

// Written to the output directory before any result file, so a crashed run
// still records what was attempted. The timestamp lives only here; result
// files are timestamp-free to keep reruns byte-identical.
struct RunManifest {
  std::string command;  // argv joined with spaces
  std::vector<std::pair<std::string, std::string>> inputs;  // path, sha256
  std::string config_json;  // resolved configuration
  std::string out_dir;
  uint64_t seed = 0;
  std::string tool_version;
  std::string timestamp;  // ISO 8601 UTC
};

std::string manifest_to_json(const RunManifest& m);

}  // namespace qfp
