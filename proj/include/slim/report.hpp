#pragma once

#include "slim/harness.hpp"
#include "slim/infomin.hpp"

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace slim {

/// Minimal RFC-4180 writer: fields containing ',', '"' or newlines are
/// quoted, rows end with CRLF.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}
  void row(const std::vector<std::string>& fields);

 private:
  std::ostream& os_;
};

/// Shortest round-trippable decimal for a double ("%.17g" trimmed).
std::string format_number(double v);

/// Results CSV: pattern,alpha,method,S,power,stderr,mean_statistic,threshold,fit_seconds.
/// With `record_timing` false the fit_seconds column is written as 0.
void write_results_csv(const std::filesystem::path& path, const std::vector<PowerResult>& rows,
                       bool record_timing);
struct AblationRow {
  std::uint64_t seed = 0;
  PowerResult result;
};

/// One row per (seed, S): seed,S,power,stderr,fit_seconds,pattern,alpha,threshold,mean_statistic.
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows,
                        bool record_timing);

struct AblationSummary {
  Index slices = 0;
  int seeds = 0;
  double mean_power = 0;
  double stderr_ = 0;  // across seeds
  double mean_fit_seconds = 0;
};

/// Per-S averages over seeds, ordered by S.
std::vector<AblationSummary> summarize_ablation(const std::vector<AblationRow>& rows);
void write_ablation_summary_csv(const std::filesystem::path& path, const std::vector<AblationSummary>& rows,
                                bool record_timing);
void write_ablation_svg(const std::filesystem::path& path, const std::vector<AblationSummary>& rows,
                        const std::string& title);
void write_history_csv(const std::filesystem::path& path, const TrainHistory& history, bool record_timing);

/// Per-pattern table, x = alpha and one power column per method.
void write_plot_csv(const std::filesystem::path& path, const std::vector<PowerResult>& rows, Pattern pattern);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Line chart with axes, ticks, a legend and one polyline per series.
std::string render_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                              const std::vector<Series>& series, double y_min = 0.0, double y_max = 1.0);
void write_power_svg(const std::filesystem::path& path, const std::vector<PowerResult>& rows, Pattern pattern);

}  // namespace slim
