#include "slim/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace slim {

void CsvWriter::row(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) os_ << ',';
    const auto& f = fields[i];
    if (f.find_first_of(",\"\r\n") == std::string::npos) {
      os_ << f;
      continue;
    }
    os_ << '"';
    for (char c : f) {
      if (c == '"') os_ << '"';
      os_ << c;
    }
    os_ << '"';
  }
  os_ << "\r\n";
}

std::string format_number(double v) {
  if (v == 0.0) return "0";
  char buf[40];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open output file: " + path.string());
  return os;
}

std::vector<std::string> result_fields(const PowerResult& r, bool record_timing) {
  return {to_string(r.pattern),        format_number(r.alpha),     to_string(r.method),
          std::to_string(r.slices),    format_number(r.power),     format_number(r.stderr_),
          format_number(r.mean_statistic), format_number(r.threshold),
          format_number(record_timing ? r.fit_seconds : 0.0)};
}

}  // namespace

void write_results_csv(const std::filesystem::path& path, const std::vector<PowerResult>& rows,
                       bool record_timing) {
  auto os = open_out(path);
  CsvWriter w(os);
  w.row({"pattern", "alpha", "method", "S", "power", "stderr", "mean_statistic", "threshold", "fit_seconds"});
  for (const auto& r : rows) w.row(result_fields(r, record_timing));
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows,
                        bool record_timing) {
  auto os = open_out(path);
  CsvWriter w(os);
  w.row({"seed", "S", "power", "stderr", "fit_seconds", "pattern", "alpha", "threshold", "mean_statistic"});
  for (const auto& [seed, r] : rows)
    w.row({std::to_string(seed), std::to_string(r.slices), format_number(r.power), format_number(r.stderr_),
           format_number(record_timing ? r.fit_seconds : 0.0), to_string(r.pattern), format_number(r.alpha),
           format_number(r.threshold), format_number(r.mean_statistic)});
}

std::vector<AblationSummary> summarize_ablation(const std::vector<AblationRow>& rows) {
  std::map<Index, std::vector<const PowerResult*>> by_s;
  for (const auto& row : rows) by_s[row.result.slices].push_back(&row.result);
  std::vector<AblationSummary> out;
  for (const auto& [s, cell] : by_s) {
    AblationSummary a;
    a.slices = s;
    a.seeds = static_cast<int>(cell.size());
    for (const auto* r : cell) {
      a.mean_power += r->power;
      a.mean_fit_seconds += r->fit_seconds;
    }
    a.mean_power /= a.seeds;
    a.mean_fit_seconds /= a.seeds;
    if (a.seeds > 1) {
      double ss = 0;
      for (const auto* r : cell) ss += (r->power - a.mean_power) * (r->power - a.mean_power);
      a.stderr_ = std::sqrt(ss / (a.seeds - 1) / a.seeds);
    }
    out.push_back(a);
  }
  return out;
}

void write_ablation_summary_csv(const std::filesystem::path& path, const std::vector<AblationSummary>& rows,
                                bool record_timing) {
  auto os = open_out(path);
  CsvWriter w(os);
  w.row({"S", "seeds", "mean_power", "stderr", "mean_fit_seconds"});
  for (const auto& a : rows)
    w.row({std::to_string(a.slices), std::to_string(a.seeds), format_number(a.mean_power),
           format_number(a.stderr_), format_number(record_timing ? a.mean_fit_seconds : 0.0)});
}

void write_ablation_svg(const std::filesystem::path& path, const std::vector<AblationSummary>& rows,
                        const std::string& title) {
  Series s;
  s.label = "slice";
  for (const auto& a : rows) {
    s.x.push_back(static_cast<double>(a.slices));
    s.y.push_back(a.mean_power);
  }
  auto os = open_out(path);
  os << render_line_chart(title, "slices S", "test power", {s});
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history, bool record_timing) {
  auto os = open_out(path);
  CsvWriter w(os);
  w.row({"iteration", "utility_loss", "si_fit", "si_batch", "refined", "degenerate", "max_step_seconds"});
  for (const auto& r : history.records)
    w.row({std::to_string(r.iteration), format_number(r.utility_loss), format_number(r.si_fit),
           format_number(r.si_batch), r.refined ? "1" : "0", r.degenerate ? "1" : "0",
           format_number(record_timing ? r.max_step_seconds : 0.0)});
}

namespace {

// alpha -> method -> power for one pattern, methods in first-seen order.
struct PlotTable {
  std::vector<std::string> methods;
  std::map<double, std::map<std::string, double>> cells;
};

PlotTable plot_table(const std::vector<PowerResult>& rows, Pattern pattern) {
  PlotTable t;
  for (const auto& r : rows) {
    if (r.pattern != pattern) continue;
    const auto m = to_string(r.method);
    if (std::find(t.methods.begin(), t.methods.end(), m) == t.methods.end()) t.methods.push_back(m);
    t.cells[r.alpha][m] = r.power;
  }
  return t;
}

}  // namespace

void write_plot_csv(const std::filesystem::path& path, const std::vector<PowerResult>& rows, Pattern pattern) {
  const auto t = plot_table(rows, pattern);
  auto os = open_out(path);
  CsvWriter w(os);
  std::vector<std::string> header{"alpha"};
  header.insert(header.end(), t.methods.begin(), t.methods.end());
  w.row(header);
  for (const auto& [alpha, by_method] : t.cells) {
    std::vector<std::string> fields{format_number(alpha)};
    for (const auto& m : t.methods) {
      auto it = by_method.find(m);
      fields.push_back(it == by_method.end() ? "" : format_number(it->second));
    }
    w.row(fields);
  }
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string render_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                              const std::vector<Series>& series, double y_min, double y_max) {
  constexpr double width = 480, height = 360;
  constexpr double left = 60, right = 130, top = 40, bottom = 50;
  constexpr std::array<const char*, 8> colors = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                                 "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  double x_min = 0, x_max = 1;
  bool any = false;
  for (const auto& s : series)
    for (double x : s.x) {
      x_min = any ? std::min(x_min, x) : x;
      x_max = any ? std::max(x_max, x) : x;
      any = true;
    }
  if (x_max <= x_min) x_max = x_min + 1.0;
  if (y_max <= y_min) y_max = y_min + 1.0;
  const double pw = width - left - right;
  const double ph = height - top - bottom;
  auto sx = [&](double x) { return left + (x - x_min) / (x_max - x_min) * pw; };
  auto sy = [&](double y) { return top + (1.0 - (y - y_min) / (y_max - y_min)) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << left + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << xml_escape(title) << "</text>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = x_min + (x_max - x_min) * i / 5.0;
    const double yv = y_min + (y_max - y_min) * i / 5.0;
    svg << "<line x1=\"" << sx(xv) << "\" y1=\"" << top + ph << "\" x2=\"" << sx(xv) << "\" y2=\"" << top + ph + 4
        << "\" stroke=\"black\"/>";
    svg << "<text x=\"" << sx(xv) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">" << fixed(xv)
        << "</text>\n";
    svg << "<line x1=\"" << left - 4 << "\" y1=\"" << sy(yv) << "\" x2=\"" << left << "\" y2=\"" << sy(yv)
        << "\" stroke=\"black\"/>";
    svg << "<text x=\"" << left - 7 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">" << fixed(yv)
        << "</text>\n";
  }
  svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\">"
      << xml_escape(x_label) << "</text>\n";
  svg << "<text transform=\"translate(16," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << xml_escape(y_label) << "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = colors[i % colors.size()];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k)
      svg << (k ? " " : "") << fixed(sx(s.x[k])) << ',' << fixed(sy(s.y[k]));
    svg << "\"/>\n";
    for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k)
      svg << "<circle cx=\"" << fixed(sx(s.x[k])) << "\" cy=\"" << fixed(sy(s.y[k])) << "\" r=\"3\" fill=\""
          << color << "\"/>";
    const double ly = top + 12 + 18.0 * static_cast<double>(i);
    svg << "\n<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 32 << "\" y2=\"" << ly
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>";
    svg << "<text x=\"" << left + pw + 36 << "\" y=\"" << ly + 4 << "\">" << xml_escape(s.label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_power_svg(const std::filesystem::path& path, const std::vector<PowerResult>& rows, Pattern pattern) {
  const auto t = plot_table(rows, pattern);
  std::vector<Series> series;
  for (const auto& m : t.methods) {
    Series s;
    s.label = m;
    for (const auto& [alpha, by_method] : t.cells) {
      auto it = by_method.find(m);
      if (it == by_method.end()) continue;
      s.x.push_back(alpha);
      s.y.push_back(it->second);
    }
    series.push_back(std::move(s));
  }
  auto os = open_out(path);
  os << render_line_chart("t(a) = " + to_string(pattern), "alpha", "test power", series);
}

}  // namespace slim
