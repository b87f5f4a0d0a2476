#pragma once

// Rate-distortion records: points, curves, metric orientation, ingestion of
// externally computed scores, and CSV/SVG emission.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "imt/error.hpp"

namespace imt {

struct RDPoint {
  double bitrate_kbps = 0;
  std::string metric_name;
  double metric_value = 0;
  std::size_t source_line = 0;  // 0 when not read from a file
};

struct RDCurve {
  std::string label;
  std::string metric_name;
  bool lower_is_better = false;
  std::vector<RDPoint> points;  // ascending bitrate

  /// Fewer points than a piecewise-cubic BD-rate fit needs.
  bool insufficient() const { return points.size() < 4; }
};

inline std::string lowercase(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

/// Distortion-style metrics where smaller values are better.
inline bool metric_lower_is_better(const std::string& name) {
  static const char* kLower[] = {"dists", "lpips", "fvd", "mse", "mae"};
  const std::string n = lowercase(name);
  for (const char* k : kLower)
    if (n == k) return true;
  return false;
}

inline std::string format_number(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

/// Sort by bitrate and check the curve invariants.
inline RDCurve make_curve(std::string label, std::vector<RDPoint> points) {
  if (points.empty()) throw DataError("curve '" + label + "' has no points");
  RDCurve c;
  c.label = std::move(label);
  c.metric_name = points.front().metric_name;
  c.lower_is_better = metric_lower_is_better(c.metric_name);
  for (const auto& p : points) {
    if (p.metric_name != c.metric_name)
      throw DataError("curve '" + c.label + "' mixes metrics " + c.metric_name + " and " + p.metric_name);
    if (!(p.bitrate_kbps > 0) || !std::isfinite(p.bitrate_kbps))
      throw DataError("curve '" + c.label + "': bitrate must be positive and finite, got " +
                      format_number(p.bitrate_kbps));
    if (!std::isfinite(p.metric_value))
      throw DataError("curve '" + c.label + "': non-finite " + p.metric_name + " value");
  }
  std::stable_sort(points.begin(), points.end(),
                   [](const RDPoint& a, const RDPoint& b) { return a.bitrate_kbps < b.bitrate_kbps; });
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].bitrate_kbps == points[i - 1].bitrate_kbps) {
      std::string where;
      if (points[i - 1].source_line && points[i].source_line)
        where = " (lines " + std::to_string(std::min(points[i - 1].source_line, points[i].source_line)) + " and " +
                std::to_string(std::max(points[i - 1].source_line, points[i].source_line)) + ")";
      throw DataError("curve '" + c.label + "' metric " + c.metric_name + ": duplicate bitrate " +
                      format_number(points[i].bitrate_kbps) + " kbps" + where);
    }
  }
  c.points = std::move(points);
  return c;
}

struct IngestResult {
  std::vector<RDCurve> curves;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

inline bool parse_real(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(t, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == t.size();
}

/// Tab, comma and semicolon are tried in that order; otherwise whitespace.
inline std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  if (delim == ' ') {
    std::istringstream in(line);
    std::string f;
    while (in >> f) out.push_back(f);
    return out;
  }
  std::string cur;
  for (char ch : line) {
    if (ch == delim) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline char detect_delimiter(const std::string& line) {
  for (char d : {'\t', ',', ';'})
    if (line.find(d) != std::string::npos) return d;
  return ' ';
}

}  // namespace detail

/// Rows of `sequence_id, bitrate_kbps, metric_name, value`. An optional header
/// line and `#` comments are skipped. One curve per (sequence, metric).
inline IngestResult ingest_external_metrics(std::istream& in, const std::string& source = "scores") {
  IngestResult r;
  std::map<std::pair<std::string, std::string>, std::vector<RDPoint>> groups;
  std::string line;
  std::size_t lineno = 0, rows = 0;
  char delim = 0;
  bool header_allowed = true;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (!delim) delim = detail::detect_delimiter(t);
    const auto f = detail::split_fields(t, delim);
    double rate = 0, value = 0;
    const bool numeric = f.size() == 4 && detail::parse_real(f[1], rate) && detail::parse_real(f[3], value);
    if (header_allowed && !numeric && f.size() == 4 && !detail::parse_real(f[1], rate)) {
      header_allowed = false;
      continue;
    }
    header_allowed = false;
    if (f.size() != 4)
      throw DataError(source + ":" + std::to_string(lineno) + ": expected 4 fields, found " + std::to_string(f.size()));
    if (!detail::parse_real(f[1], rate))
      throw DataError(source + ":" + std::to_string(lineno) + ": bitrate '" + f[1] + "' is not a number");
    if (!detail::parse_real(f[3], value))
      throw DataError(source + ":" + std::to_string(lineno) + ": value '" + f[3] + "' is not a number");
    if (f[0].empty() || f[2].empty())
      throw DataError(source + ":" + std::to_string(lineno) + ": empty sequence id or metric name");
    if (!(rate > 0) || !std::isfinite(rate))
      throw DataError(source + ":" + std::to_string(lineno) + ": bitrate must be positive, got " + f[1]);
    if (!std::isfinite(value))
      throw DataError(source + ":" + std::to_string(lineno) + ": value must be finite, got " + f[3]);
    groups[{f[0], lowercase(f[2])}].push_back({rate, lowercase(f[2]), value, lineno});
    ++rows;
  }
  if (rows == 0) {
    r.warnings.push_back(source + ": no data rows; nothing ingested");
    return r;
  }
  for (auto& [key, pts] : groups) {
    RDCurve c = make_curve(key.first, std::move(pts));
    if (c.points.size() < 2) r.warnings.push_back("curve '" + c.label + "' (" + c.metric_name + ") has a single point");
    r.curves.push_back(std::move(c));
  }
  return r;
}

inline IngestResult ingest_external_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return ingest_external_metrics(in, path.string());
}

// ---------------------------------------------------------------------------
// Emission

struct PlotOptions {
  bool one_minus_lower_is_better = false;  // show 1 - v for lower-is-better metrics
  int width = 640, height = 420;
  std::string title = "Rate-distortion";
};

struct PlotFiles {
  std::filesystem::path data, svg;
};

namespace detail {

inline double plotted_value(const RDCurve& c, double v, const PlotOptions& o) {
  return (o.one_minus_lower_is_better && c.lower_is_better) ? 1.0 - v : v;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

/// "Nice" tick spacing covering [lo, hi] with about five steps.
inline std::vector<double> ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 5;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (raw <= m * mag) {
      step = m * mag;
      break;
    }
  std::vector<double> out;
  for (double t = std::ceil(lo / step) * step; t <= hi + step * 1e-9; t += step) out.push_back(t);
  return out;
}

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  out << bytes;
  if (!out.flush()) throw DataError("write failed: " + p.string());
}

}  // namespace detail

/// Same column order as the ingestion format, raw (untransformed) values.
inline std::string curves_csv(const std::vector<RDCurve>& curves) {
  std::string s = "label,bitrate_kbps,metric,value\n";
  for (const auto& c : curves)
    for (const auto& p : c.points)
      s += detail::csv_field(c.label) + "," + format_number(p.bitrate_kbps, 10) + "," +
           detail::csv_field(c.metric_name) + "," + format_number(p.metric_value, 10) + "\n";
  return s;
}

inline std::string curves_svg(const std::vector<RDCurve>& curves, const PlotOptions& o = {}) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  std::vector<std::string> metrics;
  for (const auto& c : curves) {
    if (std::find(metrics.begin(), metrics.end(), c.metric_name) == metrics.end()) metrics.push_back(c.metric_name);
    for (const auto& p : c.points) {
      const double v = detail::plotted_value(c, p.metric_value, o);
      x0 = std::min(x0, p.bitrate_kbps);
      x1 = std::max(x1, p.bitrate_kbps);
      y0 = std::min(y0, v);
      y1 = std::max(y1, v);
    }
  }
  auto widen = [](double& lo, double& hi) {
    if (hi - lo < 1e-12) {
      const double pad = std::max(std::abs(lo) * 0.05, 1e-3);
      lo -= pad;
      hi += pad;
    }
  };
  widen(x0, x1);
  widen(y0, y1);
  const double L = 70, R = 170, T = 40, B = 55;
  const double pw = o.width - L - R, ph = o.height - T - B;
  auto X = [&](double v) { return L + (v - x0) / (x1 - x0) * pw; };
  auto Y = [&](double v) { return T + (1 - (v - y0) / (y1 - y0)) * ph; };
  auto num = [](double v) { return format_number(v, 6); };

  std::string y_label;
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    const bool flip = o.one_minus_lower_is_better && metric_lower_is_better(metrics[i]);
    y_label += (i ? ", " : "") + (flip ? "1-" + metrics[i] : metrics[i]);
  }

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << o.width << "\" height=\"" << o.height
    << "\" viewBox=\"0 0 " << o.width << " " << o.height << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << num(L + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << detail::xml_escape(o.title) << "</text>\n";
  s << "<g class=\"axes\" stroke=\"black\" fill=\"none\">\n";
  s << "<rect x=\"" << num(L) << "\" y=\"" << num(T) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
    << "\"/>\n</g>\n";
  s << "<g class=\"ticks\" font-size=\"11\">\n";
  for (double t : detail::ticks(x0, x1))
    s << "<line x1=\"" << num(X(t)) << "\" y1=\"" << num(T + ph) << "\" x2=\"" << num(X(t)) << "\" y2=\""
      << num(T + ph + 5) << "\" stroke=\"black\"/><text x=\"" << num(X(t)) << "\" y=\"" << num(T + ph + 18)
      << "\" text-anchor=\"middle\">" << num(t) << "</text>\n";
  for (double t : detail::ticks(y0, y1))
    s << "<line x1=\"" << num(L - 5) << "\" y1=\"" << num(Y(t)) << "\" x2=\"" << num(L) << "\" y2=\"" << num(Y(t))
      << "\" stroke=\"black\"/><text x=\"" << num(L - 8) << "\" y=\"" << num(Y(t) + 4)
      << "\" text-anchor=\"end\">" << num(t) << "</text>\n";
  s << "</g>\n";
  s << "<text class=\"x-label\" x=\"" << num(L + pw / 2) << "\" y=\"" << num(o.height - 12)
    << "\" text-anchor=\"middle\" font-size=\"13\">bitrate (kbps)</text>\n";
  s << "<text class=\"y-label\" x=\"16\" y=\"" << num(T + ph / 2) << "\" text-anchor=\"middle\" font-size=\"13\""
    << " transform=\"rotate(-90 16 " << num(T + ph / 2) << ")\">" << detail::xml_escape(y_label) << "</text>\n";

  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& c = curves[i];
    const char* color = kColors[i % std::size(kColors)];
    s << "<g class=\"curve\" stroke=\"" << color << "\" fill=\"" << color << "\">\n<polyline fill=\"none\" points=\"";
    for (std::size_t k = 0; k < c.points.size(); ++k)
      s << (k ? " " : "") << num(X(c.points[k].bitrate_kbps)) << ","
        << num(Y(detail::plotted_value(c, c.points[k].metric_value, o)));
    s << "\"/>\n";
    for (const auto& p : c.points)
      s << "<circle cx=\"" << num(X(p.bitrate_kbps)) << "\" cy=\"" << num(Y(detail::plotted_value(c, p.metric_value, o)))
        << "\" r=\"3\"/>\n";
    s << "</g>\n";
  }
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const double ly = T + 10 + 18.0 * i;
    const char* color = kColors[i % std::size(kColors)];
    s << "<g class=\"legend-entry\"><line x1=\"" << num(L + pw + 12) << "\" y1=\"" << num(ly) << "\" x2=\""
      << num(L + pw + 32) << "\" y2=\"" << num(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/><text x=\""
      << num(L + pw + 38) << "\" y=\"" << num(ly + 4) << "\" font-size=\"11\">"
      << detail::xml_escape(curves[i].label + " (" + curves[i].metric_name + ")") << "</text></g>\n";
  }
  s << "</svg>\n";
  return s.str();
}

/// Writes `<stem>.csv` and `<stem>.svg`. Output bytes depend only on the input.
inline PlotFiles emit_plot(const std::vector<RDCurve>& curves, const std::filesystem::path& stem,
                           const PlotOptions& o = {}) {
  if (curves.empty()) throw DataError("emit_plot needs at least one curve");
  PlotFiles f{stem, stem};
  f.data += ".csv";
  f.svg += ".svg";
  detail::write_file(f.data, curves_csv(curves));
  detail::write_file(f.svg, curves_svg(curves, o));
  return f;
}

}  // namespace imt
