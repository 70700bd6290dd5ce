#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "varshift/experiments.hpp"

namespace varshift {

namespace {

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string format_cell(const Cell& cell) {
  if (const auto* v = std::get_if<double>(&cell)) return format_number(*v);
  const auto& s = std::get<std::string>(cell);
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char c : s) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  return quoted + "\"";
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open '" + path + "' for writing: " + std::strerror(errno));
  }
  out << content;
  out.flush();
  if (!out) {
    throw std::runtime_error("failed writing '" + path + "'");
  }
}

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

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

std::vector<Series> collect_series(const SweepResult& r) {
  const PlotSpec& plot = r.plot;
  std::vector<Series> series;
  std::map<std::string, std::size_t> index;
  const std::size_t xcol = r.column_index(plot.x_column);
  for (std::size_t row = 0; row < r.rows.size(); ++row) {
    std::string group;
    for (const auto& g : plot.group_columns) {
      if (!group.empty()) group += ", ";
      group += g + "=" + format_cell(r.rows[row][r.column_index(g)]);
    }
    const double x = std::get<double>(r.rows[row][xcol]);
    for (const auto& y : plot.y_columns) {
      const std::string label = group.empty() ? y : y + " (" + group + ")";
      auto [it, inserted] = index.try_emplace(label, series.size());
      if (inserted) series.push_back(Series{label, {}});
      series[it->second].points.emplace_back(x, r.number(row, y));
    }
  }
  for (auto& s : series) {
    std::stable_sort(s.points.begin(), s.points.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
  }
  return series;
}

}  // namespace

std::string format_csv(const SweepResult& result) {
  std::string out;
  for (std::size_t i = 0; i < result.columns.size(); ++i) {
    if (i) out += ',';
    out += result.columns[i];
  }
  out += '\n';
  for (const auto& row : result.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += format_cell(row[i]);
    }
    out += '\n';
  }
  return out;
}

void emit_csv(const SweepResult& result, const std::string& path) {
  write_file(path, format_csv(result));
}

std::string format_json(const SweepResult& result) {
  nlohmann::ordered_json doc;
  doc["name"] = result.name;
  doc["columns"] = result.columns;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : result.rows) {
    auto obj = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::visit([&](const auto& v) { obj[result.columns[i]] = v; }, row[i]);
    }
    rows.push_back(std::move(obj));
  }
  doc["rows"] = std::move(rows);
  return doc.dump(2) + "\n";
}

void emit_json(const SweepResult& result, const std::string& path) {
  write_file(path, format_json(result));
}

std::string format_svg(const SweepResult& result) {
  constexpr double kWidth = 760, kHeight = 480;
  constexpr double kLeft = 80, kRight = 250, kTop = 40, kBottom = 60;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  static const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

  const auto series = collect_series(result);
  bool log_x = result.plot.log_x;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      if (x <= 0.0) log_x = false;
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (series.empty()) {
    xmin = ymin = 0.0;
    xmax = ymax = 1.0;
  }
  auto tx = [&](double x) { return log_x ? std::log10(x) : x; };
  double x0 = tx(xmin), x1 = tx(xmax);
  if (x1 - x0 <= 0.0) { x0 -= 0.5; x1 += 0.5; }
  if (ymax - ymin <= 0.0) { ymin -= 0.5; ymax += 0.5; }
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;
  auto px = [&](double x) { return kLeft + (tx(x) - x0) / (x1 - x0) * plot_w; };
  auto py = [&](double y) { return kTop + (1.0 - (y - ymin) / (ymax - ymin)) * plot_h; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << fixed(kLeft + plot_w / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << xml_escape(result.plot.title) << "</text>\n";
  svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << fixed(plot_w) << "\" height=\""
      << fixed(plot_h) << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (int i = 0; i <= 4; ++i) {
    const double fy = ymin + (ymax - ymin) * i / 4.0;
    svg << "<text x=\"" << fixed(kLeft - 6) << "\" y=\"" << fixed(py(fy) + 4)
        << "\" text-anchor=\"end\">" << format_number(fy) << "</text>\n";
    const double fx = x0 + (x1 - x0) * i / 4.0;
    const double label = log_x ? std::pow(10.0, fx) : fx;
    svg << "<text x=\"" << fixed(kLeft + plot_w * i / 4.0) << "\" y=\"" << fixed(kTop + plot_h + 18)
        << "\" text-anchor=\"middle\">" << format_number(label) << "</text>\n";
  }
  svg << "<text x=\"" << fixed(kLeft + plot_w / 2) << "\" y=\"" << fixed(kHeight - 16)
      << "\" text-anchor=\"middle\">" << xml_escape(result.plot.x_label) << (log_x ? " (log scale)" : "")
      << "</text>\n";
  svg << "<text transform=\"translate(18," << fixed(kTop + plot_h / 2)
      << ") rotate(-90)\" text-anchor=\"middle\">" << xml_escape(result.plot.y_label) << "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % std::size(kPalette)];
    const auto& s = series[i];
    svg << "<g class=\"series\" stroke=\"" << color << "\" fill=\"" << color << "\">\n";
    if (s.points.size() >= 2) {
      svg << "<polyline fill=\"none\" stroke-width=\"1.5\" points=\"";
      for (std::size_t k = 0; k < s.points.size(); ++k) {
        if (k) svg << ' ';
        svg << fixed(px(s.points[k].first)) << ',' << fixed(py(s.points[k].second));
      }
      svg << "\"/>\n";
    }
    for (auto [x, y] : s.points) {
      svg << "<circle cx=\"" << fixed(px(x)) << "\" cy=\"" << fixed(py(y)) << "\" r=\"3\"/>\n";
    }
    const double ly = kTop + 14.0 * static_cast<double>(i);
    svg << "<text x=\"" << fixed(kLeft + plot_w + 24) << "\" y=\"" << fixed(ly + 4)
        << "\" stroke=\"none\">" << xml_escape(s.label) << "</text>\n";
    svg << "<line x1=\"" << fixed(kLeft + plot_w + 6) << "\" y1=\"" << fixed(ly) << "\" x2=\""
        << fixed(kLeft + plot_w + 20) << "\" y2=\"" << fixed(ly) << "\" stroke-width=\"2\"/>\n";
    svg << "</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void emit_plot(const SweepResult& result, const std::string& path) {
  write_file(path, format_svg(result));
}

}  // namespace varshift
