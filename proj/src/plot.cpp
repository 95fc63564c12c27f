#include "nce_lab/plot.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "nce_lab/errors.hpp"

namespace nce_lab::plot {

namespace {

constexpr double kWidth = 800.0;
constexpr double kHeight = 600.0;
constexpr double kLeft = 90.0;
constexpr double kRight = 40.0;
constexpr double kTop = 60.0;
constexpr double kBottom = 70.0;
constexpr int kTicks = 5;

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') {
    cells.emplace_back();
  }
  return cells;
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
  double v = 0.0;
  const char* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw DataError(fmt::format("row {}: column '{}' is not a number: '{}'", row, column, cell));
  }
  return v;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '&':
        out += "&amp;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

struct Range {
  double lo;
  double hi;
};

Range padded_range(const std::vector<double>& v) {
  auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  double lo = *mn;
  double hi = *mx;
  if (hi == lo) {
    const double pad = lo == 0.0 ? 1.0 : 0.5 * std::abs(lo);
    return {lo - pad, hi + pad};
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

}  // namespace

ColumnSpec ColumnSpec::parse(const std::string& text) {
  ColumnSpec c;
  if (text.rfind("log:", 0) == 0) {
    c.log = true;
    c.name = text.substr(4);
  } else {
    c.name = text;
  }
  if (c.name.empty()) {
    throw ConfigError(fmt::format("empty column name in '{}'", text));
  }
  return c;
}

std::string ColumnSpec::label() const { return log ? "ln " + name : name; }

Series read_series(const std::filesystem::path& csv_path, const ColumnSpec& x, const ColumnSpec& y) {
  std::ifstream in(csv_path);
  if (!in) {
    throw DataError(fmt::format("cannot read {}", csv_path.string()));
  }
  std::string line;
  if (!std::getline(in, line) || line.empty()) {
    throw DataError(fmt::format("{} is empty", csv_path.string()));
  }
  const auto header = split_row(line);
  auto column_index = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw DataError(fmt::format("{} has no column '{}'", csv_path.string(), name));
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ix = column_index(x.name);
  const std::size_t iy = column_index(y.name);

  Series s;
  std::vector<std::size_t> bad_rows;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    ++row;
    const auto cells = split_row(line);
    if (cells.size() != header.size()) {
      throw DataError(fmt::format("row {}: expected {} cells, got {}", row, header.size(), cells.size()));
    }
    double xv = parse_cell(cells[ix], row, x.name);
    double yv = parse_cell(cells[iy], row, y.name);
    if ((x.log && !(xv > 0.0)) || (y.log && !(yv > 0.0))) {
      bad_rows.push_back(row);
      continue;
    }
    if (x.log) {
      xv = std::log(xv);
    }
    if (y.log) {
      yv = std::log(yv);
    }
    s.x.push_back(xv);
    s.y.push_back(yv);
  }
  if (!bad_rows.empty()) {
    throw DataError(fmt::format("non-positive values under log in rows {}", fmt::join(bad_rows, ",")));
  }
  if (s.x.empty()) {
    throw DataError(fmt::format("{} has no data rows", csv_path.string()));
  }
  return s;
}

std::optional<harness::FitReport> series_fit(const Series& s) {
  if (s.x.size() < 3) {
    return std::nullopt;
  }
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    pts.emplace_back(s.x[i], s.y[i]);
  }
  try {
    return harness::linear_fit(pts);
  } catch (const DomainError&) {
    return std::nullopt;  // all x equal: nothing to draw
  }
}

std::string render_svg(const Series& s, const ColumnSpec& xs, const ColumnSpec& ys) {
  const Range xr = padded_range(s.x);
  const Range yr = padded_range(s.y);
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto py = [&](double y) { return kTop + (yr.hi - y) / (yr.hi - yr.lo) * ph; };

  std::string svg;
  auto out = std::back_inserter(svg);
  fmt::format_to(out,
                 "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
                 "viewBox=\"0 0 {0} {1}\" font-family=\"sans-serif\" font-size=\"13\">\n",
                 kWidth, kHeight);
  fmt::format_to(out, "<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", kWidth, kHeight);

  // Axes and ticks.
  fmt::format_to(out,
                 "<path d=\"M{:.2f},{:.2f} V{:.2f} H{:.2f}\" fill=\"none\" stroke=\"black\"/>\n",
                 kLeft, kTop, kTop + ph, kLeft + pw);
  for (int i = 0; i <= kTicks; ++i) {
    const double fx = xr.lo + (xr.hi - xr.lo) * i / kTicks;
    const double fy = yr.lo + (yr.hi - yr.lo) * i / kTicks;
    fmt::format_to(out,
                   "<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\" stroke=\"black\"/>"
                   "<text x=\"{0:.2f}\" y=\"{3:.2f}\" text-anchor=\"middle\">{4:.4g}</text>\n",
                   px(fx), kTop + ph, kTop + ph + 5, kTop + ph + 20, fx);
    fmt::format_to(out,
                   "<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{2:.2f}\" y2=\"{1:.2f}\" stroke=\"black\"/>"
                   "<text x=\"{3:.2f}\" y=\"{4:.2f}\" text-anchor=\"end\">{5:.4g}</text>\n",
                   kLeft - 5, py(fy), kLeft, kLeft - 8, py(fy) + 4, fy);
  }
  fmt::format_to(out, "<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{}</text>\n",
                 kLeft + pw / 2, kHeight - 20, xml_escape(xs.label()));
  fmt::format_to(out,
                 "<text x=\"20\" y=\"{0:.2f}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {0:.2f})\">{1}</text>\n",
                 kTop + ph / 2, xml_escape(ys.label()));
  fmt::format_to(out, "<text x=\"{:.2f}\" y=\"30\" text-anchor=\"middle\" font-size=\"16\">{} vs {}</text>\n",
                 kWidth / 2, xml_escape(ys.label()), xml_escape(xs.label()));

  if (const auto fit = series_fit(s)) {
    const double x0 = *std::min_element(s.x.begin(), s.x.end());
    const double x1 = *std::max_element(s.x.begin(), s.x.end());
    fmt::format_to(out,
                   "<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"#c0392b\" "
                   "stroke-width=\"2\"/>\n",
                   px(x0), py(fit->intercept + fit->slope * x0), px(x1), py(fit->intercept + fit->slope * x1));
    fmt::format_to(out,
                   "<text class=\"fit\" x=\"{:.2f}\" y=\"{:.2f}\" fill=\"#c0392b\">slope = {:.6f}, r2 = {:.4f}</text>\n",
                   kLeft + 10, kTop + 18, fit->slope, fit->r_squared);
  }
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    fmt::format_to(out, "<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"4\" fill=\"#1f4e79\"/>\n", px(s.x[i]),
                   py(s.y[i]));
  }
  svg += "</svg>\n";
  return svg;
}

std::filesystem::path emit_plot(const std::filesystem::path& csv_path, const ColumnSpec& x,
                                const ColumnSpec& y, const std::filesystem::path& out_svg) {
  const Series s = read_series(csv_path, x, y);
  harness::write_text(out_svg, render_svg(s, x, y));
  return out_svg;
}

}  // namespace nce_lab::plot
