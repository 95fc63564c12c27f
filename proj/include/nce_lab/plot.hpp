#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nce_lab/harness.hpp"

namespace nce_lab::plot {

/// Column spec as accepted on the command line: `name` or `log:name`.
struct ColumnSpec {
  std::string name;
  bool log = false;

  static ColumnSpec parse(const std::string& text);
  std::string label() const;
};

struct Series {
  std::vector<double> x;
  std::vector<double> y;
};

/// Reads two numeric columns from a headered CSV. Throws DataError for a
/// missing file, an empty table, unknown columns, unparsable cells, or
/// non-positive values under `log:` (the message lists the offending rows).
Series read_series(const std::filesystem::path& csv_path, const ColumnSpec& x, const ColumnSpec& y);

/// OLS fit drawn on the plot; empty when there are fewer than 3 points.
std::optional<harness::FitReport> series_fit(const Series& s);

/// 800x600 SVG with axes, point markers and the OLS line with its slope.
/// Pure function of its inputs.
std::string render_svg(const Series& s, const ColumnSpec& x, const ColumnSpec& y);

/// read_series + render_svg + write. Returns out_svg.
std::filesystem::path emit_plot(const std::filesystem::path& csv_path, const ColumnSpec& x,
                                const ColumnSpec& y, const std::filesystem::path& out_svg);

}  // namespace nce_lab::plot
