#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace daformer {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a column; throws FormatError when it is missing.
  std::size_t column(const std::string& name) const;
  std::vector<double> numbers(const std::string& name) const;
  std::vector<std::string> strings(const std::string& name) const;
};

/// Plain comma-separated file with a header row; no quoting.
CsvTable read_csv(const std::filesystem::path& path);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Line chart with one marker per point. NaN points are skipped.
void write_line_svg(const std::filesystem::path& out, const std::string& title, const std::string& xlabel,
                    const std::string& ylabel, std::span<const Series> series);

/// Bar chart; every bar carries its value in a data-value attribute. With
/// log_y the axis is logarithmic and non-positive values are drawn empty.
void write_bar_svg(const std::filesystem::path& out, const std::string& title, const std::string& ylabel,
                   std::span<const std::string> labels, std::span<const double> values, bool log_y);

/// Values of the data-value attributes of an SVG written by write_bar_svg.
std::vector<double> read_bar_values(const std::filesystem::path& svg);

/// kind: iou_curve (eval.csv files; `column` selects the curve, default
/// mIoU), class_stats (stats CSV, f on a log axis) or p_of_c (stats CSV, P).
void make_plot(const std::string& kind, std::span<const std::string> inputs, const std::filesystem::path& out,
               const std::string& column = "");

}  // namespace daformer
