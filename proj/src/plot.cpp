#include "daformer/experiment/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <regex>
#include <sstream>

#include "daformer/core/errors.hpp"

namespace daformer {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string tick(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

constexpr double kW = 640, kH = 400, kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;
const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::ofstream open_svg(const fs::path& out, const std::string& title) {
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream os(out);
  if (!os) throw FormatError("cannot write " + out.string());
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 "
     << kW << ' ' << kH << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
     << "</text>\n";
  return os;
}

void axes(std::ostream& os, const std::string& xlabel, const std::string& ylabel) {
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kH - kBottom << "\" x2=\"" << kW - kRight << "\" y2=\""
     << kH - kBottom << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kH - kBottom
     << "\" stroke=\"black\"/>\n"
     << "<text x=\"" << (kLeft + kW - kRight) / 2 << "\" y=\"" << kH - 15 << "\" text-anchor=\"middle\">"
     << escape(xlabel) << "</text>\n"
     << "<text x=\"18\" y=\"" << (kTop + kH - kBottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << (kTop + kH - kBottom) / 2 << ")\">" << escape(ylabel) << "</text>\n";
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw FormatError("missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

std::vector<double> CsvTable::numbers(const std::string& name) const {
  const std::size_t c = column(name);
  std::vector<double> out;
  for (const auto& r : rows) {
    if (c >= r.size()) throw FormatError("short row in column '" + name + "'");
    const std::string& s = r[c];
    if (s == "nan" || s.empty()) {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    try {
      out.push_back(std::stod(s));
    } catch (const std::exception&) {
      throw FormatError("non-numeric value '" + s + "' in column '" + name + "'");
    }
  }
  return out;
}

std::vector<std::string> CsvTable::strings(const std::string& name) const {
  const std::size_t c = column(name);
  std::vector<std::string> out;
  for (const auto& r : rows) out.push_back(c < r.size() ? r[c] : "");
  return out;
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty CSV " + path.string());
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    t.rows.push_back(split(line));
  }
  return t;
}

void write_line_svg(const fs::path& out, const std::string& title, const std::string& xlabel,
                    const std::string& ylabel, std::span<const Series> series) {
  if (series.empty()) throw FormatError("line plot without curves");
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  std::size_t points = 0;
  for (const Series& s : series) {
    if (s.x.size() != s.y.size()) throw FormatError("series '" + s.name + "' has mismatched x/y");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isnan(s.y[i]) || std::isnan(s.x[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
      ++points;
    }
  }
  if (points == 0) throw FormatError("line plot without data points");
  if (x1 == x0) { x0 -= 1; x1 += 1; }
  if (y1 == y0) { y0 -= 1; y1 += 1; }
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kH - kBottom - (y - y0) / (y1 - y0) * ph; };
  std::ofstream os = open_svg(out, title);
  axes(os, xlabel, ylabel);
  for (int k = 0; k <= 4; ++k) {
    const double yv = y0 + (y1 - y0) * k / 4.0, xv = x0 + (x1 - x0) * k / 4.0;
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << tick(yv) << "</text>\n"
       << "<text x=\"" << px(xv) << "\" y=\"" << kH - kBottom + 16 << "\" text-anchor=\"middle\">" << tick(xv)
       << "</text>\n";
  }
  for (std::size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    const char* color = kPalette[si % 8];
    std::string path;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isnan(s.y[i]) || std::isnan(s.x[i])) continue;
      path += (path.empty() ? "M" : " L") + num(px(s.x[i])) + ' ' + num(py(s.y[i]));
    }
    if (path.find('L') != std::string::npos)
      os << "<path d=\"" << path << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isnan(s.y[i]) || std::isnan(s.x[i])) continue;
      os << "<circle class=\"marker\" cx=\"" << num(px(s.x[i])) << "\" cy=\"" << num(py(s.y[i]))
         << "\" r=\"2.5\" fill=\"" << color << "\" data-x=\"" << num(s.x[i]) << "\" data-value=\"" << num(s.y[i])
         << "\"/>\n";
    }
    os << "<text x=\"" << kW - kRight - 4 << "\" y=\"" << kTop + 14 * (si + 1) << "\" text-anchor=\"end\" fill=\""
       << color << "\">" << escape(s.name) << "</text>\n";
  }
  os << "</svg>\n";
}

void write_bar_svg(const fs::path& out, const std::string& title, const std::string& ylabel,
                   std::span<const std::string> labels, std::span<const double> values, bool log_y) {
  if (values.empty()) throw FormatError("bar plot without values");
  if (labels.size() != values.size()) throw FormatError("bar plot labels/values mismatch");
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    hi = std::max(hi, v);
    if (v > 0) lo = std::min(lo, v);
  }
  if (!(hi > 0)) hi = 1.0;
  double d0, d1;
  if (log_y) {
    if (!std::isfinite(lo)) lo = hi;
    d0 = std::floor(std::log10(lo));
    d1 = std::ceil(std::log10(hi));
    if (d1 == d0) d1 = d0 + 1;
  } else {
    d0 = 0.0;
    d1 = hi * 1.1;
  }
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto py = [&](double v) {
    const double t = log_y ? (std::log10(v) - d0) / (d1 - d0) : (v - d0) / (d1 - d0);
    return kH - kBottom - t * ph;
  };
  std::ofstream os = open_svg(out, title);
  axes(os, "class", ylabel + (log_y ? " (log scale)" : ""));
  if (log_y) {
    for (int e = static_cast<int>(d0); e <= static_cast<int>(d1); ++e)
      os << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(std::pow(10.0, e)) + 4 << "\" text-anchor=\"end\">1e" << e
         << "</text>\n";
  } else {
    for (int k = 0; k <= 4; ++k) {
      const double v = d1 * k / 4.0;
      os << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << tick(v) << "</text>\n";
    }
  }
  const double slot = pw / static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    const double x = kLeft + slot * i + slot * 0.15;
    const double base = kH - kBottom;
    const double top = (std::isnan(v) || v <= 0) ? base : py(v);
    os << "<rect class=\"bar\" x=\"" << num(x) << "\" y=\"" << num(top) << "\" width=\"" << num(slot * 0.7)
       << "\" height=\"" << num(base - top) << "\" fill=\"" << kPalette[0] << "\" data-label=\"" << escape(labels[i])
       << "\" data-value=\"" << num(v) << "\"/>\n"
       << "<text x=\"" << num(x + slot * 0.35) << "\" y=\"" << base + 16 << "\" text-anchor=\"middle\">"
       << escape(labels[i]) << "</text>\n";
  }
  os << "</svg>\n";
}

std::vector<double> read_bar_values(const fs::path& svg) {
  std::ifstream in(svg);
  if (!in) throw FormatError("cannot read " + svg.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  static const std::regex re("class=\"bar\"[^>]*data-value=\"([^\"]*)\"");
  std::vector<double> out;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it)
    out.push_back(std::stod((*it)[1].str()));
  return out;
}

void make_plot(const std::string& kind, std::span<const std::string> inputs, const fs::path& out,
               const std::string& column) {
  if (inputs.empty()) throw FormatError("plot: no input files");
  if (kind == "iou_curve") {
    const std::string col = column.empty() ? "mIoU" : column;
    std::vector<Series> series;
    for (const std::string& in : inputs) {
      const CsvTable t = read_csv(in);
      Series s;
      const fs::path p(in);
      s.name = p.has_parent_path() ? p.parent_path().filename().string() : p.stem().string();
      s.x = t.numbers("iter");
      s.y = t.numbers(col);
      series.push_back(std::move(s));
    }
    write_line_svg(out, col + " IoU on target validation", "iteration", "IoU (%)", series);
  } else if (kind == "class_stats" || kind == "p_of_c") {
    if (inputs.size() != 1) throw FormatError("plot: " + kind + " takes exactly one stats CSV");
    const CsvTable t = read_csv(inputs[0]);
    const std::vector<std::string> names = t.strings("name");
    if (kind == "class_stats") {
      const std::vector<double> f = t.numbers("f");
      write_bar_svg(out, "Source class pixel frequency", "f_c", names, f, true);
    } else {
      const std::vector<double> p = t.numbers("P");
      write_bar_svg(out, "Class sampling probability", "P(c)", names, p, false);
    }
  } else {
    throw ConfigError("unknown plot kind: " + kind);
  }
}

}  // namespace daformer
