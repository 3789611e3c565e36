#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <json.hpp>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "anderson/error.hpp"
#include "anderson/fem.hpp"
#include "anderson/hash.hpp"

namespace anderson {

using json = nlohmann::ordered_json;

/// Shortest decimal that round-trips; identical across runs.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot open '" + path.string() + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw InvalidArgument("failed writing '" + path.string() + "'");
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// CSV with two comment lines: the config hash and the column units.
class CsvTable {
 public:
  struct Column {
    std::string name;
    std::string unit;
  };

  CsvTable(std::vector<Column> columns, std::string config_hash)
      : columns_(std::move(columns)), hash_(std::move(config_hash)) {}

  CsvTable& row(const std::vector<double>& values) {
    require(values.size() == columns_.size(), "csv: row width does not match the header");
    std::vector<std::string> cells;
    for (double v : values) cells.push_back(format_number(v));
    rows_.push_back(std::move(cells));
    return *this;
  }

  std::size_t rows() const { return rows_.size(); }

  std::string str() const {
    std::string out = "# config_hash: " + hash_ + "\n# units:";
    for (const auto& c : columns_) out += " " + c.name + "=" + c.unit;
    out += "\n";
    for (std::size_t i = 0; i < columns_.size(); ++i) out += (i ? "," : "") + columns_[i].name;
    out += "\n";
    for (const auto& r : rows_) {
      for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + r[i];
      out += "\n";
    }
    return out;
  }

  void save(const std::filesystem::path& path) const { write_file(path, str()); }

 private:
  std::vector<Column> columns_;
  std::string hash_;
  std::vector<std::vector<std::string>> rows_;
};

// ---------------------------------------------------------------------------
// SVG

/// Greyscale cell map (white = 0, black = max). 1D data is drawn as a strip.
inline std::string svg_heatmap(const std::vector<double>& values, int d, int side, const std::string& title,
                               const std::string& config_hash) {
  require(d == 1 || d == 2, "svg_heatmap: only 1D and 2D data can be drawn");
  const std::size_t expected = d == 1 ? static_cast<std::size_t>(side) : static_cast<std::size_t>(side) * side;
  require(values.size() == expected, "svg_heatmap: value count does not match the grid");
  const double peak = std::max(1e-300, *std::max_element(values.begin(), values.end()));
  const int px = std::max(1, 512 / side);
  const int w = px * side, h = d == 1 ? 48 : px * side;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h + 20 << "\">\n";
  s << "<!-- config_hash: " << config_hash << " -->\n";
  s << "<title>" << title << "</title>\n";
  s << "<text x=\"2\" y=\"14\" font-size=\"12\">" << title << "</text>\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    const int x = static_cast<int>(i % static_cast<std::size_t>(side));
    const int y = d == 1 ? 0 : static_cast<int>(i / static_cast<std::size_t>(side));
    const int g = 255 - static_cast<int>(std::lround(255.0 * std::clamp(values[i] / peak, 0.0, 1.0)));
    // Row 0 at the bottom, as in a plot.
    const int top = 20 + (d == 1 ? 0 : (side - 1 - y) * px);
    s << "<rect x=\"" << x * px << "\" y=\"" << top << "\" width=\"" << px << "\" height=\"" << (d == 1 ? h : px)
      << "\" fill=\"rgb(" << g << "," << g << "," << g << ")\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

struct ScatterSeries {
  std::string label;
  std::vector<double> x, y;
  bool cross = false;  // × markers instead of ○
};

/// Scatter of several series on shared linear axes.
inline std::string svg_scatter(const std::vector<ScatterSeries>& series, const std::string& title,
                               const std::string& x_label, const std::string& y_label,
                               const std::string& config_hash) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (!(x1 > x0)) x1 = x0 + 1;
  if (!(y1 > y0)) y1 = y0 + 1;
  const double W = 640, H = 420, ml = 70, mr = 20, mt = 30, mb = 50;
  auto X = [&](double x) { return ml + (x - x0) / (x1 - x0) * (W - ml - mr); };
  auto Y = [&](double y) { return H - mb - (y - y0) / (y1 - y0) * (H - mt - mb); };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  s << "<!-- config_hash: " << config_hash << " -->\n";
  s << "<title>" << title << "</title>\n";
  s << "<text x=\"" << ml << "\" y=\"18\" font-size=\"14\">" << title << "</text>\n";
  s << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr << "\" height=\"" << H - mt - mb
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" font-size=\"12\">" << x_label << "</text>\n";
  s << "<text x=\"12\" y=\"" << H / 2 << "\" font-size=\"12\" transform=\"rotate(-90 12 " << H / 2 << ")\">"
    << y_label << "</text>\n";
  s << "<text x=\"" << ml << "\" y=\"" << H - mb + 16 << "\" font-size=\"10\">" << format_number(x0) << "</text>\n";
  s << "<text x=\"" << W - mr - 40 << "\" y=\"" << H - mb + 16 << "\" font-size=\"10\">" << format_number(x1)
    << "</text>\n";
  s << "<text x=\"2\" y=\"" << H - mb << "\" font-size=\"10\">" << format_number(y0) << "</text>\n";
  s << "<text x=\"2\" y=\"" << mt + 10 << "\" font-size=\"10\">" << format_number(y1) << "</text>\n";
  int legend = 0;
  for (const auto& ser : series) {
    s << "<g>\n";
    for (std::size_t i = 0; i < ser.x.size(); ++i) {
      const double cx = X(ser.x[i]), cy = Y(ser.y[i]);
      if (ser.cross)
        s << "<path d=\"M" << cx - 3 << " " << cy - 3 << "L" << cx + 3 << " " << cy + 3 << "M" << cx - 3 << " "
          << cy + 3 << "L" << cx + 3 << " " << cy - 3 << "\" stroke=\"black\"/>\n";
      else
        s << "<circle cx=\"" << cx << "\" cy=\"" << cy << "\" r=\"3\" fill=\"none\" stroke=\"black\"/>\n";
    }
    s << "</g>\n";
    s << "<text x=\"" << ml + 10 << "\" y=\"" << mt + 16 + 14 * legend++ << "\" font-size=\"11\">"
      << (ser.cross ? "× " : "○ ") << ser.label << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

// ---------------------------------------------------------------------------
// Matrix and vector dumps

/// Coordinate text (row col value, 0-based, column-major order) and its
/// JSON sidecar.
inline std::pair<std::string, json> matrix_dump(const SpMat& A, double h, const std::string& field_hash) {
  std::string body;
  for (Eigen::Index col = 0; col < A.outerSize(); ++col)
    for (SpMat::InnerIterator it(A, col); it; ++it)
      body += std::to_string(it.row()) + " " + std::to_string(it.col()) + " " + format_number(it.value()) + "\n";
  json side;
  side["format"] = "coordinate text: row col value per line, 0-based, column-major";
  side["n"] = A.rows();
  side["nnz"] = A.nonZeros();
  side["h"] = h;
  side["field_hash"] = field_hash;
  side["content_hash"] = content_hash(body);
  return {body, side};
}

inline CsvTable vector_table(const Vec& v, const std::string& name, const std::string& unit,
                             const std::string& config_hash) {
  CsvTable t({{"index", "1"}, {name, unit}}, config_hash);
  for (Eigen::Index i = 0; i < v.size(); ++i) t.row({static_cast<double>(i), v[i]});
  return t;
}

}  // namespace anderson
