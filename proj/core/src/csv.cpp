#include "eotlab/csv.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "eotlab/util.hpp"

namespace eotlab {

namespace {
std::string join(const std::vector<std::string>& cells) {
  std::string out;
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += csv_escape(cells[i]);
  }
  out += '\n';
  return out;
}
}  // namespace

std::string csv_escape(const std::string& cell) {
  if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
  std::string q = "\"";
  for (char c : cell) {
    q += c;
    if (c == '"') q += '"';
  }
  q += '"';
  return q;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvWriter::comment(const std::string& line) { comments_ += "# " + line + "\n"; }

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != header_.size())
    throw std::invalid_argument("CsvWriter: row width does not match header");
  body_ += join(cells);
}

std::string CsvWriter::document() const { return comments_ + join(header_) + body_; }

void CsvWriter::write_atomic(const std::filesystem::path& path) const {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << document();
  }
  fs::rename(tmp, path);
}

CsvTable read_numeric_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  CsvTable table;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        cells.push_back(cur);
        cur.clear();
      } else if (c != '\r') {
        cur += c;
      }
    }
    cells.push_back(cur);
    if (!header_seen) {
      table.header = cells;
      header_seen = true;
      continue;
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (auto& c : cells) row.push_back(std::strtod(c.c_str(), nullptr));
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_svg_log_plot(const std::filesystem::path& path, const std::string& title,
                        const std::vector<SvgSeries>& series) {
  const double w = 720, h = 480, ml = 70, mr = 20, mt = 40, mb = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      if (!(y > 0) || !std::isfinite(y) || !std::isfinite(x)) continue;
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, std::log10(y));
      ymax = std::max(ymax, std::log10(y));
    }
  if (xmin >= xmax) { xmin = 0; xmax = 1; }
  if (ymin >= ymax) { ymin -= 0.5; ymax += 0.5; }
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
  auto py = [&](double ly) { return h - mb - (ly - ymin) / (ymax - ymin) * (h - mt - mb); };

  std::string doc;
  doc += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + format_double(w) +
         "\" height=\"" + format_double(h) + "\">\n";
  doc += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  doc += "<text x=\"" + format_double(w / 2) + "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"16\">" + title + "</text>\n";
  // axes
  doc += "<line x1=\"" + format_double(ml) + "\" y1=\"" + format_double(h - mb) + "\" x2=\"" +
         format_double(w - mr) + "\" y2=\"" + format_double(h - mb) + "\" stroke=\"black\"/>\n";
  doc += "<line x1=\"" + format_double(ml) + "\" y1=\"" + format_double(mt) + "\" x2=\"" +
         format_double(ml) + "\" y2=\"" + format_double(h - mb) + "\" stroke=\"black\"/>\n";
  for (int k = static_cast<int>(std::ceil(ymin)); k <= static_cast<int>(std::floor(ymax)); ++k) {
    doc += "<text x=\"" + format_double(ml - 8) + "\" y=\"" + format_double(py(k) + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">1e" +
           std::to_string(k) + "</text>\n";
    doc += "<line x1=\"" + format_double(ml) + "\" y1=\"" + format_double(py(k)) + "\" x2=\"" +
           format_double(w - mr) + "\" y2=\"" + format_double(py(k)) +
           "\" stroke=\"#dddddd\"/>\n";
  }
  double ly = mt + 12;
  for (const auto& s : series) {
    std::string pts;
    for (auto [x, y] : s.points) {
      if (!(y > 0) || !std::isfinite(y)) continue;
      pts += format_double(px(x)) + "," + format_double(py(std::log10(y))) + " ";
    }
    doc += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.5\" points=\"" +
           pts + "\"/>\n";
    doc += "<text x=\"" + format_double(w - mr - 4) + "\" y=\"" + format_double(ly) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" +
           s.color + "\">" + s.label + "</text>\n";
    ly += 16;
  }
  doc += "</svg>\n";

  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << doc;
  }
  fs::rename(tmp, path);
}

}  // namespace eotlab
