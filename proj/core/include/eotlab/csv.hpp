#pragma once

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

namespace eotlab {

// Column-oriented CSV writer. Rows are buffered and flushed atomically
// (write to a temp file, then rename) so concurrent cells never expose a
// half-written artifact. Comment lines start with '#' and are the only
// place run metadata such as timestamps may appear.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  void comment(const std::string& line);
  void row(const std::vector<std::string>& cells);
  const std::string& body() const { return body_; }
  std::string document() const;

  void write_atomic(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::string comments_;
  std::string body_;
};

std::string csv_escape(const std::string& cell);

// Parses a numeric CSV document written by CsvWriter: skips comments,
// returns the header and one vector<double> per row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};
CsvTable read_numeric_csv(const std::filesystem::path& path);

// Minimal SVG polyline chart, used for the optional KL-vs-iteration plots.
// Each series is a list of (x, y) points drawn on a log10 y-axis.
struct SvgSeries {
  std::string label;
  std::string color;
  std::vector<std::pair<double, double>> points;
};
void write_svg_log_plot(const std::filesystem::path& path, const std::string& title,
                        const std::vector<SvgSeries>& series);

}  // namespace eotlab
