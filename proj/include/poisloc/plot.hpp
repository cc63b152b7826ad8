#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace poisloc {

class MissingColumns : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Minimal reader for the harness CSVs (no quoting; fields never contain commas).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// Column index; throws MissingColumns naming every absent column.
  std::vector<std::size_t> require(const std::vector<std::string>& names, const std::string& source) const;
};

CsvTable read_csv(const std::filesystem::path& path);

struct SvgSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool line = false;
  std::string color = "#1f77b4";
  /// Optional vertical error bars.
  std::vector<double> lo;
  std::vector<double> hi;
};

struct SvgPlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<SvgSeries> series;
  std::vector<std::string> notes;
  std::string render() const;
};

/// Plot kinds: decay, probability, moment, stability. Writes
/// <dir>/plot_<kind>.svg and returns its path.
std::filesystem::path plot_results(const std::filesystem::path& dir, const std::string& kind);

}  // namespace poisloc
