#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace dpodyn {

enum class SeriesStyle { kLine, kPoints };

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  SeriesStyle style = SeriesStyle::kLine;
};

struct ChartSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<Series> series;
};

// Standalone SVG document. Identical specs give identical bytes. Throws
// Error(kRender) on an empty spec, length mismatch, non-finite values, a
// non-monotone line series, or non-positive values on a log axis.
std::string render_svg(const ChartSpec& spec);
void render_chart(const ChartSpec& spec, const std::filesystem::path& path);

ChartSpec chart_from_json(const std::string& text);
std::string chart_to_json(const ChartSpec& spec);

}  // namespace dpodyn
