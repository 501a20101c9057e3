#include "dpodyn/chart.hpp"

#include "dpodyn/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace dpodyn {
namespace {

constexpr double kWidth = 820.0;
constexpr double kHeight = 500.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 200.0;
constexpr double kTop = 50.0;
constexpr double kBottom = 60.0;

constexpr const char* kPalette[] = {"#440154", "#3b528b", "#21918c", "#5ec962", "#fde725",
                                    "#d62728", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};

std::string tick_text(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string coord(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Axis {
  double lo = 0.0;  // in transformed (possibly log10) units
  double hi = 1.0;
  bool log = false;
  std::vector<double> ticks;  // transformed units

  double transform(double v) const { return log ? std::log10(v) : v; }
  std::string label(double t) const { return tick_text(log ? std::pow(10.0, t) : t); }
};

double nice_step(double span, int target) {
  const double raw = span / target;
  const double magnitude = std::pow(10.0, std::floor(std::log10(raw)));
  const double r = raw / magnitude;
  const double nice = r <= 1.0 ? 1.0 : r <= 2.0 ? 2.0 : r <= 5.0 ? 5.0 : 10.0;
  return nice * magnitude;
}

Axis make_axis(double lo, double hi, bool log) {
  Axis axis;
  axis.log = log;
  if (lo == hi) {
    // Constant data: pad symmetrically around the value.
    const double pad = lo == 0.0 ? 1.0 : (log ? 1.0 : 0.5 * std::abs(lo));
    lo -= pad;
    hi += pad;
  }
  if (log && std::floor(hi) - std::ceil(lo) >= 1.0) {
    axis.lo = std::floor(lo);
    axis.hi = std::ceil(hi);
    for (double t = axis.lo; t <= axis.hi + 1e-9; t += 1.0) axis.ticks.push_back(t);
    return axis;
  }
  const double step = nice_step(hi - lo, 5);
  axis.lo = std::floor(lo / step) * step;
  axis.hi = std::ceil(hi / step) * step;
  for (int k = 0;; ++k) {
    const double t = axis.lo + k * step;
    if (t > axis.hi + 0.5 * step) break;
    axis.ticks.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  }
  return axis;
}

void validate(const ChartSpec& spec) {
  if (spec.series.empty()) throw Error(ErrorKind::kRender, "chart has no series");
  for (const auto& s : spec.series) {
    auto fail = [&](const std::string& why) {
      throw Error(ErrorKind::kRender, "series '" + s.label + "': " + why);
    };
    if (s.x.empty()) fail("no points");
    if (s.x.size() != s.y.size()) fail("x and y lengths differ");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) fail("non-finite value");
      if (spec.log_x && s.x[i] <= 0.0) fail("non-positive x on a log axis");
      if (spec.log_y && s.y[i] <= 0.0) fail("non-positive y on a log axis");
      if (s.style == SeriesStyle::kLine && i > 0 && s.x[i] < s.x[i - 1]) fail("x is not monotone");
    }
  }
}

}  // namespace

std::string render_svg(const ChartSpec& spec) {
  validate(spec);
  double x_lo = INFINITY, x_hi = -INFINITY, y_lo = INFINITY, y_hi = -INFINITY;
  for (const auto& s : spec.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double x = spec.log_x ? std::log10(s.x[i]) : s.x[i];
      const double y = spec.log_y ? std::log10(s.y[i]) : s.y[i];
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x);
      y_lo = std::min(y_lo, y);
      y_hi = std::max(y_hi, y);
    }
  }
  const Axis xa = make_axis(x_lo, x_hi, spec.log_x);
  const Axis ya = make_axis(y_lo, y_hi, spec.log_y);
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double t) { return kLeft + (t - xa.lo) / (xa.hi - xa.lo) * plot_w; };
  auto py = [&](double t) { return kTop + plot_h - (t - ya.lo) / (ya.hi - ya.lo) * plot_h; };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!spec.title.empty()) {
    svg << "<text x=\"" << coord(kLeft + plot_w / 2) << "\" y=\"28\" text-anchor=\"middle\" "
        << "font-size=\"16\">" << escape(spec.title) << "</text>\n";
  }

  // Grid and ticks.
  svg << "<g stroke=\"#dddddd\" stroke-width=\"1\">\n";
  for (double t : xa.ticks) {
    svg << "<line x1=\"" << coord(px(t)) << "\" y1=\"" << coord(kTop) << "\" x2=\"" << coord(px(t))
        << "\" y2=\"" << coord(kTop + plot_h) << "\"/>\n";
  }
  for (double t : ya.ticks) {
    svg << "<line x1=\"" << coord(kLeft) << "\" y1=\"" << coord(py(t)) << "\" x2=\""
        << coord(kLeft + plot_w) << "\" y2=\"" << coord(py(t)) << "\"/>\n";
  }
  svg << "</g>\n";
  svg << "<rect x=\"" << coord(kLeft) << "\" y=\"" << coord(kTop) << "\" width=\"" << coord(plot_w)
      << "\" height=\"" << coord(plot_h) << "\" fill=\"none\" stroke=\"black\"/>\n";
  svg << "<g font-size=\"11\" fill=\"black\">\n";
  for (double t : xa.ticks) {
    svg << "<text x=\"" << coord(px(t)) << "\" y=\"" << coord(kTop + plot_h + 16)
        << "\" text-anchor=\"middle\">" << xa.label(t) << "</text>\n";
  }
  for (double t : ya.ticks) {
    svg << "<text x=\"" << coord(kLeft - 6) << "\" y=\"" << coord(py(t) + 4)
        << "\" text-anchor=\"end\">" << ya.label(t) << "</text>\n";
  }
  svg << "</g>\n";
  if (!spec.x_label.empty()) {
    svg << "<text x=\"" << coord(kLeft + plot_w / 2) << "\" y=\"" << coord(kHeight - 18)
        << "\" text-anchor=\"middle\" font-size=\"13\">" << escape(spec.x_label) << "</text>\n";
  }
  if (!spec.y_label.empty()) {
    svg << "<text x=\"18\" y=\"" << coord(kTop + plot_h / 2) << "\" text-anchor=\"middle\" "
        << "font-size=\"13\" transform=\"rotate(-90 18 " << coord(kTop + plot_h / 2) << ")\">"
        << escape(spec.y_label) << "</text>\n";
  }

  // Series.
  for (std::size_t k = 0; k < spec.series.size(); ++k) {
    const Series& s = spec.series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    if (s.style == SeriesStyle::kLine) {
      svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (i) svg << ' ';
        svg << coord(px(xa.transform(s.x[i]))) << ',' << coord(py(ya.transform(s.y[i])));
      }
      svg << "\"/>\n";
    } else {
      svg << "<g fill=\"" << color << "\" fill-opacity=\"0.7\">\n";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        svg << "<circle cx=\"" << coord(px(xa.transform(s.x[i]))) << "\" cy=\""
            << coord(py(ya.transform(s.y[i]))) << "\" r=\"2.5\"/>\n";
      }
      svg << "</g>\n";
    }
  }

  // Legend.
  const double lx = kLeft + plot_w + 16;
  svg << "<g font-size=\"12\">\n";
  for (std::size_t k = 0; k < spec.series.size(); ++k) {
    const double ly = kTop + 10 + 20.0 * static_cast<double>(k);
    const char* color = kPalette[k % std::size(kPalette)];
    svg << "<rect x=\"" << coord(lx) << "\" y=\"" << coord(ly - 9) << "\" width=\"14\" height=\"10\" "
        << "fill=\"" << color << "\"/>\n";
    svg << "<text x=\"" << coord(lx + 20) << "\" y=\"" << coord(ly) << "\">"
        << escape(spec.series[k].label) << "</text>\n";
  }
  svg << "</g>\n</svg>\n";
  return svg.str();
}

void render_chart(const ChartSpec& spec, const std::filesystem::path& path) {
  const std::string text = render_svg(spec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "write to '" + path.string() + "' failed");
}

ChartSpec chart_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kConfig, std::string("chart spec is not valid JSON: ") + e.what());
  }
  auto fail = [](const std::string& why) { throw Error(ErrorKind::kConfig, "chart spec: " + why); };
  if (!doc.is_object()) fail("expected an object");
  const std::set<std::string> known = {"title", "x_label", "y_label", "log_x", "log_y", "series"};
  for (const auto& [key, _] : doc.items()) {
    if (!known.count(key)) fail("unknown key '" + key + "'");
  }
  ChartSpec spec;
  try {
    spec.title = doc.value("title", "");
    spec.x_label = doc.value("x_label", "");
    spec.y_label = doc.value("y_label", "");
    spec.log_x = doc.value("log_x", false);
    spec.log_y = doc.value("log_y", false);
    if (!doc.contains("series") || !doc["series"].is_array()) fail("'series' must be an array");
    for (const auto& s : doc["series"]) {
      for (const auto& [key, _] : s.items()) {
        if (key != "label" && key != "x" && key != "y" && key != "style") {
          fail("unknown series key '" + key + "'");
        }
      }
      Series series;
      series.label = s.value("label", "");
      series.x = s.at("x").get<std::vector<double>>();
      series.y = s.at("y").get<std::vector<double>>();
      const std::string style = s.value("style", "line");
      if (style == "points") {
        series.style = SeriesStyle::kPoints;
      } else if (style != "line") {
        fail("style must be 'line' or 'points'");
      }
      spec.series.push_back(std::move(series));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(e.what());
  }
  return spec;
}

std::string chart_to_json(const ChartSpec& spec) {
  nlohmann::ordered_json doc;
  doc["title"] = spec.title;
  doc["x_label"] = spec.x_label;
  doc["y_label"] = spec.y_label;
  doc["log_x"] = spec.log_x;
  doc["log_y"] = spec.log_y;
  doc["series"] = nlohmann::ordered_json::array();
  for (const auto& s : spec.series) {
    doc["series"].push_back({{"label", s.label},
                             {"x", s.x},
                             {"y", s.y},
                             {"style", s.style == SeriesStyle::kLine ? "line" : "points"}});
  }
  return doc.dump(2) + "\n";
}

}  // namespace dpodyn
