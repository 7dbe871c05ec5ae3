#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

// Native SVG polyline charts: axes, tick labels, legend. No plotting
// dependency.

namespace augsched {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail_svg {

inline std::string fnum(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Ticks {
  double lo = 0.0, hi = 1.0, step = 0.2;
};

inline Ticks nice_ticks(double lo, double hi) {
  if (!(hi > lo)) hi = lo + 1.0;
  const double raw = (hi - lo) / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (mag * m >= raw) {
      step = mag * m;
      break;
    }
  Ticks t;
  t.step = step;
  t.lo = std::floor(lo / step) * step;
  t.hi = std::ceil(hi / step) * step;
  return t;
}

inline const char* series_color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  return palette[i % 8];
}

}  // namespace detail_svg

inline void write_line_chart_svg(const std::string& path, const std::string& title,
                                 const std::string& xlabel, const std::string& ylabel,
                                 const std::vector<Series>& series, int width = 760,
                                 int height = 440) {
  using namespace detail_svg;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool any = false;
  for (const Series& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!any) {
        xmin = xmax = s.x[i];
        ymin = ymax = s.y[i];
        any = true;
      }
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  Ticks tx = nice_ticks(xmin, xmax);
  Ticks ty = nice_ticks(ymin, ymax);

  const double ml = 64, mr = 16, mt = 34, mb = 46;
  const double pw = width - ml - mr, ph = height - mt - mb;
  auto X = [&](double v) { return ml + (v - tx.lo) / (tx.hi - tx.lo) * pw; };
  auto Y = [&](double v) { return mt + ph - (v - ty.lo) / (ty.hi - ty.lo) * ph; };

  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("svg: cannot open " + path);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">"
     << title << "</text>\n";

  // gridlines and ticks
  for (double v = ty.lo; v <= ty.hi + 1e-12; v += ty.step) {
    os << "<line x1=\"" << ml << "\" y1=\"" << Y(v) << "\" x2=\"" << ml + pw << "\" y2=\"" << Y(v)
       << "\" stroke=\"#e0e0e0\"/>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << Y(v) + 4
       << "\" text-anchor=\"end\">" << fnum(v) << "</text>\n";
  }
  for (double v = tx.lo; v <= tx.hi + 1e-12; v += tx.step) {
    os << "<line x1=\"" << X(v) << "\" y1=\"" << mt << "\" x2=\"" << X(v) << "\" y2=\"" << mt + ph
       << "\" stroke=\"#f0f0f0\"/>\n";
    os << "<text x=\"" << X(v) << "\" y=\"" << mt + ph + 16
       << "\" text-anchor=\"middle\">" << fnum(v) << "</text>\n";
  }
  os << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
     << mt + ph << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 10
     << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  os << "<text x=\"16\" y=\"" << mt + ph / 2
     << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << mt + ph / 2 << ")\">" << ylabel
     << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    if (series[s].x.empty()) continue;
    os << "<polyline fill=\"none\" stroke=\"" << series_color(s)
       << "\" stroke-width=\"1.6\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size(); ++i)
      os << fnum(X(series[s].x[i])) << ',' << fnum(Y(series[s].y[i])) << ' ';
    os << "\"/>\n";
  }
  // legend
  double ly = mt + 8;
  for (std::size_t s = 0; s < series.size(); ++s) {
    os << "<line x1=\"" << ml + pw - 130 << "\" y1=\"" << ly << "\" x2=\"" << ml + pw - 110
       << "\" y2=\"" << ly << "\" stroke=\"" << series_color(s) << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << ml + pw - 104 << "\" y=\"" << ly + 4 << "\">" << series[s].name
       << "</text>\n";
    ly += 16;
  }
  os << "</svg>\n";
  if (!os) throw std::runtime_error("svg: write failure on " + path);
}

}  // namespace augsched
