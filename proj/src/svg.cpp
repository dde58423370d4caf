#include "deepvo/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "deepvo/error.hpp"
#include "deepvo/geom.hpp"

namespace deepvo {
namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 480.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 150.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;

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

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!(lo <= hi)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) {
      const double pad = std::max(std::abs(lo) * 0.05, 0.5);
      lo -= pad;
      hi += pad;
    }
  }
  double span() const { return hi - lo; }
};

}  // namespace

std::string render_svg(const SvgPlot& plot) {
  Range xr, yr;
  for (const auto& s : plot.series) {
    for (const auto& [x, y] : s.points) {
      xr.add(x);
      yr.add(y);
    }
  }
  xr.finish();
  yr.finish();
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  double sx = pw / xr.span();
  double sy = ph / yr.span();
  double ox = kLeft, oy = kTop + ph;
  if (plot.equal_aspect) {
    const double s = std::min(sx, sy);
    ox += 0.5 * (pw - s * xr.span());
    oy -= 0.5 * (ph - s * yr.span());
    sx = sy = s;
  }
  // Canvas = (ox + sx*(x - xlo), oy - sy*(y - ylo)).
  const double tx = ox - sx * xr.lo;
  const double ty = oy + sy * yr.lo;

  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"16\">" << escape(plot.title) << "</text>\n";
  out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  const auto label = [&](double x, double y, const char* anchor, const std::string& text) {
    out << "<text x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"" << anchor
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape(text) << "</text>\n";
  };
  label(kLeft, kTop + ph + 16, "start", format_real(xr.lo));
  label(kLeft + pw, kTop + ph + 16, "end", format_real(xr.hi));
  label(kLeft - 6, kTop + ph, "end", format_real(yr.lo));
  label(kLeft - 6, kTop + 10, "end", format_real(yr.hi));
  label(kLeft + pw / 2, kHeight - 12, "middle", plot.x_label);
  out << "<text transform=\"translate(16 " << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"11\">" << escape(plot.y_label) << "</text>\n";

  out << "<g class=\"data\" transform=\"matrix(" << format_real(sx) << " 0 0 " << format_real(-sy) << ' '
      << format_real(tx) << ' ' << format_real(ty) << ")\">\n";
  for (const auto& s : plot.series) {
    out << "<polyline data-label=\"" << escape(s.label) << "\" fill=\"none\" stroke=\"" << escape(s.color)
        << "\" stroke-width=\"1.5\" vector-effect=\"non-scaling-stroke\" points=\"";
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      out << (i ? " " : "") << format_real(s.points[i].first) << ',' << format_real(s.points[i].second);
    }
    out << "\"/>\n";
  }
  out << "</g>\n";

  double ly = kTop + 12;
  for (const auto& s : plot.series) {
    const double lx = kLeft + pw + 12;
    out << "<line x1=\"" << lx << "\" y1=\"" << ly - 4 << "\" x2=\"" << lx + 20 << "\" y2=\"" << ly - 4
        << "\" stroke=\"" << escape(s.color) << "\" stroke-width=\"2\"/>\n";
    label(lx + 26, ly, "start", s.label);
    ly += 18;
  }
  out << "</svg>\n";
  return out.str();
}

void write_svg(const std::filesystem::path& path, const SvgPlot& plot) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << render_svg(plot);
}

}  // namespace deepvo
