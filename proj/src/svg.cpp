#include "doawave/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace doawave {
namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string polar_spectrum_svg(const SpatialSpectrum& spectrum, const std::vector<double>& truth,
                               const std::vector<double>& estimate, const std::string& title) {
  constexpr double size = 360.0, cx = 180.0, cy = 195.0, radius = 150.0;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size + 30
    << "\" viewBox=\"0 0 " << size << " " << size + 30 << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << cx << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
    << escape(title) << "</text>\n";
  for (double r : {0.25, 0.5, 0.75, 1.0}) {
    o << "<circle cx=\"" << cx << "\" cy=\"" << cy << "\" r=\"" << fmt(r * radius)
      << "\" fill=\"none\" stroke=\"#ccc\"/>\n";
  }
  // 0 degrees points right, angles grow counter-clockwise.
  auto point = [&](double angle, double r) {
    return fmt(cx + r * radius * std::cos(angle)) + "," + fmt(cy - r * radius * std::sin(angle));
  };
  const auto& s = spectrum.scores;
  const double top = s.empty() ? 0.0 : *std::max_element(s.begin(), s.end());
  if (!s.empty()) {
    o << "<polygon fill=\"#9ecae1\" fill-opacity=\"0.5\" stroke=\"#3182bd\" points=\"";
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double r = top > 0.0 ? std::max(s[i], 0.0) / top : 0.0;
      o << (i ? " " : "") << point(spectrum.grid.classes[i], r);
    }
    o << "\"/>\n";
  }
  auto ray = [&](double angle, const char* style) {
    const std::string p = point(angle, 1.05);
    o << "<line x1=\"" << cx << "\" y1=\"" << cy << "\" x2=\"" << p.substr(0, p.find(',')) << "\" y2=\""
      << p.substr(p.find(',') + 1) << "\" " << style << " stroke-width=\"2\"/>\n";
  };
  for (double t : truth) ray(t, "stroke=\"#2ca02c\"");
  for (double e : estimate) ray(e, "stroke=\"#d62728\" stroke-dasharray=\"4,3\"");
  o << "</svg>\n";
  return o.str();
}

std::string mask_heatmap_svg(const TfMap& mask, const std::string& title) {
  const std::size_t frames = mask.num_frames(), bins = mask.num_bins();
  // At most 400 x 256 cells; larger masks are decimated by taking the max.
  const std::size_t tx = std::max<std::size_t>(1, (frames + 399) / 400);
  const std::size_t fx = std::max<std::size_t>(1, (bins + 255) / 256);
  const std::size_t w = (frames + tx - 1) / tx, h = (bins + fx - 1) / fx;
  constexpr double cell = 2.0, top = 30.0;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w * cell) << "\" height=\""
    << fmt(h * cell + top) << "\" shape-rendering=\"crispEdges\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"4\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">" << escape(title) << "</text>\n";
  for (std::size_t i = 0; i < w; ++i) {
    for (std::size_t j = 0; j < h; ++j) {
      double v = 0.0;
      for (std::size_t t = i * tx; t < std::min(frames, (i + 1) * tx); ++t) {
        for (std::size_t f = j * fx; f < std::min(bins, (j + 1) * fx); ++f) v = std::max(v, mask(t, f));
      }
      if (v <= 0.0) continue;
      const int level = 255 - static_cast<int>(std::lround(255.0 * std::min(v, 1.0)));
      o << "<rect x=\"" << fmt(i * cell) << "\" y=\"" << fmt(top + (h - 1 - j) * cell) << "\" width=\"" << cell
        << "\" height=\"" << cell << "\" fill=\"rgb(" << level << "," << level << "," << level << ")\"/>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace doawave
