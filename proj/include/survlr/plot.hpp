#pragma once

// Minimal SVG step-curve plotter for Kaplan-Meier output.

#include <algorithm>
#include <array>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "survlr/survival.hpp"

namespace survlr {

inline std::string km_svg(const std::vector<std::optional<StepSurvivalCurve>>& curves,
                          const std::string& title = "Kaplan-Meier by cluster") {
  constexpr double width = 640, height = 420, left = 60, right = 20, top = 40, bottom = 50;
  constexpr std::array<const char*, 8> colors = {"#c0392b", "#2980b9", "#27ae60", "#8e44ad",
                                                 "#d35400", "#16a085", "#7f8c8d", "#2c3e50"};
  double t_max = 0.0;
  for (const auto& c : curves)
    if (c && !c->times.empty()) t_max = std::max(t_max, c->times.back());
  if (t_max <= 0.0) t_max = 1.0;
  const auto x = [&](double t) { return left + (width - left - right) * t / t_max; };
  const auto y = [&](double s) { return top + (height - top - bottom) * (1.0 - s); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\">" << title << "</text>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << y(0) << "\" x2=\"" << x(t_max) << "\" y2=\"" << y(0)
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << y(0) << "\" x2=\"" << left << "\" y2=\"" << y(1)
      << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double s = tick / 4.0;
    svg << "<text x=\"" << left - 8 << "\" y=\"" << y(s) + 4 << "\" text-anchor=\"end\">" << s << "</text>\n";
    const double t = t_max * tick / 4.0;
    svg << "<text x=\"" << x(t) << "\" y=\"" << y(0) + 18 << "\" text-anchor=\"middle\">" << t << "</text>\n";
  }
  for (std::size_t g = 0; g < curves.size(); ++g) {
    if (!curves[g]) continue;
    const auto& c = *curves[g];
    std::ostringstream path;
    path << "M " << x(0) << " " << y(1);
    double prev = 1.0;
    for (std::size_t j = 0; j < c.times.size(); ++j) {
      path << " L " << x(c.times[j]) << " " << y(prev) << " L " << x(c.times[j]) << " " << y(c.survival[j]);
      prev = c.survival[j];
    }
    const char* color = colors[g % colors.size()];
    svg << "<path d=\"" << path.str() << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
    svg << "<text x=\"" << width - right - 80 << "\" y=\"" << top + 16 * (g + 1) << "\" fill=\"" << color
        << "\">cluster " << g << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace survlr
