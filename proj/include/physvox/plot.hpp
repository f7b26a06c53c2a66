#pragma once

#include <string>
#include <vector>

namespace physvox::plot {

struct Series {
    std::string label;
    std::vector<double> x, y;
};

// Minimal SVG line chart: axes, ticks, legend, one polyline per series.
void write_svg(const std::string& path, const std::string& title, const std::string& xlabel,
               const std::string& ylabel, const std::vector<Series>& series,
               double vline_x = -1.0);

}  // namespace physvox::plot
