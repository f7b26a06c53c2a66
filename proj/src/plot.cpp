#include "physvox/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "physvox/errors.hpp"

namespace physvox::plot {

namespace {

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

}  // namespace

void write_svg(const std::string& path, const std::string& title, const std::string& xlabel,
               const std::string& ylabel, const std::vector<Series>& series, double vline_x) {
    const int w = 720, h = 480, ml = 70, mr = 20, mt = 40, mb = 55;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool first = true;
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size(); ++i) {
            if (first) {
                xmin = xmax = s.x[i];
                ymin = ymax = s.y[i];
                first = false;
            }
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
    auto py = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };

    std::ofstream os(path);
    if (!os) throw FormatError("cannot open for write: " + path);
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << w / 2 << "' y='22' text-anchor='middle' font-size='16'>" << title
       << "</text>\n";
    os << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr << "' y2='" << h - mb
       << "' stroke='black'/>\n";
    os << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << h - mb
       << "' stroke='black'/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double xv = xmin + (xmax - xmin) * i / 5.0;
        const double yv = ymin + (ymax - ymin) * i / 5.0;
        os << "<text x='" << px(xv) << "' y='" << h - mb + 18
           << "' text-anchor='middle' font-size='11'>" << std::round(xv * 100) / 100
           << "</text>\n";
        os << "<text x='" << ml - 8 << "' y='" << py(yv) + 4
           << "' text-anchor='end' font-size='11'>" << std::round(yv * 1000) / 1000
           << "</text>\n";
        os << "<line x1='" << ml << "' y1='" << py(yv) << "' x2='" << w - mr << "' y2='" << py(yv)
           << "' stroke='#dddddd'/>\n";
    }
    os << "<text x='" << (ml + w - mr) / 2 << "' y='" << h - 12
       << "' text-anchor='middle' font-size='13'>" << xlabel << "</text>\n";
    os << "<text x='18' y='" << (mt + h - mb) / 2
       << "' text-anchor='middle' font-size='13' transform='rotate(-90 18 " << (mt + h - mb) / 2
       << ")'>" << ylabel << "</text>\n";
    if (vline_x > 0) {
        os << "<line x1='" << px(vline_x) << "' y1='" << mt << "' x2='" << px(vline_x) << "' y2='"
           << h - mb << "' stroke='#888888' stroke-dasharray='5,4'/>\n";
    }
    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = kColors[si % 6];
        os << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
        for (size_t i = 0; i < s.x.size(); ++i) os << px(s.x[i]) << "," << py(s.y[i]) << " ";
        os << "'/>\n";
        os << "<text x='" << w - mr - 8 << "' y='" << mt + 18 * (si + 1)
           << "' text-anchor='end' font-size='12' fill='" << color << "'>" << s.label
           << "</text>\n";
    }
    os << "</svg>\n";
}

}  // namespace physvox::plot
