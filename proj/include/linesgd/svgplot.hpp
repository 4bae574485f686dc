#pragma once
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace linesgd {

// Minimal deterministic SVG charts: fixed palette, fixed geometry, %.6g
// coordinates, no timestamps, so identical inputs give identical bytes.

struct SvgSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y; // non-finite entries break the polyline
};

struct SvgChart {
    std::string title;
    std::string x_label;
    std::string y_label;
    int width{720};
    int height{420};
    std::vector<SvgSeries> series;
};

std::string render_line_chart(const SvgChart& chart);

// Column-major matrix rendered row 0 at the top, with a value-scale bar.
std::string render_heatmap(const std::string& title, const Eigen::MatrixXd& values, int width = 560, int height = 520);

} // namespace linesgd
