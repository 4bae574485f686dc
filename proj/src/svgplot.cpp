#include "linesgd/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "linesgd/errors.hpp"
#include "linesgd/io_util.hpp"

namespace linesgd {

namespace {

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
constexpr int kPaletteSize = 10;

constexpr int kMarginLeft = 62, kMarginRight = 16, kMarginTop = 34, kMarginBottom = 46;

std::string esc(const std::string& s) {
    std::string out;
    for (const char c : s) {
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
    double lo{0.0}, hi{1.0};
};

Range data_range(const std::vector<SvgSeries>& series, bool use_x) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const SvgSeries& s : series) {
        const std::vector<double>& v = use_x ? s.x : s.y;
        const std::vector<double>& other = use_x ? s.y : s.x;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!std::isfinite(v[i]) || !std::isfinite(other[i])) continue;
            lo = std::min(lo, v[i]);
            hi = std::max(hi, v[i]);
        }
    }
    if (!(lo <= hi)) return {0.0, 1.0};
    if (lo == hi) {
        const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
        return {lo - pad, hi + pad};
    }
    const double pad = (hi - lo) * 0.04;
    return {lo - pad, hi + pad};
}

double tick_step(const Range& r, int target) {
    const double raw = (r.hi - r.lo) / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double norm = raw / mag;
    if (norm < 1.5) return mag;
    if (norm < 3.5) return 2.0 * mag;
    if (norm < 7.5) return 5.0 * mag;
    return 10.0 * mag;
}

std::vector<double> ticks(const Range& r, int target) {
    const double step = tick_step(r, target);
    std::vector<double> out;
    for (double t = std::ceil(r.lo / step) * step; t <= r.hi + step * 1e-9; t += step) {
        if (std::abs(t) < step * 1e-9) t = 0.0; // avoid "-0"
        out.push_back(t);
    }
    return out;
}

// Five-stop blue-to-yellow scale.
std::string heat_color(double t) {
    static const int stops[5][3] = {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
    t = std::clamp(t, 0.0, 1.0);
    const double pos = t * 4.0;
    const int i = std::min(3, static_cast<int>(pos));
    const double f = pos - i;
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x",
                  static_cast<int>(std::lround(stops[i][0] + f * (stops[i + 1][0] - stops[i][0]))),
                  static_cast<int>(std::lround(stops[i][1] + f * (stops[i + 1][1] - stops[i][1]))),
                  static_cast<int>(std::lround(stops[i][2] + f * (stops[i + 1][2] - stops[i][2]))));
    return buf;
}

} // namespace

std::string render_line_chart(const SvgChart& chart) {
    if (chart.series.empty()) throw SpecError("chart has no series");
    for (const SvgSeries& s : chart.series)
        if (s.x.size() != s.y.size()) throw SpecError("series '" + s.label + "' has mismatched x/y lengths");

    const int pw = chart.width - kMarginLeft - kMarginRight;
    const int ph = chart.height - kMarginTop - kMarginBottom;
    const Range rx = data_range(chart.series, true);
    const Range ry = data_range(chart.series, false);
    auto X = [&](double v) { return kMarginLeft + (v - rx.lo) / (rx.hi - rx.lo) * pw; };
    auto Y = [&](double v) { return kMarginTop + ph - (v - ry.lo) / (ry.hi - ry.lo) * ph; };

    std::string svg;
    svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(chart.width) + "\" height=\"" +
           std::to_string(chart.height) + "\" viewBox=\"0 0 " + std::to_string(chart.width) + " " +
           std::to_string(chart.height) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + std::to_string(chart.width / 2) + "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
           esc(chart.title) + "</text>\n";

    for (const double t : ticks(rx, 6)) {
        const std::string x = fmt_double6(X(t));
        svg += "<line x1=\"" + x + "\" y1=\"" + std::to_string(kMarginTop) + "\" x2=\"" + x + "\" y2=\"" +
               std::to_string(kMarginTop + ph) + "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        svg += "<text x=\"" + x + "\" y=\"" + std::to_string(kMarginTop + ph + 16) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" + fmt_double6(t) + "</text>\n";
    }
    for (const double t : ticks(ry, 6)) {
        const std::string y = fmt_double6(Y(t));
        svg += "<line x1=\"" + std::to_string(kMarginLeft) + "\" y1=\"" + y + "\" x2=\"" +
               std::to_string(kMarginLeft + pw) + "\" y2=\"" + y + "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        svg += "<text x=\"" + std::to_string(kMarginLeft - 6) + "\" y=\"" + y +
               "\" text-anchor=\"end\" dominant-baseline=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" +
               fmt_double6(t) + "</text>\n";
    }
    svg += "<rect x=\"" + std::to_string(kMarginLeft) + "\" y=\"" + std::to_string(kMarginTop) + "\" width=\"" +
           std::to_string(pw) + "\" height=\"" + std::to_string(ph) + "\" fill=\"none\" stroke=\"#333333\"/>\n";
    svg += "<text x=\"" + std::to_string(kMarginLeft + pw / 2) + "\" y=\"" + std::to_string(chart.height - 8) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + esc(chart.x_label) + "</text>\n";
    svg += "<text x=\"14\" y=\"" + std::to_string(kMarginTop + ph / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" transform=\"rotate(-90 14 " +
           std::to_string(kMarginTop + ph / 2) + ")\">" + esc(chart.y_label) + "</text>\n";

    for (std::size_t si = 0; si < chart.series.size(); ++si) {
        const SvgSeries& s = chart.series[si];
        const char* color = kPalette[si % kPaletteSize];
        std::string points;
        auto flush = [&]() {
            if (points.empty()) return;
            svg += "<polyline points=\"" + points + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\"/>\n";
            points.clear();
        };
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
                flush();
                continue;
            }
            if (!points.empty()) points += ' ';
            points += fmt_double6(X(s.x[i])) + "," + fmt_double6(Y(s.y[i]));
        }
        flush();
        const int ly = kMarginTop + 14 + static_cast<int>(si) * 15;
        svg += "<line x1=\"" + std::to_string(kMarginLeft + pw - 120) + "\" y1=\"" + std::to_string(ly - 4) +
               "\" x2=\"" + std::to_string(kMarginLeft + pw - 102) + "\" y2=\"" + std::to_string(ly - 4) +
               "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
        svg += "<text x=\"" + std::to_string(kMarginLeft + pw - 98) + "\" y=\"" + std::to_string(ly) +
               "\" font-family=\"sans-serif\" font-size=\"10\">" + esc(s.label) + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

std::string render_heatmap(const std::string& title, const Eigen::MatrixXd& values, int width, int height) {
    if (values.rows() == 0 || values.cols() == 0) throw SpecError("heatmap of an empty matrix");

    double lo = std::numeric_limits<double>::infinity(), hi = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < values.rows(); ++i)
        for (Eigen::Index j = 0; j < values.cols(); ++j)
            if (std::isfinite(values(i, j))) {
                lo = std::min(lo, values(i, j));
                hi = std::max(hi, values(i, j));
            }
    if (!(lo <= hi)) {
        lo = 0.0;
        hi = 1.0;
    }
    if (lo == hi) hi = lo + 1.0;

    const int scale_w = 54;
    const int pw = width - kMarginLeft - kMarginRight - scale_w;
    const int ph = height - kMarginTop - kMarginBottom;
    const double cw = static_cast<double>(pw) / static_cast<double>(values.cols());
    const double ch = static_cast<double>(ph) / static_cast<double>(values.rows());

    std::string svg;
    svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
           std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) + " " + std::to_string(height) +
           "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + std::to_string(width / 2) + "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
           esc(title) + "</text>\n";

    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        for (Eigen::Index j = 0; j < values.cols(); ++j) {
            const double v = values(i, j);
            const std::string color = std::isfinite(v) ? heat_color((v - lo) / (hi - lo)) : std::string("#ffffff");
            svg += "<rect x=\"" + fmt_double6(kMarginLeft + j * cw) + "\" y=\"" + fmt_double6(kMarginTop + i * ch) +
                   "\" width=\"" + fmt_double6(cw + 0.5) + "\" height=\"" + fmt_double6(ch + 0.5) + "\" fill=\"" +
                   color + "\"/>\n";
        }
    }
    svg += "<rect x=\"" + std::to_string(kMarginLeft) + "\" y=\"" + std::to_string(kMarginTop) + "\" width=\"" +
           std::to_string(pw) + "\" height=\"" + std::to_string(ph) + "\" fill=\"none\" stroke=\"#333333\"/>\n";

    const int bar_x = kMarginLeft + pw + 14;
    const int bar_steps = 32;
    for (int i = 0; i < bar_steps; ++i) {
        const double t = 1.0 - static_cast<double>(i) / (bar_steps - 1);
        svg += "<rect x=\"" + std::to_string(bar_x) + "\" y=\"" +
               fmt_double6(kMarginTop + static_cast<double>(i) * ph / bar_steps) + "\" width=\"14\" height=\"" +
               fmt_double6(static_cast<double>(ph) / bar_steps + 0.5) + "\" fill=\"" + heat_color(t) + "\"/>\n";
    }
    svg += "<text x=\"" + std::to_string(bar_x + 18) + "\" y=\"" + std::to_string(kMarginTop + 8) +
           "\" font-family=\"sans-serif\" font-size=\"10\">" + fmt_double6(hi) + "</text>\n";
    svg += "<text x=\"" + std::to_string(bar_x + 18) + "\" y=\"" + std::to_string(kMarginTop + ph) +
           "\" font-family=\"sans-serif\" font-size=\"10\">" + fmt_double6(lo) + "</text>\n";
    svg += "</svg>\n";
    return svg;
}

} // namespace linesgd
