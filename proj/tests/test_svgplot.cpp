#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "linesgd/errors.hpp"
#include "linesgd/svgplot.hpp"

using namespace linesgd;

namespace {

SvgChart small_chart() {
    SvgChart chart;
    chart.title = "losses";
    chart.x_label = "step size";
    chart.y_label = "loss";
    SvgSeries s;
    s.label = "full";
    s.x = {0.0, 1.0, 2.0, 3.0};
    s.y = {1.0, 0.5, 0.25, 0.125};
    chart.series.push_back(s);
    return chart;
}

}  // namespace

TEST_CASE("identical chart inputs render identical bytes") {
    const std::string a = render_line_chart(small_chart());
    const std::string b = render_line_chart(small_chart());
    CHECK(a == b);
    CHECK(a.find("<svg") != std::string::npos);
    CHECK(a.rfind("</svg>") != std::string::npos);
    CHECK(a.find("losses") != std::string::npos);
    CHECK(a.find("step size") != std::string::npos);
    // nothing time- or environment-dependent sneaks in
    CHECK(a.find("date") == std::string::npos);
}

TEST_CASE("rendering matches the frozen reference bytes") {
#ifdef LINESGD_FIXTURES
    std::ifstream frozen(std::string(LINESGD_FIXTURES) + "/golden_line_chart.svg", std::ios::binary);
    REQUIRE(frozen.good());
    std::stringstream buf;
    buf << frozen.rdbuf();
    CHECK(render_line_chart(small_chart()) == buf.str());
#endif
}

TEST_CASE("different data renders different bytes") {
    SvgChart chart = small_chart();
    const std::string a = render_line_chart(chart);
    chart.series[0].y[2] = 0.26;
    CHECK(render_line_chart(chart) != a);
}

TEST_CASE("non-finite points break the polyline into segments") {
    SvgChart chart = small_chart();
    const std::string whole = render_line_chart(chart);
    chart.series[0].y[1] = std::nan("");
    const std::string broken = render_line_chart(chart);
    CHECK(broken != whole);

    auto count = [](const std::string& text, const std::string& needle) {
        int n = 0;
        for (std::size_t at = text.find(needle); at != std::string::npos; at = text.find(needle, at + 1)) ++n;
        return n;
    };
    // one series, one gap -> more polyline elements than the unbroken chart
    CHECK(count(broken, "<polyline") > count(whole, "<polyline"));
}

TEST_CASE("labels are XML-escaped") {
    SvgChart chart = small_chart();
    chart.title = "a<b & \"c\"";
    const std::string svg = render_line_chart(chart);
    CHECK(svg.find("a<b &") == std::string::npos);
    CHECK(svg.find("&lt;") != std::string::npos);
    CHECK(svg.find("&amp;") != std::string::npos);
}

TEST_CASE("series lengths must agree") {
    SvgChart chart = small_chart();
    chart.series[0].y.pop_back();
    CHECK_THROWS_AS(render_line_chart(chart), SpecError);
}

TEST_CASE("heatmaps render deterministically with a value scale") {
    Eigen::MatrixXd m(3, 3);
    m << 0, 1, 2, 1, 0, 1, 2, 1, 0;
    const std::string a = render_heatmap("pairwise distance", m);
    CHECK(a == render_heatmap("pairwise distance", m));
    CHECK(a.find("<svg") != std::string::npos);
    CHECK(a.find("pairwise distance") != std::string::npos);
    CHECK(a.find("<rect") != std::string::npos);

    Eigen::MatrixXd other = m;
    other(0, 2) = 5.0;
    CHECK(render_heatmap("pairwise distance", other) != a);

    Eigen::MatrixXd empty;
    CHECK_THROWS_AS(render_heatmap("empty", empty), SpecError);
}
