#include <doctest.h>

#include <cmath>

#include "linesgd/errors.hpp"
#include "linesgd/grid.hpp"

using namespace linesgd;

TEST_CASE("the default scan grid has 167 points with s = 0 on-grid") {
    Grid g = make_grid(-0.5, 0.5, 0.006);
    CHECK(g.count() == 167);
    CHECK(g.points[g.zero_index] == 0.0);
    CHECK(g.points.front() >= -0.5);
    CHECK(g.points.back() <= 0.5);
    // uniform spacing to the last bit: every point is an exact multiple
    for (int i = 0; i < g.count(); ++i) {
        CHECK(g.points[i] == (i - g.zero_index) * 0.006);
    }
}

TEST_CASE("a narrower window grid has 67 points") {
    Grid g = make_grid(-0.2, 0.2, 0.006);
    CHECK(g.count() == 67);
    CHECK(g.points[g.zero_index] == 0.0);
}

TEST_CASE("a unit grid enumerates -1, 0, 1") {
    Grid g = make_grid(-1.0, 1.0, 1.0);
    REQUIRE(g.count() == 3);
    CHECK(g.points[0] == -1.0);
    CHECK(g.points[1] == 0.0);
    CHECK(g.points[2] == 1.0);
    CHECK(g.zero_index == 1);
}

TEST_CASE("degenerate grids are rejected") {
    CHECK_THROWS_AS(make_grid(-0.001, 0.001, 0.006), SpecError);
    CHECK_THROWS_AS(make_grid(0.1, 0.5, 0.006), SpecError);
    CHECK_THROWS_AS(make_grid(-0.5, 0.5, 0.0), SpecError);
}

TEST_CASE("snap_index picks the nearest grid point and clamps") {
    Grid g = make_grid(-0.5, 0.5, 0.006);
    CHECK(snap_index(g, 0.0) == g.zero_index);
    CHECK(snap_index(g, 0.0061) == g.zero_index + 1);
    CHECK(snap_index(g, 0.0029) == g.zero_index);  // rounds to 0, not 0.006
    CHECK(snap_index(g, 99.0) == g.count() - 1);
    CHECK(snap_index(g, -99.0) == 0);
}
