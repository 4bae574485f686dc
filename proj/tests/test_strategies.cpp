#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "linesgd/errors.hpp"
#include "linesgd/strategies.hpp"

using namespace linesgd;

namespace {

// Samples of a*s^2 + b*s + c on the grid, no masking.
Curve parabola_curve(const Grid& grid, double a, double b, double c) {
    std::vector<double> losses(grid.points.size());
    for (std::size_t i = 0; i < losses.size(); ++i) {
        const double s = grid.points[i];
        losses[i] = (a * s + b) * s + c;
    }
    return make_curve(grid, losses);
}

// One line on the quadratic head: origin theta, direction -theta/|theta|,
// so the full-batch loss is exactly (|theta| - s)^2 with minimum at |theta|.
struct QuadLine {
    Dataset ds;
    std::unique_ptr<Model> model;
    ParamVector origin;
    StepRecord rec;
    LineScan scan;
};

QuadLine quad_line(int step) {
    QuadLine q;
    q.ds.features = Eigen::MatrixXd::Zero(4, 1);
    q.ds.labels = {0, 1, 0, 1};
    q.ds.class_count = 2;
    q.ds.refingerprint();

    ModelSpec spec;
    spec.kind = ModelKind::QuadraticHead;
    spec.layers = {3};
    q.model = make_model(spec);

    q.origin = ParamVector(3);
    q.origin << 0.3, -0.4, 0.12;
    const double norm = q.origin.norm();

    q.rec.step = step;
    q.rec.batch_indices = {0, 1};
    q.rec.direction = -q.origin / norm;
    q.rec.grad_norm = 2.0 * norm;
    q.rec.dir_deriv = -2.0 * norm;

    Grid grid = make_grid(-1.0, 1.0, 0.01);
    q.scan = scan_line(*q.model, q.origin, q.rec, grid, q.ds);
    return q;
}

}  // namespace

TEST_CASE("the fixed-rate step is lr times the gradient norm") {
    CHECK(step_sgd(0.1, 3.0) == 0.1 * 3.0);
    CHECK(step_sgd(0.5, 0.0) == 0.0);
    CHECK(step_sgd(2.0, 1.5) == 3.0);
    CHECK_THROWS_AS(step_sgd(0.1, -1.0), SpecError);
}

TEST_CASE("the parabolic step lands on the vertex of an exact parabola") {
    // l(s) = 2s^2 - 4s + 1: l(0) = 1, slope -4, l(0.5) = -0.5, vertex at 1.
    StepResult r = step_pal(1.0, -4.0, -0.5, 0.5);
    CHECK(r.s_upd == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(r.flags.empty());
}

TEST_CASE("the parabolic step recovers random convex vertices to 1e-9") {
    std::mt19937_64 gen(77);
    auto unif = [&](double lo, double hi) {
        return lo + (hi - lo) * (static_cast<double>(gen() >> 11) * 0x1.0p-53);
    };
    const double mus[] = {0.01, 0.1, 1.0};
    for (int trial = 0; trial < 200; ++trial) {
        const double a = unif(0.1, 10.0);
        const double b = unif(-5.0, -0.01);
        const double c = unif(-1.0, 1.0);
        const double mu = mus[trial % 3];
        const double l_mu = (a * mu + b) * mu + c;
        StepResult r = step_pal(c, b, l_mu, mu);
        const double vertex = -b / (2.0 * a);
        CHECK(std::abs(r.s_upd - vertex) <= 1e-9 * std::abs(vertex));
        CHECK(r.flags.empty());
    }
}

TEST_CASE("flat and concave curvature fall back to mu times the slope magnitude") {
    // linear loss l(s) = -s: zero measured curvature
    StepResult flat = step_pal(0.0, -1.0, -0.25, 0.25);
    CHECK(flat.s_upd == 0.25);
    CHECK(flat.flags == "degenerate_curvature");

    // l(s) = -s^2 - s: negative curvature, no minimum
    StepResult concave = step_pal(0.0, -1.0, -0.75, 0.5);
    CHECK(concave.s_upd == 0.5);
    CHECK(concave.flags == "nonconvex");

    CHECK_THROWS_AS(step_pal(0.0, -1.0, 1.0, 0.0), SpecError);
    CHECK_THROWS_AS(step_pal(std::nan(""), -1.0, 1.0, 0.1), SpecError);
}

TEST_CASE("the measured-curve parabolic step snaps mu to the grid") {
    Grid grid = make_grid(-0.5, 1.5, 0.01);
    Curve curve = parabola_curve(grid, 2.0, -4.0, 1.0);

    SUBCASE("with the exact slope") {
        StepResult r = step_pal_on_curve(curve, grid, 0.5, -4.0);
        CHECK(r.s_upd == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(r.flags.empty());
    }
    SUBCASE("with a finite-difference slope") {
        StepResult r = step_pal_on_curve(curve, grid, 0.5, std::numeric_limits<double>::quiet_NaN());
        CHECK(r.s_upd == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("a masked mu point shifts to the nearest unmasked one") {
        const int mu_index = grid.zero_index + 50;
        curve.mask[static_cast<std::size_t>(mu_index)] = 1;
        StepResult r = step_pal_on_curve(curve, grid, 0.5, -4.0);
        CHECK(r.flags.find("mu_shifted") != std::string::npos);
        CHECK(r.s_upd == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("mu beyond the grid clamps to the last point") {
        StepResult r = step_pal_on_curve(curve, grid, 10.0, -4.0);
        CHECK(r.flags.find("mu_clamped") != std::string::npos);
        CHECK(r.s_upd == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("the measured argmin step refines the vertex and flags boundaries") {
    Grid grid = make_grid(-1.0, 1.0, 1.0);
    Curve vee = make_curve(grid, std::vector<double>{1.0, 0.0, 1.0});
    StepResult r = step_exact(vee, Window{-1.0, 1.0});
    CHECK(r.s_upd == 0.0);
    CHECK(r.flags.empty());

    Curve slope = make_curve(grid, std::vector<double>{2.0, 1.0, 0.0});
    StepResult edge = step_exact(slope, Window{-1.0, 1.0});
    CHECK(edge.s_upd == 1.0);
    CHECK(edge.flags == "boundary");
}

TEST_CASE("strategy labels carry their tuning constant") {
    CHECK(StrategySpec::sgd(0.05).label == "sgd_lr_0.05");
    CHECK(StrategySpec::pal(0.1).label == "pal_mu_0.1");
    CHECK(StrategySpec::fbpal(1.0).label == "fbpal_mu_1");
    CHECK(StrategySpec::exact_minibatch().label == "exact_minibatch");
    CHECK(StrategySpec::exact_fullbatch().label == "exact_fullbatch");
    CHECK_THROWS_AS(StrategySpec::sgd(0.0).validate(), SpecError);
    CHECK_THROWS_AS(StrategySpec::pal(-1.0).validate(), SpecError);
    CHECK_THROWS_AS(strategy_kind_from_string("newton"), SpecError);
}

TEST_CASE("every strategy finds the minimum of an exact quadratic line") {
    QuadLine q = quad_line(0);
    const double norm = q.origin.norm();

    std::vector<LineContext> lines;
    lines.push_back({q.scan, q.origin, q.rec.direction});
    std::vector<StrategySpec> specs = {StrategySpec::sgd(0.5), StrategySpec::pal(0.1), StrategySpec::fbpal(0.1),
                                       StrategySpec::exact_minibatch(), StrategySpec::exact_fullbatch()};
    Window window{-1.0, 1.0};
    auto rows = evaluate_strategies(*q.model, q.ds, lines, specs, window);
    REQUIRE(rows.size() == specs.size());

    for (const StrategyOutcome& out : rows) {
        INFO(out.strategy);
        CHECK(out.step == 0);
        CHECK(out.s_opt == doctest::Approx(norm).epsilon(1e-10));
        // lr = 0.5 with gradient 2*theta makes the fixed step land exactly on
        // the vertex, and the parabolic fits are exact, so every distance ~ 0.
        CHECK(std::abs(out.distance) <= 1e-9);
        CHECK(out.distance == out.s_opt - out.s_upd);
        CHECK(out.improvement == doctest::Approx(norm * norm).epsilon(1e-9));
        CHECK(out.flags.empty());
    }
}

TEST_CASE("outcomes group by strategy with ascending steps") {
    QuadLine a = quad_line(30);
    QuadLine b = quad_line(10);
    std::vector<LineContext> lines;
    lines.push_back({a.scan, a.origin, a.rec.direction});
    lines.push_back({b.scan, b.origin, b.rec.direction});
    std::vector<StrategySpec> specs = {StrategySpec::sgd(0.5), StrategySpec::exact_fullbatch()};
    auto rows = evaluate_strategies(*a.model, a.ds, lines, specs, Window{-1.0, 1.0});
    REQUIRE(rows.size() == 4);

    auto series = group_outcomes(rows);
    REQUIRE(series.size() == 2);
    CHECK(series[0].label == "sgd_lr_0.5");
    CHECK(series[1].label == "exact_fullbatch");
    for (const StrategySeries& s : series) {
        REQUIRE(s.steps.size() == 2);
        CHECK(s.steps[0] == 10);
        CHECK(s.steps[1] == 30);
    }
}

TEST_CASE("threading does not change strategy outcomes") {
    QuadLine a = quad_line(0);
    QuadLine b = quad_line(5);
    std::vector<LineContext> lines;
    lines.push_back({a.scan, a.origin, a.rec.direction});
    lines.push_back({b.scan, b.origin, b.rec.direction});
    std::vector<StrategySpec> specs = {StrategySpec::sgd(0.3), StrategySpec::pal(0.2),
                                       StrategySpec::exact_fullbatch()};
    auto one = evaluate_strategies(*a.model, a.ds, lines, specs, Window{-1.0, 1.0}, true, 1);
    auto four = evaluate_strategies(*a.model, a.ds, lines, specs, Window{-1.0, 1.0}, true, 4);
    REQUIRE(one.size() == four.size());
    for (std::size_t i = 0; i < one.size(); ++i) {
        CHECK(one[i].s_upd == four[i].s_upd);
        CHECK(one[i].s_opt == four[i].s_opt);
        CHECK(one[i].improvement == four[i].improvement);
        CHECK(one[i].flags == four[i].flags);
    }
}

TEST_CASE("interpolated improvements are flagged") {
    QuadLine q = quad_line(0);
    std::vector<LineContext> lines;
    lines.push_back({q.scan, q.origin, q.rec.direction});
    std::vector<StrategySpec> specs = {StrategySpec::exact_fullbatch()};
    auto rows = evaluate_strategies(*q.model, q.ds, lines, specs, Window{-1.0, 1.0}, /*exact_improvement=*/false);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].flags.find("interp") != std::string::npos);
    const double norm = q.origin.norm();
    CHECK(rows[0].improvement == doctest::Approx(norm * norm).epsilon(1e-3));
}

TEST_CASE("empty inputs are rejected") {
    QuadLine q = quad_line(0);
    std::vector<LineContext> lines;
    lines.push_back({q.scan, q.origin, q.rec.direction});
    CHECK_THROWS_AS(evaluate_strategies(*q.model, q.ds, {}, {StrategySpec::sgd(0.1)}, Window{-1.0, 1.0}), SpecError);
    CHECK_THROWS_AS(evaluate_strategies(*q.model, q.ds, lines, {}, Window{-1.0, 1.0}), SpecError);
}

TEST_CASE("cumulative sums skip non-finite entries") {
    std::vector<double> series = {1.0, std::nan(""), 2.0};
    auto c = cumulative(series);
    REQUIRE(c.size() == 3);
    CHECK(c[0] == 1.0);
    CHECK(c[1] == 1.0);
    CHECK(c[2] == 3.0);
    CHECK(cumulative({}).empty());
}
