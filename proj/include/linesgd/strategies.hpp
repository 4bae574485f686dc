#pragma once
#include <string>
#include <vector>

#include "linesgd/analysis.hpp"
#include "linesgd/dataset.hpp"
#include "linesgd/linescan.hpp"
#include "linesgd/model.hpp"

namespace linesgd {

enum class StrategyKind { Sgd, Pal, Fbpal, ExactMinibatch, ExactFullbatch };
StrategyKind strategy_kind_from_string(const std::string& s);
std::string to_string(StrategyKind k);

struct StrategySpec {
    StrategyKind kind{StrategyKind::Sgd};
    double lr{0.0}; // sgd
    double mu{0.0}; // pal / fbpal
    std::string label;

    static StrategySpec sgd(double lr);
    static StrategySpec pal(double mu);
    static StrategySpec fbpal(double mu);
    static StrategySpec exact_minibatch();
    static StrategySpec exact_fullbatch();
    void validate() const;
};

struct StepResult {
    double s_upd{0.0};
    std::string flags; // semicolon-joined tokens, empty when clean
};

// Fixed-rate step length along the unit direction.
double step_sgd(double lr, double grad_norm);

// Vertex of the parabola matching loss l0 and slope dderiv at the origin plus
// loss l_mu at mu. Non-convex or flat data falls back to mu * |dderiv|.
StepResult step_pal(double l0, double dderiv, double l_mu, double mu);

// step_pal on a measured curve: l0 at s=0, l_mu at mu snapped to the grid
// (shifted to the nearest unmasked point if needed). The slope is
// exact_dderiv when finite, otherwise a centered finite difference.
StepResult step_pal_on_curve(const Curve& curve, const Grid& grid, double mu, double exact_dderiv);

// Measured argmin of a curve (boundary hits are flagged).
StepResult step_exact(const Curve& curve, Window window);

struct StrategyOutcome {
    int step{0};
    std::string strategy;
    double s_upd{0.0};
    double s_opt{0.0};
    double distance{0.0}; // s_opt - s_upd
    double improvement{0.0};
    std::string flags;
};

// One scanned line: the archived scan plus the state needed to re-evaluate
// full-batch losses at off-grid step sizes.
struct LineContext {
    LineScan scan;
    ParamVector origin;
    ParamVector direction;
};

// Scores every (line, strategy) pair on the fixed trajectory: the strategy
// only chooses the step size, never the line. Improvements use exact
// full-batch re-evaluation unless exact_improvement is false (grid
// interpolation, flagged).
std::vector<StrategyOutcome> evaluate_strategies(const Model& model, const Dataset& ds,
                                                 const std::vector<LineContext>& lines,
                                                 const std::vector<StrategySpec>& specs, Window window,
                                                 bool exact_improvement = true, int threads = 1);

struct StrategySeries {
    std::string label;
    std::vector<int> steps;
    std::vector<double> s_upd, s_opt, distance, improvement;
    std::vector<std::string> flags;
};

// Groups outcomes by strategy label, steps ascending, preserving spec order.
std::vector<StrategySeries> group_outcomes(const std::vector<StrategyOutcome>& rows);

// Cumulative sum treating non-finite entries as zero contribution.
std::vector<double> cumulative(const std::vector<double>& series);

} // namespace linesgd
