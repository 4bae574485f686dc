#pragma once
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "linesgd/grid.hpp"
#include "linesgd/linescan.hpp"

namespace linesgd {

// A loss curve over ascending step sizes. Masked entries are ignored by every
// statistic computed here.
struct Curve {
    std::vector<double> s;
    std::vector<double> loss;
    std::vector<std::uint8_t> mask; // 1 = ignore

    int count() const { return static_cast<int>(s.size()); }
};

// Non-finite losses are masked.
Curve make_curve(const Grid& grid, std::span<const double> losses);
Curve full_curve(const LineScan& scan);
Curve defining_curve(const LineScan& scan);

struct Window {
    double lo{0.0};
    double hi{0.0};
};

// Losses restricted to the window, shifted so the window minimum is zero.
Curve shift_to_zero(const Curve& curve, Window window);

// Mean |a - b| over jointly unmasked window points after min-shifting each
// curve. Symmetric, zero for identical shapes, invariant to vertical offsets.
double mae_distance(const Curve& a, const Curve& b, Window window);

struct DistanceMatrixResult {
    Eigen::MatrixXd matrix;          // symmetric, zero diagonal
    std::vector<double> consecutive; // matrix(i, i+1)
};
DistanceMatrixResult distance_matrix(const std::vector<Curve>& curves, Window window, int threads = 1);

struct PolyFit {
    int degree{2};
    double a{0.0}; // zero for degree 1
    double b{0.0};
    double c{0.0};
    double mae{0.0};
    double rmse{0.0}; // sqrt(mean squared residual)
    Window window;

    double eval(double s) const { return (a * s + b) * s + c; }
};

// Ordinary least squares of a*s^2 + b*s + c (or b*s + c) on the window.
PolyFit polyfit(const Curve& curve, int degree, Window window);

struct ArgminResult {
    double s_opt{0.0};
    bool boundary{false}; // argmin sits on the window edge; no refinement
};

// Grid argmin (ties -> smallest s) refined by the parabola through the argmin
// and its two neighbors when interior and locally convex. The result never
// leaves the bracketing cell.
ArgminResult argmin_refined(const Curve& curve, Window window);

// l(0) - l(s_upd). loss_at must evaluate the full-batch loss at a step size.
double improvement(double origin_loss, const std::function<double(double)>& loss_at, double s_upd);

// Linear interpolation between the nearest unmasked neighbors.
double interp_loss(const Curve& curve, double s);

// Centered mean with an odd kernel, truncated at the edges; length preserved.
// Non-finite entries are skipped inside each window.
std::vector<double> moving_average(const std::vector<double>& series, int k);

struct ProportionalitySeries {
    std::vector<double> s_opt;
    std::vector<double> grad_norm;
    std::vector<double> ratio; // s_opt / grad_norm, NaN where grad_norm ~ 0
    double c{0.0};             // least-squares constant through the origin
    double pearson{0.0};
    bool degenerate{false};
    std::string note;
};

ProportionalitySeries proportionality(const std::vector<double>& s_opt, const std::vector<double>& grad_norm);

} // namespace linesgd
