#include "linesgd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "linesgd/parallel.hpp"

namespace linesgd {

namespace {

constexpr double kWindowTol = 1e-12;

bool in_window(double s, Window w) { return s >= w.lo - kWindowTol && s <= w.hi + kWindowTol; }

void check_window(Window w) {
    if (!(w.lo < w.hi)) throw SpecError("window lo must be below hi");
}

void check_same_grid(const Curve& a, const Curve& b) {
    if (a.s.size() != b.s.size()) throw SpecError("curves have different grids (length mismatch)");
    for (std::size_t i = 0; i < a.s.size(); ++i)
        if (a.s[i] != b.s[i]) throw SpecError("curves have different grids (point mismatch)");
}

} // namespace

Curve make_curve(const Grid& grid, std::span<const double> losses) {
    if (static_cast<int>(losses.size()) != grid.count())
        throw SpecError("curve length does not match the grid");
    Curve c;
    c.s = grid.points;
    c.loss.assign(losses.begin(), losses.end());
    c.mask.resize(losses.size());
    for (std::size_t i = 0; i < losses.size(); ++i) c.mask[i] = std::isfinite(losses[i]) ? 0 : 1;
    return c;
}

Curve full_curve(const LineScan& scan) {
    Curve c = make_curve(scan.grid, scan.full);
    for (std::size_t i = 0; i < c.mask.size(); ++i) c.mask[i] = std::max(c.mask[i], scan.full_mask[i]);
    return c;
}

Curve defining_curve(const LineScan& scan) { return make_curve(scan.grid, scan.defining); }

Curve shift_to_zero(const Curve& curve, Window window) {
    check_window(window);
    Curve out;
    double min_loss = std::numeric_limits<double>::infinity();
    int unmasked = 0;
    for (int i = 0; i < curve.count(); ++i) {
        if (!in_window(curve.s[static_cast<std::size_t>(i)], window)) continue;
        out.s.push_back(curve.s[static_cast<std::size_t>(i)]);
        out.loss.push_back(curve.loss[static_cast<std::size_t>(i)]);
        out.mask.push_back(curve.mask[static_cast<std::size_t>(i)]);
        if (!curve.mask[static_cast<std::size_t>(i)]) {
            ++unmasked;
            min_loss = std::min(min_loss, curve.loss[static_cast<std::size_t>(i)]);
        }
    }
    if (unmasked < 3) throw SpecError("window contains fewer than 3 unmasked curve points");
    for (std::size_t i = 0; i < out.loss.size(); ++i)
        if (!out.mask[i]) out.loss[i] -= min_loss;
    return out;
}

double mae_distance(const Curve& a, const Curve& b, Window window) {
    check_same_grid(a, b);
    const Curve sa = shift_to_zero(a, window);
    const Curve sb = shift_to_zero(b, window);
    double sum = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < sa.loss.size(); ++i) {
        if (sa.mask[i] || sb.mask[i]) continue;
        sum += std::abs(sa.loss[i] - sb.loss[i]);
        ++n;
    }
    if (n == 0) throw SpecError("no jointly unmasked points in the window");
    return sum / static_cast<double>(n);
}

DistanceMatrixResult distance_matrix(const std::vector<Curve>& curves, Window window, int threads) {
    if (curves.empty()) throw SpecError("distance matrix of an empty curve set");
    for (std::size_t i = 1; i < curves.size(); ++i) check_same_grid(curves[0], curves[i]);

    const int n = static_cast<int>(curves.size());
    std::vector<Curve> shifted(curves.size());
    run_workers(threads, n, [&](int i) { shifted[static_cast<std::size_t>(i)] = shift_to_zero(curves[static_cast<std::size_t>(i)], window); });

    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) pairs.push_back({i, j});

    DistanceMatrixResult res;
    res.matrix = Eigen::MatrixXd::Zero(n, n);
    run_workers(threads, static_cast<int>(pairs.size()), [&](int p) {
        const auto [i, j] = pairs[static_cast<std::size_t>(p)];
        const Curve& a = shifted[static_cast<std::size_t>(i)];
        const Curve& b = shifted[static_cast<std::size_t>(j)];
        double sum = 0.0;
        int m = 0;
        for (std::size_t q = 0; q < a.loss.size(); ++q) {
            if (a.mask[q] || b.mask[q]) continue;
            sum += std::abs(a.loss[q] - b.loss[q]);
            ++m;
        }
        if (m == 0) throw SpecError("no jointly unmasked points in the window");
        res.matrix(i, j) = sum / static_cast<double>(m);
    });
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) res.matrix(j, i) = res.matrix(i, j);
    for (int i = 0; i + 1 < n; ++i) res.consecutive.push_back(res.matrix(i, i + 1));
    return res;
}

PolyFit polyfit(const Curve& curve, int degree, Window window) {
    check_window(window);
    if (degree != 1 && degree != 2) throw SpecError("fit degree must be 1 or 2");

    std::vector<double> xs, ys;
    for (int i = 0; i < curve.count(); ++i) {
        if (curve.mask[static_cast<std::size_t>(i)] || !in_window(curve.s[static_cast<std::size_t>(i)], window)) continue;
        xs.push_back(curve.s[static_cast<std::size_t>(i)]);
        ys.push_back(curve.loss[static_cast<std::size_t>(i)]);
    }
    const int n = static_cast<int>(xs.size());
    const int cols = degree + 1;
    if (n < cols) throw SpecError("fewer unmasked points than fit coefficients");

    Eigen::MatrixXd X(n, cols);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = xs[static_cast<std::size_t>(i)];
        if (degree == 2) X(i, 2) = xs[static_cast<std::size_t>(i)] * xs[static_cast<std::size_t>(i)];
        y[i] = ys[static_cast<std::size_t>(i)];
    }
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < cols) throw NumericError("rank-deficient fit (coincident step sizes)");
    const Eigen::VectorXd beta = qr.solve(y);

    PolyFit fit;
    fit.degree = degree;
    fit.window = window;
    fit.c = beta[0];
    fit.b = beta[1];
    fit.a = degree == 2 ? beta[2] : 0.0;
    double abs_sum = 0.0, sq_sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double r = fit.eval(xs[static_cast<std::size_t>(i)]) - ys[static_cast<std::size_t>(i)];
        abs_sum += std::abs(r);
        sq_sum += r * r;
    }
    fit.mae = abs_sum / n;
    fit.rmse = std::sqrt(sq_sum / n);
    return fit;
}

ArgminResult argmin_refined(const Curve& curve, Window window) {
    check_window(window);
    std::vector<double> xs, ys;
    for (int i = 0; i < curve.count(); ++i) {
        if (curve.mask[static_cast<std::size_t>(i)] || !in_window(curve.s[static_cast<std::size_t>(i)], window)) continue;
        xs.push_back(curve.s[static_cast<std::size_t>(i)]);
        ys.push_back(curve.loss[static_cast<std::size_t>(i)]);
    }
    const int n = static_cast<int>(xs.size());
    if (n < 3) throw SpecError("window contains fewer than 3 unmasked curve points");

    int k = 0;
    for (int i = 1; i < n; ++i)
        if (ys[static_cast<std::size_t>(i)] < ys[static_cast<std::size_t>(k)]) k = i;

    if (k == 0 || k == n - 1) return {xs[static_cast<std::size_t>(k)], true};

    const double sl = xs[static_cast<std::size_t>(k - 1)], s0 = xs[static_cast<std::size_t>(k)],
                 sr = xs[static_cast<std::size_t>(k + 1)];
    const double yl = ys[static_cast<std::size_t>(k - 1)], y0 = ys[static_cast<std::size_t>(k)],
                 yr = ys[static_cast<std::size_t>(k + 1)];
    // Vertex of the parabola through the three bracketing points; den < 0
    // exactly when that parabola is convex.
    const double dl = s0 - sl, dr = sr - s0;
    const double num = dl * dl * (y0 - yr) - dr * dr * (y0 - yl);
    const double den = dl * (y0 - yr) + dr * (y0 - yl);
    ArgminResult res{s0, false};
    if (den < 0.0) { // locally convex (middle point lowest)
        double vertex = s0 - 0.5 * num / den;
        const double h = std::min(dl, dr);
        vertex = std::clamp(vertex, s0 - h, s0 + h);
        vertex = std::clamp(vertex, sl, sr);
        res.s_opt = vertex;
    }
    return res;
}

double improvement(double origin_loss, const std::function<double(double)>& loss_at, double s_upd) {
    if (s_upd == 0.0) return 0.0;
    return origin_loss - loss_at(s_upd);
}

double interp_loss(const Curve& curve, double s) {
    std::vector<double> xs, ys;
    for (int i = 0; i < curve.count(); ++i) {
        if (curve.mask[static_cast<std::size_t>(i)]) continue;
        xs.push_back(curve.s[static_cast<std::size_t>(i)]);
        ys.push_back(curve.loss[static_cast<std::size_t>(i)]);
    }
    if (xs.size() < 2) throw SpecError("too few unmasked points to interpolate");
    if (s < xs.front() - kWindowTol || s > xs.back() + kWindowTol)
        throw SpecError("step size " + std::to_string(s) + " outside the scanned interval [" +
                        std::to_string(xs.front()) + ", " + std::to_string(xs.back()) + "]");
    const auto it = std::upper_bound(xs.begin(), xs.end(), s);
    std::size_t hi = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - xs.begin(), static_cast<std::ptrdiff_t>(xs.size()) - 1));
    if (hi == 0) hi = 1;
    const std::size_t lo = hi - 1;
    const double t = (s - xs[lo]) / (xs[hi] - xs[lo]);
    return ys[lo] + t * (ys[hi] - ys[lo]);
}

std::vector<double> moving_average(const std::vector<double>& series, int k) {
    if (k < 1 || k % 2 == 0) throw SpecError("smoothing kernel size must be odd and positive");
    const int n = static_cast<int>(series.size());
    std::vector<double> out(series.size());
    const int h = k / 2;
    for (int i = 0; i < n; ++i) {
        double sum = 0.0;
        int m = 0;
        for (int j = std::max(0, i - h); j <= std::min(n - 1, i + h); ++j) {
            if (!std::isfinite(series[static_cast<std::size_t>(j)])) continue;
            sum += series[static_cast<std::size_t>(j)];
            ++m;
        }
        out[static_cast<std::size_t>(i)] = m > 0 ? sum / m : std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

ProportionalitySeries proportionality(const std::vector<double>& s_opt, const std::vector<double>& grad_norm) {
    if (s_opt.size() != grad_norm.size()) throw SpecError("proportionality series length mismatch");

    ProportionalitySeries out;
    out.s_opt = s_opt;
    out.grad_norm = grad_norm;
    out.ratio.resize(s_opt.size());
    std::vector<double> xs, ys; // (grad_norm, s_opt) pairs used for the statistics
    for (std::size_t i = 0; i < s_opt.size(); ++i) {
        const bool valid = std::isfinite(s_opt[i]) && std::isfinite(grad_norm[i]);
        out.ratio[i] = valid && grad_norm[i] > 1e-15 ? s_opt[i] / grad_norm[i]
                                                     : std::numeric_limits<double>::quiet_NaN();
        if (valid) {
            xs.push_back(grad_norm[i]);
            ys.push_back(s_opt[i]);
        }
    }
    if (xs.size() < 3) {
        out.degenerate = true;
        out.note = "fewer than 3 valid pairs";
        out.c = std::numeric_limits<double>::quiet_NaN();
        out.pearson = std::numeric_limits<double>::quiet_NaN();
        return out;
    }

    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += ys[i] * xs[i];
        sxx += xs[i] * xs[i];
    }
    if (sxx < 1e-300) {
        out.degenerate = true;
        out.note = "all gradient norms ~ 0";
        out.c = std::numeric_limits<double>::quiet_NaN();
        out.pearson = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    out.c = sxy / sxx;

    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double cov = 0.0, vx = 0.0, vy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        cov += (xs[i] - mx) * (ys[i] - my);
        vx += (xs[i] - mx) * (xs[i] - mx);
        vy += (ys[i] - my) * (ys[i] - my);
    }
    if (vx <= 0.0 || vy <= 0.0) {
        out.degenerate = true;
        out.note = vx <= 0.0 ? "gradient-norm series is constant" : "s_opt series is constant";
        out.pearson = std::numeric_limits<double>::quiet_NaN();
    } else {
        out.pearson = cov / std::sqrt(vx * vy);
    }
    return out;
}

} // namespace linesgd
