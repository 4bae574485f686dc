#pragma once
#include <cmath>
#include <vector>

#include "linesgd/errors.hpp"

namespace linesgd {

// Uniform step-size grid along a line. lo is snapped up to the smallest
// integer multiple of the resolution >= the requested lo, which puts s=0
// on-grid exactly for any interval straddling zero.
struct Grid {
    double lo{0.0}; // snapped
    double hi{0.0}; // as requested
    double resolution{0.0};
    std::vector<double> points;
    int zero_index{-1};

    int count() const { return static_cast<int>(points.size()); }
};

inline Grid make_grid(double lo, double hi, double resolution) {
    if (!(lo < 0.0) || !(hi > 0.0)) throw SpecError("grid interval must straddle zero (lo < 0 < hi)");
    if (!(resolution > 0.0)) throw SpecError("grid resolution must be positive");
    const long long m = static_cast<long long>(std::ceil(lo / resolution - 1e-9));
    Grid g;
    g.resolution = resolution;
    g.hi = hi;
    g.lo = static_cast<double>(m) * resolution;
    const int count = static_cast<int>(std::floor((hi - g.lo) / resolution + 1e-9)) + 1;
    if (count < 3) throw SpecError("grid degenerate: fewer than 3 points");
    g.points.resize(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) g.points[static_cast<std::size_t>(i)] = static_cast<double>(m + i) * resolution;
    g.zero_index = static_cast<int>(-m);
    return g;
}

// Nearest grid index for a step size, clamped to the grid.
inline int snap_index(const Grid& g, double s) {
    long long i = std::llround((s - g.lo) / g.resolution);
    if (i < 0) i = 0;
    if (i >= g.count()) i = g.count() - 1;
    return static_cast<int>(i);
}

} // namespace linesgd
