#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "linesgd/dataset.hpp"
#include "linesgd/linescan.hpp"
#include "linesgd/model.hpp"
#include "linesgd/strategies.hpp"

namespace linesgd {

// Exact per-sample slopes along a unit direction: out[i] = grad L(sample i) . d,
// one backward pass per sample. The mean over any index set equals that set's
// batch directional derivative.
std::vector<double> per_sample_dderiv(const Model& model, const ParamVector& params, const ParamVector& direction,
                                      const Dataset& ds, int threads = 1);

// Finite-difference slopes from a per-sample scan matrix (cross-check only).
std::vector<double> fd_dderiv_from_scan(const LineScan& scan);

enum class VirtualMode { Grow, Shrink };
std::string to_string(VirtualMode m);

struct VirtualBatch {
    int base_step{0};
    int target_size{0};
    VirtualMode mode{VirtualMode::Grow};
    std::vector<std::int64_t> members; // ascending
    std::uint64_t seed{0};
};

// Grow: seeded draws without replacement from the non-members. Shrink: drops
// the members with the highest signed slopes, keeping the steepest descent
// directions (with magnitude=true, keeps the largest |slope| instead; ties
// keep the lower sample index).
VirtualBatch virtual_batch(const std::vector<std::int64_t>& defining, int target_size, VirtualMode mode,
                           const std::vector<double>& dderivs, int n, std::uint64_t seed, bool magnitude = false);

// One trajectory line prepared for the batch-size study.
struct BatchStudyLine {
    LineContext line; // per-sample scan + origin + direction
    std::vector<double> dderivs;
};

struct RatioRow {
    int step{0};
    double factor{0.0};
    double base_dderiv{0.0};
    double scaled_dderiv{0.0};
    double ratio{0.0}; // |base| / |scaled|, NaN when masked
    double expected{0.0};
    bool masked{false};
};

// How many times shallower the slope becomes when the defining batch is grown
// (or shrunk) by each factor; the duality claim predicts ratio = factor.
std::vector<RatioRow> ratio_study(const std::vector<BatchStudyLine>& lines, const std::vector<double>& factors,
                                  std::uint64_t seed);

struct BatchSizeRow {
    int step{0};
    int size{0};
    std::string strategy;
    double s_upd{0.0};
    double improvement{0.0};
    std::string flags;
};

// SGD (fixed lr) and PAL improvements when the defining batch is virtually
// resized on the fixed trajectory. At the original size the recorded curve and
// slope are reused, reproducing the strategies-module rows exactly.
std::vector<BatchSizeRow> strategy_vs_batchsize(const Model& model, const Dataset& ds,
                                                const std::vector<BatchStudyLine>& lines,
                                                const std::vector<int>& sizes, double lr, double mu,
                                                std::uint64_t seed, int threads = 1);

} // namespace linesgd
