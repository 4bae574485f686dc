#include "linesgd/batchsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "linesgd/parallel.hpp"
#include "linesgd/rng.hpp"

namespace linesgd {

std::vector<double> per_sample_dderiv(const Model& model, const ParamVector& params, const ParamVector& direction,
                                      const Dataset& ds, int threads) {
    if (direction.size() != params.size()) throw SpecError("direction length does not match parameters");
    if (std::abs(direction.norm() - 1.0) > 1e-9) throw SpecError("direction is not unit length");

    std::vector<double> out(static_cast<std::size_t>(ds.n()));
    run_workers(threads, ds.n(), [&](int i) {
        const std::int64_t idx = i;
        const SampleBatch b = ds.gather(std::span<const std::int64_t>(&idx, 1));
        const LossGrad lg = batch_loss_and_grad(model, params, b);
        out[static_cast<std::size_t>(i)] = lg.grad.dot(direction);
    });
    return out;
}

std::vector<double> fd_dderiv_from_scan(const LineScan& scan) {
    if (!scan.has_per_sample()) throw CapabilityError("scan has no per-sample matrix");
    const int zero = scan.grid.zero_index;
    if (zero < 1 || zero + 1 >= scan.grid.count())
        throw SpecError("grid too small for a centered difference at s=0");
    const double h2 = scan.grid.points[static_cast<std::size_t>(zero + 1)] -
                      scan.grid.points[static_cast<std::size_t>(zero - 1)];
    std::vector<double> out(static_cast<std::size_t>(scan.per_sample.rows()));
    for (Eigen::Index r = 0; r < scan.per_sample.rows(); ++r)
        out[static_cast<std::size_t>(r)] = (scan.per_sample(r, zero + 1) - scan.per_sample(r, zero - 1)) / h2;
    return out;
}

std::string to_string(VirtualMode m) { return m == VirtualMode::Grow ? "grow" : "shrink"; }

VirtualBatch virtual_batch(const std::vector<std::int64_t>& defining, int target_size, VirtualMode mode,
                           const std::vector<double>& dderivs, int n, std::uint64_t seed, bool magnitude) {
    const int base = static_cast<int>(defining.size());
    if (base == 0) throw SpecError("empty defining batch");
    if (static_cast<int>(dderivs.size()) != n) throw SpecError("per-sample slope array does not match the dataset");

    VirtualBatch vb;
    vb.target_size = target_size;
    vb.mode = mode;
    vb.seed = seed;

    if (mode == VirtualMode::Grow) {
        if (target_size < base || target_size > n)
            throw SpecError("grow target must be in [defining size, dataset size]");
        vb.members = defining;
        if (target_size > base) {
            std::vector<std::uint8_t> member(static_cast<std::size_t>(n), 0);
            for (const std::int64_t i : defining) member[static_cast<std::size_t>(i)] = 1;
            std::vector<std::int64_t> pool;
            pool.reserve(static_cast<std::size_t>(n - base));
            for (int i = 0; i < n; ++i)
                if (!member[static_cast<std::size_t>(i)]) pool.push_back(i);
            Rng rng(splitmix64(seed));
            rng.shuffle(pool);
            vb.members.insert(vb.members.end(), pool.begin(), pool.begin() + (target_size - base));
        }
    } else {
        if (target_size < 1 || target_size > base) throw SpecError("shrink target must be in [1, defining size]");
        std::vector<std::int64_t> order = defining;
        std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
            const double da = dderivs[static_cast<std::size_t>(a)], db = dderivs[static_cast<std::size_t>(b)];
            const double ka = magnitude ? -std::abs(da) : da;
            const double kb = magnitude ? -std::abs(db) : db;
            if (ka != kb) return ka < kb;
            return a < b;
        });
        vb.members.assign(order.begin(), order.begin() + target_size);
    }
    std::sort(vb.members.begin(), vb.members.end());
    return vb;
}

namespace {

double subset_mean(const std::vector<double>& values, const std::vector<std::int64_t>& indices) {
    double sum = 0.0;
    for (const std::int64_t i : indices) sum += values[static_cast<std::size_t>(i)];
    return sum / static_cast<double>(indices.size());
}

std::uint64_t study_seed(std::uint64_t seed, int step, std::size_t slot) {
    return splitmix64(splitmix64(seed ^ static_cast<std::uint64_t>(step)) + slot);
}

} // namespace

std::vector<RatioRow> ratio_study(const std::vector<BatchStudyLine>& lines, const std::vector<double>& factors,
                                  std::uint64_t seed) {
    if (lines.empty()) throw SpecError("no lines for the ratio study");
    if (factors.empty()) throw SpecError("no factors for the ratio study");

    std::vector<RatioRow> rows;
    for (const BatchStudyLine& line : lines) {
        const std::vector<std::int64_t>& defining = line.line.scan.direction.batch_indices;
        const int n = static_cast<int>(line.dderivs.size());
        const int base_size = static_cast<int>(defining.size());
        const double base = subset_mean(line.dderivs, defining);
        for (std::size_t fi = 0; fi < factors.size(); ++fi) {
            const double f = factors[fi];
            RatioRow row;
            row.step = line.line.scan.direction.step;
            row.factor = f;
            row.base_dderiv = base;
            row.expected = f;
            const long long target = std::llround(f * base_size);
            if (!(f > 0.0) || target < 1 || target > n) {
                row.masked = true;
                row.scaled_dderiv = std::numeric_limits<double>::quiet_NaN();
                row.ratio = std::numeric_limits<double>::quiet_NaN();
                rows.push_back(row);
                continue;
            }
            const VirtualMode mode = target >= base_size ? VirtualMode::Grow : VirtualMode::Shrink;
            const VirtualBatch vb = virtual_batch(defining, static_cast<int>(target), mode, line.dderivs, n,
                                                  study_seed(seed, row.step, fi));
            row.scaled_dderiv = subset_mean(line.dderivs, vb.members);
            if (row.scaled_dderiv == 0.0 || base == 0.0) {
                row.masked = true;
                row.ratio = std::numeric_limits<double>::quiet_NaN();
            } else {
                row.ratio = std::abs(base) / std::abs(row.scaled_dderiv);
            }
            rows.push_back(row);
        }
    }
    return rows;
}

std::vector<BatchSizeRow> strategy_vs_batchsize(const Model& model, const Dataset& ds,
                                                const std::vector<BatchStudyLine>& lines,
                                                const std::vector<int>& sizes, double lr, double mu,
                                                std::uint64_t seed, int threads) {
    if (lines.empty()) throw SpecError("no lines for the batch-size study");
    if (sizes.empty()) throw SpecError("no batch sizes to evaluate");
    if (!(lr > 0.0)) throw SpecError("learning rate must be positive");
    if (!(mu > 0.0)) throw SpecError("mu must be positive");
    for (const BatchStudyLine& line : lines)
        if (!line.line.scan.has_per_sample())
            throw CapabilityError("batch-size study needs per-sample scan matrices; rerun the scan with per-sample granularity");

    std::vector<BatchSizeRow> rows(lines.size() * sizes.size() * 2);
    run_workers(threads, static_cast<int>(lines.size()), [&](int li) {
        const BatchStudyLine& study = lines[static_cast<std::size_t>(li)];
        const LineScan& scan = study.line.scan;
        const std::vector<std::int64_t>& defining = scan.direction.batch_indices;
        const int base_size = static_cast<int>(defining.size());
        const Curve full = full_curve(scan);
        const double l0_full = full.loss[static_cast<std::size_t>(scan.grid.zero_index)];
        auto loss_at = [&](double s) {
            return model.batch_loss(axpy_point(study.line.origin, s, study.line.direction), ds.features, ds.labels);
        };

        for (std::size_t zi = 0; zi < sizes.size(); ++zi) {
            const int size = sizes[zi];
            std::string base_flags;
            std::vector<double> curve_values;
            double dderiv = 0.0, sgd_norm = 0.0;
            bool ok = true;
            if (size == base_size) {
                // reuse the recorded quantities so the original size reproduces
                // the strategies-module rows bit-exactly
                curve_values = scan.defining;
                dderiv = scan.direction.dir_deriv;
                sgd_norm = scan.direction.grad_norm;
            } else {
                try {
                    const VirtualMode mode = size > base_size ? VirtualMode::Grow : VirtualMode::Shrink;
                    const VirtualBatch vb =
                        virtual_batch(defining, size, mode, study.dderivs, ds.n(), study_seed(seed, scan.direction.step, zi));
                    curve_values = aggregate(scan, vb.members);
                    dderiv = subset_mean(study.dderivs, vb.members);
                    sgd_norm = std::abs(dderiv);
                    base_flags = to_string(mode);
                } catch (const SpecError& e) {
                    ok = false;
                    base_flags = "failed";
                }
            }

            for (int strat = 0; strat < 2; ++strat) {
                BatchSizeRow row;
                row.step = scan.direction.step;
                row.size = size;
                row.strategy = strat == 0 ? "sgd" : "pal";
                row.flags = base_flags;
                if (!ok) {
                    row.s_upd = std::numeric_limits<double>::quiet_NaN();
                    row.improvement = std::numeric_limits<double>::quiet_NaN();
                } else {
                    if (strat == 0) {
                        row.s_upd = step_sgd(lr, sgd_norm);
                    } else {
                        const Curve c = make_curve(scan.grid, curve_values);
                        StepResult r = step_pal_on_curve(c, scan.grid, mu, dderiv);
                        row.s_upd = r.s_upd;
                        if (!r.flags.empty()) row.flags += (row.flags.empty() ? "" : ";") + r.flags;
                    }
                    row.improvement = improvement(l0_full, loss_at, row.s_upd);
                }
                rows[(static_cast<std::size_t>(li) * sizes.size() + zi) * 2 + static_cast<std::size_t>(strat)] = row;
            }
        }
    });
    return rows;
}

} // namespace linesgd
