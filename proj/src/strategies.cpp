#include "linesgd/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "linesgd/io_util.hpp"
#include "linesgd/parallel.hpp"

namespace linesgd {

StrategyKind strategy_kind_from_string(const std::string& s) {
    if (s == "sgd") return StrategyKind::Sgd;
    if (s == "pal") return StrategyKind::Pal;
    if (s == "fbpal") return StrategyKind::Fbpal;
    if (s == "exact_minibatch") return StrategyKind::ExactMinibatch;
    if (s == "exact_fullbatch") return StrategyKind::ExactFullbatch;
    throw SpecError("unknown strategy: '" + s + "'");
}

std::string to_string(StrategyKind k) {
    switch (k) {
        case StrategyKind::Sgd: return "sgd";
        case StrategyKind::Pal: return "pal";
        case StrategyKind::Fbpal: return "fbpal";
        case StrategyKind::ExactMinibatch: return "exact_minibatch";
        default: return "exact_fullbatch";
    }
}

StrategySpec StrategySpec::sgd(double lr) { return {StrategyKind::Sgd, lr, 0.0, "sgd_lr_" + fmt_double(lr)}; }
StrategySpec StrategySpec::pal(double mu) { return {StrategyKind::Pal, 0.0, mu, "pal_mu_" + fmt_double(mu)}; }
StrategySpec StrategySpec::fbpal(double mu) { return {StrategyKind::Fbpal, 0.0, mu, "fbpal_mu_" + fmt_double(mu)}; }
StrategySpec StrategySpec::exact_minibatch() { return {StrategyKind::ExactMinibatch, 0.0, 0.0, "exact_minibatch"}; }
StrategySpec StrategySpec::exact_fullbatch() { return {StrategyKind::ExactFullbatch, 0.0, 0.0, "exact_fullbatch"}; }

void StrategySpec::validate() const {
    if (kind == StrategyKind::Sgd && !(lr > 0.0)) throw SpecError("sgd strategy needs a positive learning rate");
    if ((kind == StrategyKind::Pal || kind == StrategyKind::Fbpal) && !(mu > 0.0))
        throw SpecError("pal strategies need a positive mu");
    if (label.empty()) throw SpecError("strategy label must not be empty");
}

double step_sgd(double lr, double grad_norm) {
    if (grad_norm < 0.0) throw SpecError("negative gradient norm");
    return lr * grad_norm;
}

namespace {

void add_flag(std::string& flags, const char* token) {
    if (!flags.empty()) flags += ';';
    flags += token;
}

} // namespace

StepResult step_pal(double l0, double dderiv, double l_mu, double mu) {
    if (!(mu > 0.0)) throw SpecError("pal mu must be positive");
    if (!std::isfinite(l0) || !std::isfinite(dderiv) || !std::isfinite(l_mu))
        throw SpecError("pal inputs must be finite");

    StepResult res;
    const double denom = 2.0 * (l_mu - l0 - dderiv * mu); // = 2 a mu^2
    if (std::abs(denom) < 1e-15) {
        add_flag(res.flags, "degenerate_curvature");
        res.s_upd = mu * std::abs(dderiv);
        return res;
    }
    if (denom < 0.0) { // implied a <= 0: the parabola has no minimum
        add_flag(res.flags, "nonconvex");
        res.s_upd = mu * std::abs(dderiv);
        return res;
    }
    res.s_upd = -dderiv * mu * mu / denom;
    return res;
}

StepResult step_pal_on_curve(const Curve& curve, const Grid& grid, double mu, double exact_dderiv) {
    if (curve.count() != grid.count()) throw SpecError("curve does not match the grid");
    const int zero = grid.zero_index;
    if (zero < 0 || zero >= grid.count() || curve.mask[static_cast<std::size_t>(zero)])
        throw SpecError("curve has no usable value at s=0");

    StepResult res;
    const double l0 = curve.loss[static_cast<std::size_t>(zero)];

    double dderiv = exact_dderiv;
    if (!std::isfinite(dderiv)) {
        // centered finite difference at the origin, one grid cell wide
        const int lo = zero - 1, hi = zero + 1;
        if (lo >= 0 && hi < grid.count() && !curve.mask[static_cast<std::size_t>(lo)] &&
            !curve.mask[static_cast<std::size_t>(hi)]) {
            dderiv = (curve.loss[static_cast<std::size_t>(hi)] - curve.loss[static_cast<std::size_t>(lo)]) /
                     (grid.points[static_cast<std::size_t>(hi)] - grid.points[static_cast<std::size_t>(lo)]);
        } else if (hi < grid.count() && !curve.mask[static_cast<std::size_t>(hi)]) {
            add_flag(res.flags, "one_sided_slope");
            dderiv = (curve.loss[static_cast<std::size_t>(hi)] - l0) / grid.resolution;
        } else {
            throw SpecError("cannot estimate the slope at s=0 (masked neighbors)");
        }
    }

    int mu_index = zero + std::max<long long>(1, std::llround(mu / grid.resolution));
    if (mu_index >= grid.count()) {
        mu_index = grid.count() - 1;
        add_flag(res.flags, "mu_clamped");
    }
    if (curve.mask[static_cast<std::size_t>(mu_index)]) {
        int found = -1;
        for (int off = 1; off < grid.count(); ++off) {
            if (mu_index - off > zero && !curve.mask[static_cast<std::size_t>(mu_index - off)]) {
                found = mu_index - off;
                break;
            }
            if (mu_index + off < grid.count() && !curve.mask[static_cast<std::size_t>(mu_index + off)]) {
                found = mu_index + off;
                break;
            }
        }
        if (found < 0) throw SpecError("no unmasked grid point available for mu");
        add_flag(res.flags, "mu_shifted");
        mu_index = found;
    }
    const double snapped_mu = grid.points[static_cast<std::size_t>(mu_index)];
    const double l_mu = curve.loss[static_cast<std::size_t>(mu_index)];

    StepResult pal = step_pal(l0, dderiv, l_mu, snapped_mu);
    if (!pal.flags.empty()) add_flag(res.flags, pal.flags.c_str());
    res.s_upd = pal.s_upd;
    return res;
}

StepResult step_exact(const Curve& curve, Window window) {
    const ArgminResult r = argmin_refined(curve, window);
    StepResult res;
    res.s_upd = r.s_opt;
    if (r.boundary) add_flag(res.flags, "boundary");
    return res;
}

std::vector<StrategyOutcome> evaluate_strategies(const Model& model, const Dataset& ds,
                                                 const std::vector<LineContext>& lines,
                                                 const std::vector<StrategySpec>& specs, Window window,
                                                 bool exact_improvement, int threads) {
    if (lines.empty()) throw SpecError("no scanned lines to evaluate");
    if (specs.empty()) throw SpecError("no strategies to evaluate");
    for (const StrategySpec& spec : specs) spec.validate();

    std::vector<StrategyOutcome> rows(lines.size() * specs.size());
    run_workers(threads, static_cast<int>(lines.size()), [&](int li) {
        const LineContext& line = lines[static_cast<std::size_t>(li)];
        const LineScan& scan = line.scan;
        const Grid& grid = scan.grid;
        const Curve full = full_curve(scan);
        const Curve defining = defining_curve(scan);

        const ArgminResult opt = argmin_refined(full, window);
        const int zero = grid.zero_index;
        const double l0_full = full.loss[static_cast<std::size_t>(zero)];
        const bool full_batch_defining = static_cast<int>(scan.direction.batch_indices.size()) == ds.n();

        auto loss_at = [&](double s) -> double {
            if (exact_improvement)
                return model.batch_loss(axpy_point(line.origin, s, line.direction), ds.features, ds.labels);
            return interp_loss(full, s);
        };

        for (std::size_t si = 0; si < specs.size(); ++si) {
            const StrategySpec& spec = specs[si];
            StrategyOutcome out;
            out.step = scan.direction.step;
            out.strategy = spec.label;
            out.s_opt = opt.s_opt;
            if (opt.boundary) add_flag(out.flags, "s_opt_boundary");

            StepResult step;
            try {
                switch (spec.kind) {
                    case StrategyKind::Sgd: step.s_upd = step_sgd(spec.lr, scan.direction.grad_norm); break;
                    case StrategyKind::Pal:
                        step = step_pal_on_curve(defining, grid, spec.mu, scan.direction.dir_deriv);
                        break;
                    case StrategyKind::Fbpal:
                        step = step_pal_on_curve(full, grid, spec.mu,
                                                 full_batch_defining ? scan.direction.dir_deriv
                                                                     : std::numeric_limits<double>::quiet_NaN());
                        break;
                    case StrategyKind::ExactMinibatch: step = step_exact(defining, window); break;
                    case StrategyKind::ExactFullbatch: step = step_exact(full, window); break;
                }
            } catch (const SpecError& e) {
                add_flag(out.flags, "failed");
                out.s_upd = std::numeric_limits<double>::quiet_NaN();
                out.distance = std::numeric_limits<double>::quiet_NaN();
                out.improvement = std::numeric_limits<double>::quiet_NaN();
                rows[static_cast<std::size_t>(li) * specs.size() + si] = out;
                continue;
            }
            if (!step.flags.empty()) add_flag(out.flags, step.flags.c_str());
            out.s_upd = step.s_upd;
            out.distance = out.s_opt - out.s_upd;
            if (!exact_improvement) add_flag(out.flags, "interp");
            try {
                out.improvement = improvement(l0_full, loss_at, out.s_upd);
            } catch (const SpecError&) {
                add_flag(out.flags, "outside_interval");
                out.improvement = std::numeric_limits<double>::quiet_NaN();
            }
            rows[static_cast<std::size_t>(li) * specs.size() + si] = out;
        }
    });
    return rows;
}

std::vector<StrategySeries> group_outcomes(const std::vector<StrategyOutcome>& rows) {
    std::vector<StrategySeries> out;
    std::map<std::string, std::size_t> index;
    for (const StrategyOutcome& r : rows) {
        auto [it, inserted] = index.try_emplace(r.strategy, out.size());
        if (inserted) {
            out.emplace_back();
            out.back().label = r.strategy;
        }
        StrategySeries& s = out[it->second];
        s.steps.push_back(r.step);
        s.s_upd.push_back(r.s_upd);
        s.s_opt.push_back(r.s_opt);
        s.distance.push_back(r.distance);
        s.improvement.push_back(r.improvement);
        s.flags.push_back(r.flags);
    }
    for (StrategySeries& s : out) {
        std::vector<std::size_t> order(s.steps.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.steps[a] < s.steps[b]; });
        StrategySeries sorted;
        sorted.label = s.label;
        for (const std::size_t i : order) {
            sorted.steps.push_back(s.steps[i]);
            sorted.s_upd.push_back(s.s_upd[i]);
            sorted.s_opt.push_back(s.s_opt[i]);
            sorted.distance.push_back(s.distance[i]);
            sorted.improvement.push_back(s.improvement[i]);
            sorted.flags.push_back(s.flags[i]);
        }
        s = std::move(sorted);
    }
    return out;
}

std::vector<double> cumulative(const std::vector<double>& series) {
    std::vector<double> out(series.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (std::isfinite(series[i])) sum += series[i];
        out[i] = sum;
    }
    return out;
}

} // namespace linesgd
