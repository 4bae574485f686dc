// Python bindings for the core line-scanning operations. Everything crosses
// the boundary as plain floats/lists/dicts; exceptions surface as RuntimeError.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <string>
#include <vector>

#include "linesgd/analysis.hpp"
#include "linesgd/dataset.hpp"
#include "linesgd/grid.hpp"
#include "linesgd/model.hpp"
#include "linesgd/runconfig.hpp"
#include "linesgd/strategies.hpp"
#include "linesgd/trainer.hpp"

namespace py = pybind11;

namespace {

linesgd::Curve curve_from(const linesgd::Grid& grid, const std::vector<double>& losses) {
    if (losses.size() != grid.points.size())
        throw linesgd::SpecError("losses must have one value per grid point");
    return linesgd::make_curve(grid, losses);
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Core operations for measuring and comparing loss lines along SGD update directions.";

    m.def(
        "grid_points",
        [](double lo, double hi, double res) {
            const linesgd::Grid g = linesgd::make_grid(lo, hi, res);
            return py::make_tuple(g.points, g.zero_index);
        },
        py::arg("lo"), py::arg("hi"), py::arg("res"),
        "Uniform step-size grid with s=0 exactly on-grid; returns (points, zero_index).");

    m.def("step_sgd", &linesgd::step_sgd, py::arg("lr"), py::arg("grad_norm"),
          "Fixed-rate step length along the unit descent direction.");

    m.def(
        "step_pal",
        [](double l0, double dderiv, double l_mu, double mu) {
            const linesgd::StepResult r = linesgd::step_pal(l0, dderiv, l_mu, mu);
            return py::make_tuple(r.s_upd, r.flags);
        },
        py::arg("l0"), py::arg("dderiv"), py::arg("l_mu"), py::arg("mu"),
        "Parabolic step length from the origin loss, its slope and one probe loss; "
        "returns (s_upd, flags).");

    m.def("moving_average", &linesgd::moving_average, py::arg("series"), py::arg("k"),
          "Centered moving average that skips non-finite entries.");

    m.def(
        "curve_distance",
        [](double lo, double hi, double res, const std::vector<double>& a, const std::vector<double>& b,
           double window_lo, double window_hi) {
            const linesgd::Grid g = linesgd::make_grid(lo, hi, res);
            return linesgd::mae_distance(curve_from(g, a), curve_from(g, b),
                                         linesgd::Window{window_lo, window_hi});
        },
        py::arg("lo"), py::arg("hi"), py::arg("res"), py::arg("a"), py::arg("b"), py::arg("window_lo"),
        py::arg("window_hi"),
        "Mean absolute difference of two loss curves on a shared grid after each is "
        "shifted so its window minimum is zero.");

    m.def(
        "parabola_fit",
        [](double lo, double hi, double res, const std::vector<double>& losses, double window_lo,
           double window_hi) {
            const linesgd::Grid g = linesgd::make_grid(lo, hi, res);
            const linesgd::PolyFit f =
                linesgd::polyfit(curve_from(g, losses), 2, linesgd::Window{window_lo, window_hi});
            py::dict d;
            d["a"] = f.a;
            d["b"] = f.b;
            d["c"] = f.c;
            d["mae"] = f.mae;
            d["rmse"] = f.rmse;
            return d;
        },
        py::arg("lo"), py::arg("hi"), py::arg("res"), py::arg("losses"), py::arg("window_lo"),
        py::arg("window_hi"), "Least-squares degree-2 fit of a loss curve inside the window.");

    m.def(
        "proportionality",
        [](const std::vector<double>& s_opt, const std::vector<double>& grad_norm) {
            const linesgd::ProportionalitySeries p = linesgd::proportionality(s_opt, grad_norm);
            py::dict d;
            d["c"] = p.c;
            d["pearson"] = p.pearson;
            d["ratio"] = p.ratio;
            d["degenerate"] = p.degenerate;
            d["note"] = p.note;
            return d;
        },
        py::arg("s_opt"), py::arg("grad_norm"),
        "Fits s_opt ~ c * grad_norm across lines and reports the per-line ratios, the "
        "least-squares c and the Pearson correlation.");

    m.def(
        "train_demo",
        [](int n, int classes, int dim, int steps, double lr, int batch_size, std::uint64_t seed) {
            linesgd::RunConfig cfg;
            cfg.set("seed", std::to_string(seed));
            cfg.set("data.synth.n", std::to_string(n));
            cfg.set("data.synth.classes", std::to_string(classes));
            cfg.set("data.synth.dim", std::to_string(dim));
            cfg.set("model.layers",
                    std::to_string(dim) + ",16," + std::to_string(classes));
            cfg.set("train.steps", std::to_string(steps));
            cfg.set("train.lr", std::to_string(lr));
            cfg.set("train.batch_size", std::to_string(batch_size));
            const linesgd::Dataset ds = cfg.build_dataset();
            const auto model = linesgd::make_model(cfg.model_spec());
            const linesgd::Trajectory traj = linesgd::train(*model, ds, cfg.train_config());
            py::dict out;
            out["final_full_loss"] = traj.final_full_loss;
            out["final_full_accuracy"] = traj.final_full_accuracy;
            out["param_count"] = traj.param_count;
            out["steps"] = static_cast<int>(traj.records.size());
            out["first_grad_norm"] = traj.records.empty() ? 0.0 : traj.records.front().grad_norm;
            return out;
        },
        py::arg("n") = 200, py::arg("classes") = 3, py::arg("dim") = 8, py::arg("steps") = 50,
        py::arg("lr") = 0.1, py::arg("batch_size") = 32, py::arg("seed") = 0,
        "Trains a small network on seeded synthetic blobs and returns summary numbers; "
        "identical arguments give identical results.");
}
