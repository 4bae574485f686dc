#include <doctest.h>

#include <cmath>
#include <set>

#include "linesgd/batchsim.hpp"
#include "linesgd/errors.hpp"

using namespace linesgd;

namespace {

struct MlpRig {
    Dataset ds;
    TrainConfig tc;
    std::unique_ptr<Model> model;
    ParamVector origin;
    StepRecord rec;
};

MlpRig mlp_rig() {
    MlpRig r;
    r.ds = synth_blobs(40, 3, 4, 1.0, 23);
    r.tc.lr = 0.1;
    r.tc.steps = 5;
    r.tc.plan.batch_size = 8;
    r.tc.plan.shuffle_seed = 3;
    r.tc.model.kind = ModelKind::Mlp;
    r.tc.model.layers = {4, 6, 3};
    r.tc.model.init_seed = 2;
    r.model = make_model(r.tc.model);
    auto [params, buffer] = replay_to_step(*r.model, r.ds, r.tc, 2);
    r.origin = params;
    r.rec = advance_step(*r.model, r.ds, r.tc, 2, params, buffer);
    return r;
}

// Quadratic-head line with a per-sample scan: every sample has the identical
// loss |theta + s d|^2, so all per-sample slopes equal -2|theta|.
struct QuadRig {
    Dataset ds;
    std::unique_ptr<Model> model;
    ParamVector origin;
    StepRecord rec;
    LineScan scan;
};

QuadRig quad_rig() {
    QuadRig q;
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

    q.rec.step = 0;
    q.rec.batch_indices = {0, 1};
    q.rec.direction = -q.origin / norm;
    q.rec.grad_norm = 2.0 * norm;
    q.rec.dir_deriv = -2.0 * norm;

    Grid grid = make_grid(-1.0, 1.0, 0.01);
    q.scan = scan_line(*q.model, q.origin, q.rec, grid, q.ds, Granularity::PerSample);
    return q;
}

double mean_over(const std::vector<double>& values, const std::vector<std::int64_t>& idx) {
    double sum = 0.0;
    for (const std::int64_t i : idx) sum += values[static_cast<std::size_t>(i)];
    return sum / static_cast<double>(idx.size());
}

// A study line that only carries the fields the ratio study reads.
BatchStudyLine bare_line(int step, std::vector<std::int64_t> defining, std::vector<double> dderivs) {
    BatchStudyLine line;
    line.line.scan.direction.step = step;
    line.line.scan.direction.batch_indices = std::move(defining);
    line.dderivs = std::move(dderivs);
    return line;
}

}  // namespace

TEST_CASE("per-sample slopes recompose into batch directional derivatives") {
    MlpRig r = mlp_rig();
    const ParamVector d = r.rec.direction;
    auto dd = per_sample_dderiv(*r.model, r.origin, d, r.ds);
    REQUIRE(static_cast<int>(dd.size()) == r.ds.n());

    // mean over the defining batch = the recorded slope = -|batch gradient|
    const double batch_mean = mean_over(dd, r.rec.batch_indices);
    CHECK(batch_mean == doctest::Approx(r.rec.dir_deriv).epsilon(1e-10));
    CHECK(batch_mean == doctest::Approx(-r.rec.grad_norm).epsilon(1e-10));

    // mean over everything = the full-batch gradient projected on d
    std::vector<std::int64_t> all(static_cast<std::size_t>(r.ds.n()));
    for (int i = 0; i < r.ds.n(); ++i) all[static_cast<std::size_t>(i)] = i;
    const LossGrad lg = batch_loss_and_grad(*r.model, r.origin, r.ds.gather(all));
    CHECK(mean_over(dd, all) == doctest::Approx(lg.grad.dot(d)).epsilon(1e-10));

    // disjoint halves recompose: exact up to summation order on measured
    // slopes, bit-exact on dyadic values where no addition ever rounds
    std::vector<std::int64_t> first8(all.begin(), all.begin() + 8);
    std::vector<std::int64_t> a(first8.begin(), first8.begin() + 4);
    std::vector<std::int64_t> b(first8.begin() + 4, first8.end());
    const double recombined = (4.0 * mean_over(dd, a) + 4.0 * mean_over(dd, b)) / 8.0;
    CHECK(recombined == doctest::Approx(mean_over(dd, first8)).epsilon(1e-13));

    const std::vector<double> dyadic = {-2.0, -1.0, 0.5, 0.25, 1.0, -0.5, 4.0, 8.0};
    const double dy_a = mean_over(dyadic, {0, 1, 2, 3});
    const double dy_b = mean_over(dyadic, {4, 5, 6, 7});
    CHECK((4.0 * dy_a + 4.0 * dy_b) / 8.0 == mean_over(dyadic, first8));

    auto threaded = per_sample_dderiv(*r.model, r.origin, d, r.ds, 3);
    CHECK(dd == threaded);

    ParamVector not_unit = 2.0 * d;
    CHECK_THROWS_AS(per_sample_dderiv(*r.model, r.origin, not_unit, r.ds), SpecError);
}

TEST_CASE("finite differences from a per-sample scan match the exact slopes") {
    QuadRig q = quad_rig();
    auto exact = per_sample_dderiv(*q.model, q.origin, q.rec.direction, q.ds);
    auto fd = fd_dderiv_from_scan(q.scan);
    REQUIRE(fd.size() == exact.size());
    const double norm = q.origin.norm();
    for (std::size_t i = 0; i < fd.size(); ++i) {
        // centered differences are exact on a parabola
        CHECK(fd[i] == doctest::Approx(-2.0 * norm).epsilon(1e-9));
        CHECK(fd[i] == doctest::Approx(exact[i]).epsilon(1e-9));
    }

    LineScan full_only = scan_line(*q.model, q.origin, q.rec, q.scan.grid, q.ds);
    CHECK_THROWS_AS(fd_dderiv_from_scan(full_only), CapabilityError);
}

TEST_CASE("shrinking keeps the steepest-descent members") {
    const std::vector<std::int64_t> defining = {0, 1, 2, 3};
    const std::vector<double> dd = {-3.0, -2.0, -1.0, 0.0};
    VirtualBatch vb = virtual_batch(defining, 2, VirtualMode::Shrink, dd, 4, 9);
    CHECK(vb.members == std::vector<std::int64_t>{0, 1});

    // ties keep the lower sample index
    const std::vector<double> flat = {5.0, 5.0, 5.0, 5.0};
    CHECK(virtual_batch(defining, 2, VirtualMode::Shrink, flat, 4, 9).members ==
          std::vector<std::int64_t>{0, 1});

    // the magnitude variant keeps the largest |slope| instead
    const std::vector<double> mixed = {-3.0, -2.0, -1.0, 4.0};
    CHECK(virtual_batch(defining, 2, VirtualMode::Shrink, mixed, 4, 9, true).members ==
          std::vector<std::int64_t>{0, 3});

    // identity at the original size
    CHECK(virtual_batch(defining, 4, VirtualMode::Shrink, dd, 4, 9).members == defining);
    CHECK_THROWS_AS(virtual_batch(defining, 0, VirtualMode::Shrink, dd, 4, 9), SpecError);
    CHECK_THROWS_AS(virtual_batch(defining, 5, VirtualMode::Shrink, dd, 4, 9), SpecError);
    CHECK_THROWS_AS(virtual_batch({}, 1, VirtualMode::Shrink, dd, 4, 9), SpecError);
}

TEST_CASE("growing draws seeded members without replacement") {
    const std::vector<std::int64_t> defining = {1, 2};
    const std::vector<double> dd(6, 0.0);

    VirtualBatch vb = virtual_batch(defining, 4, VirtualMode::Grow, dd, 6, 101);
    REQUIRE(vb.members.size() == 4);
    CHECK(std::is_sorted(vb.members.begin(), vb.members.end()));
    std::set<std::int64_t> members(vb.members.begin(), vb.members.end());
    CHECK(members.size() == 4);  // no duplicates
    CHECK(members.count(1) == 1);
    CHECK(members.count(2) == 1);
    for (const std::int64_t m : vb.members) CHECK((m >= 0 && m < 6));

    // same seed reproduces, and the draw actually depends on the seed
    CHECK(virtual_batch(defining, 4, VirtualMode::Grow, dd, 6, 101).members == vb.members);
    std::set<std::vector<std::int64_t>> draws;
    for (std::uint64_t seed = 0; seed < 10; ++seed)
        draws.insert(virtual_batch(defining, 4, VirtualMode::Grow, dd, 6, seed).members);
    CHECK(draws.size() > 1);

    CHECK(virtual_batch(defining, 2, VirtualMode::Grow, dd, 6, 101).members == defining);
    CHECK_THROWS_AS(virtual_batch(defining, 7, VirtualMode::Grow, dd, 6, 101), SpecError);
    CHECK_THROWS_AS(virtual_batch(defining, 1, VirtualMode::Grow, dd, 6, 101), SpecError);
}

TEST_CASE("the slope ratio follows a hand-computed case") {
    // slopes {-2,-1,0,1}: defining {0,1} has mean -1.5, the full set -0.5,
    // so doubling the batch flattens the slope by a factor of 3.
    std::vector<BatchStudyLine> lines;
    lines.push_back(bare_line(7, {0, 1}, {-2.0, -1.0, 0.0, 1.0}));
    auto rows = ratio_study(lines, {2.0, 0.5, 4.0}, 5);
    REQUIRE(rows.size() == 3);

    CHECK(rows[0].step == 7);
    CHECK(rows[0].factor == 2.0);
    CHECK(rows[0].expected == 2.0);
    CHECK(rows[0].base_dderiv == -1.5);
    CHECK(rows[0].scaled_dderiv == -0.5);
    CHECK(rows[0].ratio == 3.0);
    CHECK_FALSE(rows[0].masked);

    // halving keeps the steeper member {-2}
    CHECK(rows[1].scaled_dderiv == -2.0);
    CHECK(rows[1].ratio == 0.75);

    // growing past the dataset is masked, not an error
    CHECK(rows[2].masked);
    CHECK(std::isnan(rows[2].ratio));
}

TEST_CASE("zero-slope padding dilutes the mean by exactly the growth factor") {
    // two defining members with slope -0.8 and fourteen bystanders with slope
    // zero: growing by f divides the mean slope by exactly f.
    std::vector<double> dd(16, 0.0);
    dd[0] = dd[1] = -0.8;
    std::vector<BatchStudyLine> lines;
    lines.push_back(bare_line(0, {0, 1}, dd));
    auto rows = ratio_study(lines, {2.0, 4.0, 8.0, 16.0}, 11);
    REQUIRE(rows.size() == 4);
    for (int i = 0; i < 3; ++i) {
        CHECK_FALSE(rows[static_cast<std::size_t>(i)].masked);
        CHECK(rows[static_cast<std::size_t>(i)].ratio == rows[static_cast<std::size_t>(i)].expected);
    }
    CHECK(rows[3].masked);  // 16 * 2 = 32 > n

    // an all-zero base slope is masked rather than divided by
    std::vector<BatchStudyLine> zero_lines;
    zero_lines.push_back(bare_line(0, {0, 1}, std::vector<double>(8, 0.0)));
    auto zr = ratio_study(zero_lines, {2.0}, 11);
    REQUIRE(zr.size() == 1);
    CHECK(zr[0].masked);

    CHECK_THROWS_AS(ratio_study({}, {2.0}, 11), SpecError);
    CHECK_THROWS_AS(ratio_study(lines, {}, 11), SpecError);
}

TEST_CASE("the original batch size reproduces the strategies-module step sizes") {
    QuadRig q = quad_rig();
    std::vector<BatchStudyLine> lines;
    lines.push_back({LineContext{q.scan, q.origin, q.rec.direction},
                     per_sample_dderiv(*q.model, q.origin, q.rec.direction, q.ds)});

    const double lr = 0.25, mu = 0.1;
    auto rows = strategy_vs_batchsize(*q.model, q.ds, lines, {2, 4}, lr, mu, 13);
    REQUIRE(rows.size() == 4);  // 2 sizes x {sgd, pal}

    // size 2 is the recorded defining batch: bit-exact reuse
    CHECK(rows[0].size == 2);
    CHECK(rows[0].strategy == "sgd");
    CHECK(rows[0].s_upd == step_sgd(lr, q.scan.direction.grad_norm));
    CHECK(rows[0].flags.empty());
    CHECK(rows[1].strategy == "pal");
    CHECK(rows[1].s_upd ==
          step_pal_on_curve(defining_curve(q.scan), q.scan.grid, mu, q.scan.direction.dir_deriv).s_upd);

    // growing to the whole (identical-sample) dataset keeps the same slope
    CHECK(rows[2].size == 4);
    CHECK(rows[2].flags.find("grow") != std::string::npos);
    CHECK(rows[2].s_upd == doctest::Approx(rows[0].s_upd).epsilon(1e-12));
    CHECK(rows[3].s_upd == doctest::Approx(rows[1].s_upd).epsilon(1e-12));
    for (const BatchSizeRow& row : rows) CHECK(std::isfinite(row.improvement));

    // a full-curve-only scan cannot support the study
    LineScan full_only = scan_line(*q.model, q.origin, q.rec, q.scan.grid, q.ds);
    std::vector<BatchStudyLine> bad;
    bad.push_back({LineContext{full_only, q.origin, q.rec.direction}, lines[0].dderivs});
    CHECK_THROWS_AS(strategy_vs_batchsize(*q.model, q.ds, bad, {2}, lr, mu, 13), CapabilityError);
}
