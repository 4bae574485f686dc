#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "linesgd/errors.hpp"
#include "linesgd/io_util.hpp"
#include "linesgd/linescan.hpp"

using namespace linesgd;
namespace fs = std::filesystem;

namespace {

struct Rig {
    Dataset ds;
    TrainConfig tc;
    std::unique_ptr<Model> model;
    ParamVector origin;
    StepRecord rec;
};

Rig make_rig() {
    Rig r;
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

// A 1-1-1-2 chain whose logits overflow for s above a known threshold:
// hidden = relu(s), then s*w2, then logits (s*w2*w3, -s*w2*w3).
Rig overflow_rig(double w) {
    Rig r;
    r.ds.features = Eigen::MatrixXd::Ones(3, 1);
    r.ds.labels = {0, 1, 0};
    r.ds.class_count = 2;
    r.ds.refingerprint();
    r.tc.model.kind = ModelKind::Mlp;
    r.tc.model.layers = {1, 1, 1, 2};
    r.model = make_model(r.tc.model);
    r.origin = ParamVector::Zero(8);
    r.origin[2] = w;   // second-layer weight
    r.origin[4] = w;   // logit 0 weight
    r.origin[5] = -w;  // logit 1 weight
    r.rec.step = 0;
    r.rec.batch_indices = {0, 1};
    r.rec.direction = ParamVector::Zero(8);
    r.rec.direction[0] = 1.0;  // moves the first-layer weight, so hidden = relu(s)
    r.rec.grad_norm = 1.0;
    r.rec.dir_deriv = -1.0;
    return r;
}

}  // namespace

TEST_CASE("the scan reproduces origin losses at s = 0") {
    Rig r = make_rig();
    Grid grid = make_grid(-0.2, 0.2, 0.01);
    LineScan scan = scan_line(*r.model, r.origin, r.rec, grid, r.ds);
    std::vector<int> all(r.ds.n());
    CHECK(scan.full[static_cast<std::size_t>(grid.zero_index)] ==
          r.model->batch_loss(r.origin, r.ds.features, r.ds.labels));
    SampleBatch batch = r.ds.gather(r.rec.batch_indices);
    CHECK(scan.defining[static_cast<std::size_t>(grid.zero_index)] ==
          r.model->batch_loss(r.origin, batch.features, batch.labels));
    CHECK(scan.direction.step == 2);
    CHECK(scan.dataset_fingerprint == r.ds.fingerprint);
}

TEST_CASE("scans are identical across worker thread counts") {
    Rig r = make_rig();
    Grid grid = make_grid(-0.5, 0.5, 0.006);
    LineScan one = scan_line(*r.model, r.origin, r.rec, grid, r.ds, Granularity::Full, 1);
    LineScan four = scan_line(*r.model, r.origin, r.rec, grid, r.ds, Granularity::Full, 4);
    CHECK(one.full == four.full);
    CHECK(one.defining == four.defining);
}

TEST_CASE("per-sample scans aggregate back to the full and defining curves exactly") {
    Rig r = make_rig();
    Grid grid = make_grid(-0.2, 0.2, 0.02);
    LineScan scan = scan_line(*r.model, r.origin, r.rec, grid, r.ds, Granularity::PerSample, 3);
    REQUIRE(scan.has_per_sample());
    CHECK(scan.per_sample.rows() == r.ds.n());
    CHECK(scan.per_sample.cols() == grid.count());
    std::vector<std::int64_t> all(static_cast<std::size_t>(r.ds.n()));
    for (int i = 0; i < r.ds.n(); ++i) all[static_cast<std::size_t>(i)] = i;
    CHECK(aggregate(scan, all) == scan.full);
    CHECK(aggregate(scan, r.rec.batch_indices) == scan.defining);
}

TEST_CASE("aggregate without a per-sample matrix reports the missing capability") {
    Rig r = make_rig();
    Grid grid = make_grid(-0.1, 0.1, 0.05);
    LineScan scan = scan_line(*r.model, r.origin, r.rec, grid, r.ds);
    std::vector<std::int64_t> idx = {0, 1};
    CHECK_THROWS_AS(aggregate(scan, idx), CapabilityError);
}

TEST_CASE("a non-unit direction is rejected") {
    Rig r = make_rig();
    r.rec.direction *= 2.0;
    Grid grid = make_grid(-0.1, 0.1, 0.05);
    CHECK_THROWS_AS(scan_line(*r.model, r.origin, r.rec, grid, r.ds), SpecError);
}

TEST_CASE("overflowing losses are masked, and heavy masking marks the scan invalid") {
    Grid grid = make_grid(-0.5, 0.5, 0.006);
    {
        // the wrong-label sample costs ~2*logit, which overflows for
        // s > DBL_MAX / (2 w^2) ~ 0.4104: exactly the 15 points 0.414..0.498
        Rig r = overflow_rig(1.48e154);
        LineScan scan = scan_line(*r.model, r.origin, r.rec, grid, r.ds);
        int masked = 0;
        for (auto m : scan.full_mask) masked += m;
        CHECK(masked == 15);
        CHECK(!scan.invalid);
        CHECK(scan.masked_fraction() == doctest::Approx(15.0 / 167.0));
        CHECK(!std::isfinite(scan.full[166]));
        CHECK(std::isfinite(scan.full[0]));
    }
    {
        // a larger weight overflows from s > 0.2247 and masks > 10%
        Rig r = overflow_rig(2e154);
        LineScan scan = scan_line(*r.model, r.origin, r.rec, grid, r.ds);
        int masked = 0;
        for (auto m : scan.full_mask) masked += m;
        CHECK(masked == 46);
        CHECK(scan.invalid);
    }
}

TEST_CASE("scan archives round-trip byte for byte") {
    Rig r = make_rig();
    Grid grid = make_grid(-0.5, 0.5, 0.006);
    LineScan scan = scan_line(*r.model, r.origin, r.rec, grid, r.ds, Granularity::PerSample, 2);
    scan.config_hash = "0x0123456789abcdef";
    fs::path a = fs::temp_directory_path() / "linesgd_scan_a";
    fs::path b = fs::temp_directory_path() / "linesgd_scan_b";
    fs::remove_all(a);
    fs::remove_all(b);
    save_scan(a, scan);
    LineScan loaded = load_scan(a);
    CHECK(loaded.full == scan.full);
    CHECK(loaded.defining == scan.defining);
    CHECK(loaded.per_sample == scan.per_sample);
    CHECK(loaded.direction.batch_indices == scan.direction.batch_indices);
    CHECK(loaded.direction.grad_norm == scan.direction.grad_norm);
    CHECK(loaded.config_hash == scan.config_hash);
    CHECK(loaded.grid.points == scan.grid.points);
    save_scan(b, loaded);
    for (const char* name : {"manifest.json", "full.csv", "batches.csv", "per_sample.f64le"}) {
        CAPTURE(name);
        CHECK(read_text_file(a / name) == read_text_file(b / name));
    }
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("corrupt archives name the offending file") {
    Rig r = make_rig();
    Grid grid = make_grid(-0.1, 0.1, 0.05);
    LineScan scan = scan_line(*r.model, r.origin, r.rec, grid, r.ds);
    fs::path dir = fs::temp_directory_path() / "linesgd_scan_corrupt";
    fs::remove_all(dir);
    save_scan(dir, scan);
    std::string text = read_text_file(dir / "full.csv");
    write_text_file(dir / "full.csv", text + "0.1,0.2,0\n");  // extra row
    try {
        load_scan(dir);
        FAIL("expected an integrity error");
    } catch (const IntegrityError& e) {
        CHECK(std::string(e.what()).find("full.csv") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("a fan draws distinct batches from one origin") {
    Rig r = make_rig();
    Grid grid = make_grid(-0.2, 0.2, 0.02);
    BatchPlan plan = r.tc.plan;
    std::vector<LineScan> fans = fan_scan(*r.model, r.origin, 3, r.ds, plan, grid);
    REQUIRE(fans.size() == 3);
    const double origin_loss = r.model->batch_loss(r.origin, r.ds.features, r.ds.labels);
    for (std::size_t j = 0; j < fans.size(); ++j) {
        CHECK(fans[j].direction.step == static_cast<int>(j));
        CHECK(fans[j].full[static_cast<std::size_t>(grid.zero_index)] == origin_loss);
        CHECK(fans[j].direction.kind == "gradient");
    }
    CHECK(fans[0].direction.batch_indices != fans[1].direction.batch_indices);
    CHECK_THROWS_AS(fan_scan(*r.model, r.origin, 1, r.ds, plan, grid), SpecError);
}
