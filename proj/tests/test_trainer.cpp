#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "linesgd/dataset.hpp"
#include "linesgd/io_util.hpp"
#include "linesgd/trainer.hpp"

using namespace linesgd;
namespace fs = std::filesystem;

namespace {

TrainConfig micro_config(double momentum, int steps) {
    TrainConfig tc;
    tc.lr = 0.1;
    tc.momentum = momentum;
    tc.steps = steps;
    tc.plan.batch_size = 8;
    tc.plan.shuffle_seed = 21;
    tc.model.kind = ModelKind::Mlp;
    tc.model.layers = {4, 6, 3};
    tc.model.activation = Activation::Relu;
    tc.model.init_seed = 5;
    tc.eval_stride = 5;
    tc.snapshot_stride = 10;
    return tc;
}

Dataset micro_data() { return synth_blobs(40, 3, 4, 1.0, 17); }

}  // namespace

TEST_CASE("the update rule does exactly buffer = beta*buffer + grad; params -= lr*buffer") {
    ParamVector params(2), buffer(2), grad(2);
    params << 1, 2;
    buffer << 10, 0;
    grad << 0, 1;
    sgd_update(params, buffer, grad, 0.5, 0.5);
    CHECK(buffer[0] == 5.0);
    CHECK(buffer[1] == 1.0);
    CHECK(params[0] == -1.5);
    CHECK(params[1] == 1.5);

    params << 1, 2;
    buffer << 9, 9;
    sgd_update(params, buffer, grad, 0.1, 0.0);  // no momentum: buffer becomes the gradient
    CHECK(buffer[0] == 0.0);
    CHECK(buffer[1] == 1.0);
    CHECK(params[1] == 1.9);
}

TEST_CASE("recorded directions are unit length and their slope is minus the gradient norm") {
    Dataset ds = micro_data();
    Trajectory t = train(*make_model(micro_config(0.0, 30).model), ds, micro_config(0.0, 30));
    REQUIRE(t.records.size() == 30);
    for (const auto& rec : t.records) {
        REQUIRE(!rec.zero_direction);
        CHECK(std::fabs(rec.direction.norm() - 1.0) < 1e-9);
        CHECK(std::fabs(rec.dir_deriv + rec.grad_norm) <= 1e-10 * rec.grad_norm);
    }
}

TEST_CASE("with momentum the step length is lr times the buffer norm") {
    Dataset ds = micro_data();
    TrainConfig tc = micro_config(0.9, 12);
    auto model = make_model(tc.model);
    for (int k : {0, 5, 11}) {
        auto [params, buffer] = replay_to_step(*model, ds, tc, k);
        ParamVector before = params;
        StepRecord rec = advance_step(*model, ds, tc, k, params, buffer);
        CHECK(std::fabs((params - before).norm() - tc.lr * rec.momentum_norm) <= 1e-12 * rec.momentum_norm);
        CHECK(std::fabs(rec.direction.norm() - 1.0) < 1e-9);
        // the direction is the negative unit momentum buffer
        CHECK((rec.direction + buffer / buffer.norm()).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("replay reproduces the training states bit for bit") {
    Dataset ds = micro_data();
    TrainConfig tc = micro_config(0.9, 25);
    auto model = make_model(tc.model);
    Trajectory t = train(*model, ds, tc);
    // snapshots at the stride plus the final state
    REQUIRE(t.snapshots.count(0));
    REQUIRE(t.snapshots.count(10));
    REQUIRE(t.snapshots.count(20));
    REQUIRE(t.snapshots.count(25));
    for (int k : {0, 7, 10, 19, 25}) {
        auto [params, buffer] = replay_to_step(*model, ds, tc, k);
        if (t.snapshots.count(k)) {
            CHECK(params == t.snapshots.at(k));
            CHECK(buffer == t.momentum_buffers.at(k));
        }
        // continuing from an intermediate state matches replay from scratch
        auto [p2, b2] = replay_from(*model, ds, tc, 0, t.snapshots.at(0), t.momentum_buffers.at(0), k);
        CHECK(params == p2);
        CHECK(buffer == b2);
    }
}

TEST_CASE("full-data metrics appear exactly on the eval stride") {
    Dataset ds = micro_data();
    TrainConfig tc = micro_config(0.0, 12);
    Trajectory t = train(*make_model(tc.model), ds, tc);
    for (int k = 0; k < 12; ++k) {
        if (k % tc.eval_stride == 0) {
            CHECK(std::isfinite(t.records[k].full_loss));
            CHECK(std::isfinite(t.records[k].full_accuracy));
        } else {
            CHECK(std::isnan(t.records[k].full_loss));
        }
    }
    CHECK(std::isfinite(t.final_full_loss));
}

TEST_CASE("a saved trajectory reopens with identical state") {
    Dataset ds = micro_data();
    TrainConfig tc = micro_config(0.9, 15);
    auto model = make_model(tc.model);
    Trajectory t = train(*model, ds, tc);
    fs::path dir = fs::temp_directory_path() / "linesgd_traj_test";
    fs::remove_all(dir);
    nlohmann::ordered_json doc;
    doc["config"] = nlohmann::ordered_json::object();
    save_trajectory(dir, t, doc);

    OpenedTrajectory opened = open_trajectory(dir);
    CHECK(opened.param_count == t.param_count);
    CHECK(opened.data_fingerprint == t.data_fingerprint);
    CHECK(opened.snapshot_steps == std::vector<int>({0, 10, 15}));
    CHECK(opened.nearest_snapshot(9) == 0);
    CHECK(opened.nearest_snapshot(10) == 10);
    CHECK(opened.nearest_snapshot(14) == 10);
    REQUIRE(opened.steps.rows.size() == 15);
    CHECK(load_snapshot(opened, 10) == t.snapshots.at(10));
    CHECK(load_momentum(opened, 10) == t.momentum_buffers.at(10));

    // direction files round-trip
    store_direction(dir, 3, t.records[3].direction);
    CHECK(load_direction(dir, 3, t.param_count) == t.records[3].direction);

    // rerunning the same training yields byte-identical artifacts
    fs::path dir2 = fs::temp_directory_path() / "linesgd_traj_test2";
    fs::remove_all(dir2);
    save_trajectory(dir2, train(*model, ds, tc), doc);
    CHECK(read_text_file(dir / "steps.csv") == read_text_file(dir2 / "steps.csv"));
    CHECK(read_text_file(dir / "config.json") == read_text_file(dir2 / "config.json"));
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("invalid training configurations are rejected") {
    TrainConfig tc = micro_config(0.0, 10);
    tc.lr = 0.0;
    CHECK_THROWS_AS(tc.validate(), SpecError);
    tc = micro_config(1.0, 10);  // momentum must stay below 1
    CHECK_THROWS_AS(tc.validate(), SpecError);
}
