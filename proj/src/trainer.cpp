#include "linesgd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "linesgd/io_util.hpp"

namespace linesgd {

namespace {

std::filesystem::path step_file(const std::filesystem::path& dir, const char* sub, int k) {
    return dir / sub / ("step_" + std::to_string(k) + ".f64le");
}

ParamVector load_param_file(const std::filesystem::path& p, int param_count) {
    const std::vector<double> v = read_f64le(p);
    if (static_cast<int>(v.size()) != param_count)
        throw IntegrityError(p.string() + ": " + std::to_string(v.size()) + " values, expected " +
                             std::to_string(param_count));
    return Eigen::Map<const ParamVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

} // namespace

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw SpecError("learning rate must be positive");
    if (!(momentum >= 0.0) || momentum >= 1.0) throw SpecError("momentum must be in [0, 1)");
    if (steps < 1) throw SpecError("steps must be positive");
    if (plan.batch_size < 1) throw SpecError("batch size must be positive");
    if (eval_stride < 1) throw SpecError("eval stride must be positive");
    if (snapshot_stride < 1) throw SpecError("snapshot stride must be positive");
    model.validate();
}

void sgd_update(ParamVector& params, ParamVector& buffer, const ParamVector& grad, double lr, double beta) {
    if (params.size() != grad.size() || buffer.size() != grad.size())
        throw SpecError("sgd_update: mismatched vector lengths");
    buffer = beta * buffer + grad;
    params -= lr * buffer;
}

StepRecord advance_step(const Model& model, const Dataset& ds, const TrainConfig& config, int k, ParamVector& params,
                        ParamVector& buffer) {
    const int bpe = batches_per_epoch(ds.n(), config.plan.batch_size);
    BatchPlan plan = config.plan;
    plan.epoch = k / bpe;
    const std::vector<std::vector<std::int64_t>> epoch_batches = batches(ds.n(), plan);
    const SampleBatch batch = ds.gather(epoch_batches[static_cast<std::size_t>(k % bpe)]);

    StepRecord rec;
    rec.step = k;
    rec.batch_indices = batch.indices;

    LossGrad lg;
    try {
        lg = batch_loss_and_grad(model, params, batch);
    } catch (const NumericError& e) {
        throw NumericError("training diverged at step " + std::to_string(k) + " (" + e.what() + "); last valid step is " +
                           std::to_string(k - 1));
    }
    if (!std::isfinite(lg.loss))
        throw NumericError("training diverged at step " + std::to_string(k) + "; last valid step is " +
                           std::to_string(k - 1));
    rec.batch_loss = lg.loss;
    rec.grad_norm = lg.grad.norm();

    sgd_update(params, buffer, lg.grad, config.lr, config.momentum);
    if (!params.allFinite())
        throw NumericError("non-finite parameters after update step " + std::to_string(k) + "; last valid step is " +
                           std::to_string(k - 1));

    rec.momentum_norm = buffer.norm();
    if (rec.momentum_norm < 1e-15) {
        rec.zero_direction = true;
        rec.direction = ParamVector::Zero(params.size());
        rec.dir_deriv = 0.0;
    } else {
        rec.direction = -buffer / rec.momentum_norm;
        rec.dir_deriv = lg.grad.dot(rec.direction);
    }
    return rec;
}

Trajectory train(const Model& model, const Dataset& ds, const TrainConfig& config) {
    config.validate();
    if (config.plan.batch_size > ds.n()) throw SpecError("batch size exceeds dataset size");
    if (config.model.kind == ModelKind::Mlp && config.model.feature_dim() != ds.dim())
        throw SpecError("model input dimension " + std::to_string(config.model.feature_dim()) +
                        " does not match dataset dimension " + std::to_string(ds.dim()));

    Trajectory t;
    t.config = config;
    t.data_fingerprint = ds.fingerprint;
    t.param_count = config.model.param_count();

    ParamVector params = init_model(config.model);
    ParamVector buffer = ParamVector::Zero(params.size());
    t.records.reserve(static_cast<std::size_t>(config.steps));

    for (int k = 0; k < config.steps; ++k) {
        if (k % config.snapshot_stride == 0) {
            t.snapshots[k] = params;
            t.momentum_buffers[k] = buffer;
        }
        double full_loss = std::numeric_limits<double>::quiet_NaN();
        double full_acc = std::numeric_limits<double>::quiet_NaN();
        if (k % config.eval_stride == 0) {
            full_loss = model.batch_loss(params, ds.features, ds.labels);
            full_acc = model.accuracy(params, ds.features, ds.labels);
            if (!std::isfinite(full_loss))
                throw NumericError("training diverged at step " + std::to_string(k) + "; last valid step is " +
                                   std::to_string(k - 1));
        }
        StepRecord rec = advance_step(model, ds, config, k, params, buffer);
        rec.full_loss = full_loss;
        rec.full_accuracy = full_acc;
        t.records.push_back(std::move(rec));
    }
    t.snapshots[config.steps] = params;
    t.momentum_buffers[config.steps] = buffer;
    t.final_full_loss = model.batch_loss(params, ds.features, ds.labels);
    t.final_full_accuracy = model.accuracy(params, ds.features, ds.labels);
    return t;
}

std::pair<ParamVector, ParamVector> replay_to_step(const Model& model, const Dataset& ds, const TrainConfig& config,
                                                   int k) {
    config.validate();
    if (k < 0 || k > config.steps)
        throw SpecError("replay step " + std::to_string(k) + " out of range [0, " + std::to_string(config.steps) + "]");
    ParamVector params = init_model(config.model);
    ParamVector buffer = ParamVector::Zero(params.size());
    return replay_from(model, ds, config, 0, std::move(params), std::move(buffer), k);
}

std::pair<ParamVector, ParamVector> replay_from(const Model& model, const Dataset& ds, const TrainConfig& config,
                                                int base_step, ParamVector params, ParamVector buffer, int k,
                                                std::vector<StepRecord>* out_records) {
    if (base_step > k) throw SpecError("replay base step is past the target step");
    for (int i = base_step; i < k; ++i) {
        StepRecord rec = advance_step(model, ds, config, i, params, buffer);
        if (out_records) out_records->push_back(std::move(rec));
    }
    return {std::move(params), std::move(buffer)};
}

void save_trajectory(const std::filesystem::path& dir, const Trajectory& t, const nlohmann::ordered_json& config_doc) {
    std::filesystem::create_directories(dir / "snapshots");
    std::filesystem::create_directories(dir / "momentum");

    nlohmann::ordered_json doc = config_doc;
    doc["format"] = "trajectory-v1";
    doc["param_count"] = t.param_count;
    doc["data_fingerprint"] = hex_u64(t.data_fingerprint);
    doc["summary"] = {{"final_step", t.config.steps},
                      {"final_full_loss", t.final_full_loss},
                      {"final_full_accuracy", t.final_full_accuracy}};
    write_text_file(dir / "config.json", doc.dump(2) + "\n");

    std::string csv = "step,batch_loss,grad_norm,dir_deriv,momentum_norm,zero_direction,full_loss,full_accuracy\n";
    for (const StepRecord& r : t.records) {
        csv += std::to_string(r.step);
        csv += ',';
        csv += fmt_double(r.batch_loss);
        csv += ',';
        csv += fmt_double(r.grad_norm);
        csv += ',';
        csv += fmt_double(r.dir_deriv);
        csv += ',';
        csv += fmt_double(r.momentum_norm);
        csv += ',';
        csv += r.zero_direction ? '1' : '0';
        csv += ',';
        csv += fmt_double(r.full_loss);
        csv += ',';
        csv += fmt_double(r.full_accuracy);
        csv += '\n';
    }
    write_text_file(dir / "steps.csv", csv);

    for (const auto& [k, params] : t.snapshots)
        write_f64le(step_file(dir, "snapshots", k), std::span<const double>(params.data(), static_cast<std::size_t>(params.size())));
    for (const auto& [k, buf] : t.momentum_buffers)
        write_f64le(step_file(dir, "momentum", k), std::span<const double>(buf.data(), static_cast<std::size_t>(buf.size())));
}

int OpenedTrajectory::nearest_snapshot(int k) const {
    auto it = std::upper_bound(snapshot_steps.begin(), snapshot_steps.end(), k);
    if (it == snapshot_steps.begin()) throw IntegrityError(dir.string() + ": no snapshot at or before step " + std::to_string(k));
    return *(it - 1);
}

OpenedTrajectory open_trajectory(const std::filesystem::path& dir) {
    OpenedTrajectory t;
    t.dir = dir;
    const std::filesystem::path cfg = dir / "config.json";
    try {
        t.config_doc = nlohmann::ordered_json::parse(read_text_file(cfg));
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError(cfg.string() + ": " + e.what());
    }
    if (t.config_doc.value("format", "") != "trajectory-v1")
        throw IntegrityError(cfg.string() + ": not a trajectory directory");
    t.param_count = t.config_doc.at("param_count").get<int>();
    t.data_fingerprint = parse_hex_u64(t.config_doc.at("data_fingerprint").get<std::string>());

    const std::filesystem::path snaps = dir / "snapshots";
    if (!std::filesystem::is_directory(snaps)) throw IntegrityError(snaps.string() + ": missing snapshots directory");
    for (const auto& entry : std::filesystem::directory_iterator(snaps)) {
        const std::string name = entry.path().filename().string();
        if (name.size() > 11 && name.rfind("step_", 0) == 0 && name.ends_with(".f64le"))
            t.snapshot_steps.push_back(static_cast<int>(parse_int(name.substr(5, name.size() - 11))));
    }
    std::sort(t.snapshot_steps.begin(), t.snapshot_steps.end());
    if (t.snapshot_steps.empty()) throw IntegrityError(snaps.string() + ": no snapshots found");

    t.steps = read_csv(dir / "steps.csv");
    return t;
}

ParamVector load_snapshot(const OpenedTrajectory& t, int k) {
    return load_param_file(step_file(t.dir, "snapshots", k), t.param_count);
}

ParamVector load_momentum(const OpenedTrajectory& t, int k) {
    return load_param_file(step_file(t.dir, "momentum", k), t.param_count);
}

void store_snapshot(const std::filesystem::path& dir, int k, const ParamVector& params, const ParamVector& buffer) {
    std::filesystem::create_directories(dir / "snapshots");
    std::filesystem::create_directories(dir / "momentum");
    write_f64le(step_file(dir, "snapshots", k), std::span<const double>(params.data(), static_cast<std::size_t>(params.size())));
    write_f64le(step_file(dir, "momentum", k), std::span<const double>(buffer.data(), static_cast<std::size_t>(buffer.size())));
}

void store_direction(const std::filesystem::path& dir, int k, const ParamVector& direction) {
    std::filesystem::create_directories(dir / "directions");
    write_f64le(step_file(dir, "directions", k),
                std::span<const double>(direction.data(), static_cast<std::size_t>(direction.size())));
}

ParamVector load_direction(const std::filesystem::path& dir, int k, int param_count) {
    return load_param_file(step_file(dir, "directions", k), param_count);
}

} // namespace linesgd
