#pragma once
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "linesgd/dataset.hpp"
#include "linesgd/io_util.hpp"
#include "linesgd/model.hpp"

namespace linesgd {

struct TrainConfig {
    double lr{0.1};
    double momentum{0.0}; // classical heavy-ball, no dampening
    int steps{2000};
    BatchPlan plan;
    ModelSpec model;
    std::uint64_t master_seed{0};
    int eval_stride{10};     // full-dataset loss/accuracy cadence
    int snapshot_stride{100};

    void validate() const;
};

struct StepRecord {
    int step{0};
    std::vector<std::int64_t> batch_indices; // direction-defining batch
    ParamVector direction;                   // unit vector, zero when degenerate
    double batch_loss{0.0};
    double grad_norm{0.0};
    double dir_deriv{0.0};      // grad . direction at the origin
    double momentum_norm{0.0};  // buffer norm after folding in this gradient
    bool zero_direction{false};
    // Full-dataset metrics at the step's origin; NaN off the eval stride.
    double full_loss{std::numeric_limits<double>::quiet_NaN()};
    double full_accuracy{std::numeric_limits<double>::quiet_NaN()};
};

struct Trajectory {
    TrainConfig config;
    std::uint64_t data_fingerprint{0};
    int param_count{0};
    std::vector<StepRecord> records;
    // Keyed by step k: the state entering step k (k = steps is the final state).
    std::map<int, ParamVector> snapshots;
    std::map<int, ParamVector> momentum_buffers;
    double final_full_loss{std::numeric_limits<double>::quiet_NaN()};
    double final_full_accuracy{std::numeric_limits<double>::quiet_NaN()};
};

// buffer = beta * buffer + grad; params -= lr * buffer.
void sgd_update(ParamVector& params, ParamVector& buffer, const ParamVector& grad, double lr, double beta);

Trajectory train(const Model& model, const Dataset& ds, const TrainConfig& config);

// Bit-identical to the state train() had entering step k (0 <= k <= steps).
std::pair<ParamVector, ParamVector> replay_to_step(const Model& model, const Dataset& ds, const TrainConfig& config,
                                                   int k);
// Same, continuing from a known state entering base_step.
std::pair<ParamVector, ParamVector> replay_from(const Model& model, const Dataset& ds, const TrainConfig& config,
                                                int base_step, ParamVector params, ParamVector buffer, int k,
                                                std::vector<StepRecord>* out_records = nullptr);

// Recomputes the record of step k from the state entering it (params/buffer are
// advanced through the step).
StepRecord advance_step(const Model& model, const Dataset& ds, const TrainConfig& config, int k, ParamVector& params,
                        ParamVector& buffer);

// Directory layout: config.json, steps.csv, snapshots/step_<k>.f64le,
// momentum/step_<k>.f64le and, for scanned steps, directions/step_<k>.f64le.
void save_trajectory(const std::filesystem::path& dir, const Trajectory& t, const nlohmann::ordered_json& config_doc);

struct OpenedTrajectory {
    std::filesystem::path dir;
    nlohmann::ordered_json config_doc; // full config.json contents
    int param_count{0};
    std::uint64_t data_fingerprint{0};
    std::vector<int> snapshot_steps; // ascending, from the snapshots directory
    CsvTable steps;                  // parsed steps.csv

    // Largest snapshot step <= k.
    int nearest_snapshot(int k) const;
};

OpenedTrajectory open_trajectory(const std::filesystem::path& dir);

ParamVector load_snapshot(const OpenedTrajectory& t, int k);
ParamVector load_momentum(const OpenedTrajectory& t, int k);
// Appends snapshot + momentum files for step k if not already present.
void store_snapshot(const std::filesystem::path& dir, int k, const ParamVector& params, const ParamVector& buffer);
void store_direction(const std::filesystem::path& dir, int k, const ParamVector& direction);
ParamVector load_direction(const std::filesystem::path& dir, int k, int param_count);

} // namespace linesgd
