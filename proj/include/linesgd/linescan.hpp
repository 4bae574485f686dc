#pragma once
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "linesgd/dataset.hpp"
#include "linesgd/grid.hpp"
#include "linesgd/model.hpp"
#include "linesgd/trainer.hpp"

namespace linesgd {

enum class Granularity { Full, PerBatch, PerSample };
Granularity granularity_from_string(const std::string& s);
std::string to_string(Granularity g);

struct DirectionInfo {
    int step{0};
    std::string kind{"gradient"}; // "gradient" | "momentum"
    std::vector<std::int64_t> batch_indices;
    double grad_norm{0.0};
    double dir_deriv{0.0};
    bool zero_direction{false};
};

// Loss measurements along origin + s * direction over a grid. All aggregation
// is an ascending fixed-order mean over sample losses, so results do not
// depend on the parallel schedule.
struct LineScan {
    DirectionInfo direction;
    Grid grid;
    std::uint64_t dataset_fingerprint{0};
    std::string config_hash;

    std::vector<double> full;            // dataset-mean loss per grid point
    std::vector<std::uint8_t> full_mask; // 1 where the value is non-finite
    std::vector<double> defining;        // mean over the direction-defining batch

    std::vector<std::vector<std::int64_t>> batch_sets; // epoch partition (per-batch granularity)
    std::vector<std::vector<double>> batch_curves;

    Eigen::MatrixXd per_sample; // n_samples x n_grid (per-sample granularity), else 0x0

    bool invalid{false}; // more than 10% of the full curve masked
    Granularity granularity{Granularity::Full};

    double masked_fraction() const;
    bool has_per_sample() const { return per_sample.size() > 0; }
};

LineScan scan_line(const Model& model, const ParamVector& origin, const StepRecord& record, const Grid& grid,
                   const Dataset& ds, Granularity granularity = Granularity::Full, int threads = 1,
                   std::vector<std::vector<std::int64_t>> batch_sets = {}, const std::string& kind = "gradient");

// Columnwise mean of the per-sample matrix over the given rows.
std::vector<double> aggregate(const LineScan& scan, std::span<const std::int64_t> indices);

// One scan per negative-unit-gradient direction of K mini-batches drawn from
// consecutive epochs of the plan, all from the same origin.
std::vector<LineScan> fan_scan(const Model& model, const ParamVector& origin, int K, const Dataset& ds,
                               const BatchPlan& plan, const Grid& grid, Granularity granularity = Granularity::Full,
                               int threads = 1);

// Archive layout inside step_dir: manifest.json, full.csv (s,loss,masked),
// batches.csv (defining + optional per-batch columns), per_sample.f64le.
void save_scan(const std::filesystem::path& step_dir, const LineScan& scan);
LineScan load_scan(const std::filesystem::path& step_dir);

} // namespace linesgd
