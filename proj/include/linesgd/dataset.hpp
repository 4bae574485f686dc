#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "linesgd/model.hpp"

namespace linesgd {

struct Dataset {
    Eigen::MatrixXd features; // n x dim
    std::vector<int> labels;
    int class_count{0};
    std::uint64_t fingerprint{0};

    int n() const { return static_cast<int>(features.rows()); }
    int dim() const { return static_cast<int>(features.cols()); }

    SampleBatch gather(std::span<const std::int64_t> indices) const;
    void refingerprint();
};

// Class-conditioned Gaussian blobs around seeded unit-direction centers.
// Labels cycle through the classes, so per-class counts differ by at most one.
Dataset synth_blobs(int n, int classes, int dim, double spread, std::uint64_t seed);

enum class DataFormat { Idx, Cifar10Bin, Csv };
DataFormat data_format_from_string(const std::string& s);
std::string to_string(DataFormat f);

// Idx expects the images file; the labels file is derived from the path
// (idx3 -> idx1, images -> labels). Pixel formats are scaled to [0,1].
Dataset load_dataset(DataFormat format, const std::filesystem::path& path);

// Per-feature (x - mean) / sd using the set's own statistics. Constant
// features are left untouched.
void standardize(Dataset& ds);

// Stratified seed-deterministic subset of size round(fraction * n).
Dataset subset(const Dataset& ds, double fraction, std::uint64_t seed);

struct BatchPlan {
    int batch_size{128};
    std::uint64_t shuffle_seed{0};
    std::int64_t epoch{0};
};

int batches_per_epoch(int n, int batch_size);

// Seeded Fisher-Yates permutation keyed by (seed, epoch), chunked into batches
// (last one may be short). Each batch's indices are reported in ascending
// order, the canonical reduction order.
std::vector<std::vector<std::int64_t>> batches(int n, const BatchPlan& plan);

} // namespace linesgd
