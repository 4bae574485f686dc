#include "linesgd/dataset.hpp"
#include "linesgd/io_util.hpp"
#include "linesgd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace linesgd {

SampleBatch Dataset::gather(std::span<const std::int64_t> indices) const {
    SampleBatch b;
    b.indices.assign(indices.begin(), indices.end());
    b.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
    b.labels.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::int64_t idx = indices[i];
        if (idx < 0 || idx >= n()) throw SpecError("sample index out of range: " + std::to_string(idx));
        b.features.row(static_cast<Eigen::Index>(i)) = features.row(idx);
        b.labels[i] = labels[static_cast<std::size_t>(idx)];
    }
    return b;
}

void Dataset::refingerprint() {
    std::uint64_t h = fnv1a64(&class_count, sizeof(class_count));
    const int rows = n(), cols = dim();
    h = fnv1a64(&rows, sizeof(rows), h);
    h = fnv1a64(&cols, sizeof(cols), h);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            const double v = features(i, j);
            h = fnv1a64(&v, sizeof(v), h);
        }
    h = fnv1a64(labels.data(), labels.size() * sizeof(int), h);
    fingerprint = h;
}

Dataset synth_blobs(int n, int classes, int dim, double spread, std::uint64_t seed) {
    if (classes < 1 || dim < 1) throw SpecError("synth_blobs: classes and dim must be positive");
    if (n < classes) throw SpecError("synth_blobs: n must be at least the class count");
    if (!(spread > 0.0)) throw SpecError("synth_blobs: spread must be positive");

    Rng rng(splitmix64(seed));
    constexpr double kCenterRadius = 3.0;
    Eigen::MatrixXd centers(classes, dim);
    for (int c = 0; c < classes; ++c) {
        Eigen::VectorXd v(dim);
        for (int j = 0; j < dim; ++j) v[j] = rng.normal();
        centers.row(c) = kCenterRadius * v.normalized();
    }

    Dataset ds;
    ds.features.resize(n, dim);
    ds.labels.resize(static_cast<std::size_t>(n));
    ds.class_count = classes;
    for (int i = 0; i < n; ++i) {
        const int c = i % classes;
        ds.labels[static_cast<std::size_t>(i)] = c;
        for (int j = 0; j < dim; ++j) ds.features(i, j) = centers(c, j) + spread * rng.normal();
    }
    ds.refingerprint();
    return ds;
}

DataFormat data_format_from_string(const std::string& s) {
    if (s == "idx") return DataFormat::Idx;
    if (s == "cifar10bin") return DataFormat::Cifar10Bin;
    if (s == "csv") return DataFormat::Csv;
    throw SpecError("unknown data format: '" + s + "' (expected idx, cifar10bin or csv)");
}

std::string to_string(DataFormat f) {
    switch (f) {
        case DataFormat::Idx: return "idx";
        case DataFormat::Cifar10Bin: return "cifar10bin";
        default: return "csv";
    }
}

namespace {

std::uint32_t read_be32(const std::string& data, std::size_t off, const std::string& file) {
    if (off + 4 > data.size())
        throw FormatError(file + ": truncated at byte " + std::to_string(off));
    return (static_cast<std::uint32_t>(static_cast<unsigned char>(data[off])) << 24) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(data[off + 1])) << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(data[off + 2])) << 8) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(data[off + 3]));
}

std::string hex32(std::uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "0x%08x", v);
    return buf;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

Dataset load_idx(const std::filesystem::path& images_path) {
    constexpr std::uint32_t kImagesMagic = 0x00000803;
    constexpr std::uint32_t kLabelsMagic = 0x00000801;

    const std::string img = read_text_file(images_path);
    const std::uint32_t magic = read_be32(img, 0, images_path.string());
    if (magic != kImagesMagic)
        throw FormatError(images_path.string() + ": bad magic at byte 0, expected " + hex32(kImagesMagic) +
                          ", found " + hex32(magic));
    const std::uint32_t n = read_be32(img, 4, images_path.string());
    const std::uint32_t rows = read_be32(img, 8, images_path.string());
    const std::uint32_t cols = read_be32(img, 12, images_path.string());
    const std::size_t expect = 16 + static_cast<std::size_t>(n) * rows * cols;
    if (img.size() != expect)
        throw FormatError(images_path.string() + ": expected " + std::to_string(expect) + " bytes, found " +
                          std::to_string(img.size()));

    std::string labels_name = replace_all(replace_all(images_path.filename().string(), "idx3", "idx1"), "images", "labels");
    const std::filesystem::path labels_path = images_path.parent_path() / labels_name;
    if (labels_path == images_path)
        throw FormatError(images_path.string() + ": cannot derive a labels file name (expected 'images'/'idx3' in it)");
    const std::string lab = read_text_file(labels_path);
    const std::uint32_t lmagic = read_be32(lab, 0, labels_path.string());
    if (lmagic != kLabelsMagic)
        throw FormatError(labels_path.string() + ": bad magic at byte 0, expected " + hex32(kLabelsMagic) +
                          ", found " + hex32(lmagic));
    const std::uint32_t ln = read_be32(lab, 4, labels_path.string());
    if (ln != n)
        throw FormatError(labels_path.string() + ": " + std::to_string(ln) + " labels for " + std::to_string(n) +
                          " images");
    if (lab.size() != 8 + static_cast<std::size_t>(ln))
        throw FormatError(labels_path.string() + ": truncated at byte " + std::to_string(lab.size()));

    Dataset ds;
    const int dim = static_cast<int>(rows * cols);
    ds.features.resize(static_cast<int>(n), dim);
    ds.labels.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        for (int j = 0; j < dim; ++j)
            ds.features(static_cast<int>(i), j) =
                static_cast<unsigned char>(img[16 + static_cast<std::size_t>(i) * dim + static_cast<std::size_t>(j)]) /
                255.0;
        ds.labels[i] = static_cast<unsigned char>(lab[8 + i]);
    }
    ds.class_count = ds.labels.empty() ? 1 : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
    ds.refingerprint();
    return ds;
}

Dataset load_cifar10bin(const std::filesystem::path& path) {
    constexpr std::size_t kRecordBytes = 3073; // 1 label byte + 32*32*3 pixels
    constexpr int kDim = 3072;
    constexpr int kClasses = 10;

    const std::string data = read_text_file(path);
    if (data.empty() || data.size() % kRecordBytes != 0)
        throw FormatError(path.string() + ": size " + std::to_string(data.size()) + " is not a positive multiple of " +
                          std::to_string(kRecordBytes) + " bytes");
    const std::size_t n = data.size() / kRecordBytes;

    Dataset ds;
    ds.features.resize(static_cast<int>(n), kDim);
    ds.labels.resize(n);
    ds.class_count = kClasses;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t off = i * kRecordBytes;
        const int label = static_cast<unsigned char>(data[off]);
        if (label >= kClasses)
            throw FormatError(path.string() + ": label " + std::to_string(label) + " out of range at byte " +
                              std::to_string(off));
        ds.labels[i] = label;
        for (int j = 0; j < kDim; ++j)
            ds.features(static_cast<int>(i), j) =
                static_cast<unsigned char>(data[off + 1 + static_cast<std::size_t>(j)]) / 255.0;
    }
    ds.refingerprint();
    return ds;
}

Dataset load_csv(const std::filesystem::path& path) {
    const CsvTable t = read_csv(path);
    if (t.header.empty() || t.header[0] != "label")
        throw FormatError(path.string() + ": first CSV column must be 'label'");
    const int dim = static_cast<int>(t.header.size()) - 1;
    if (dim < 1) throw FormatError(path.string() + ": no feature columns");
    if (t.rows.empty()) throw FormatError(path.string() + ": no data rows");

    Dataset ds;
    ds.features.resize(static_cast<int>(t.rows.size()), dim);
    ds.labels.resize(t.rows.size());
    int max_label = 0;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        if (static_cast<int>(t.rows[i].size()) != dim + 1)
            throw FormatError(path.string() + ": row " + std::to_string(i + 2) + " has " +
                              std::to_string(t.rows[i].size()) + " fields, expected " + std::to_string(dim + 1));
        const long long label = parse_int(t.rows[i][0]);
        if (label < 0) throw FormatError(path.string() + ": negative label in row " + std::to_string(i + 2));
        ds.labels[i] = static_cast<int>(label);
        max_label = std::max(max_label, static_cast<int>(label));
        for (int j = 0; j < dim; ++j)
            ds.features(static_cast<int>(i), j) = parse_double(t.rows[i][static_cast<std::size_t>(j) + 1]);
    }
    ds.class_count = max_label + 1;
    ds.refingerprint();
    return ds;
}

} // namespace

Dataset load_dataset(DataFormat format, const std::filesystem::path& path) {
    switch (format) {
        case DataFormat::Idx: return load_idx(path);
        case DataFormat::Cifar10Bin: return load_cifar10bin(path);
        default: return load_csv(path);
    }
}

void standardize(Dataset& ds) {
    for (int j = 0; j < ds.dim(); ++j) {
        const double mean = ds.features.col(j).mean();
        const double var = (ds.features.col(j).array() - mean).square().mean();
        const double sd = std::sqrt(var);
        if (sd < 1e-12) continue;
        ds.features.col(j) = (ds.features.col(j).array() - mean) / sd;
    }
    ds.refingerprint();
}

Dataset subset(const Dataset& ds, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0) || fraction > 1.0) throw SpecError("subset: fraction must be in (0, 1]");
    const long long target = std::llround(fraction * ds.n());
    if (target < ds.class_count)
        throw SpecError("subset: fraction * n is below the class count");

    std::vector<std::vector<std::int64_t>> by_class(static_cast<std::size_t>(ds.class_count));
    for (int i = 0; i < ds.n(); ++i) by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);

    // floor share per class, remainder to the largest fractional parts
    std::vector<long long> take(by_class.size());
    std::vector<std::pair<double, int>> frac;
    long long assigned = 0;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        const double share = fraction * static_cast<double>(by_class[c].size());
        take[c] = static_cast<long long>(std::floor(share));
        assigned += take[c];
        frac.push_back({share - std::floor(share), static_cast<int>(c)});
    }
    std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; assigned < target && i < frac.size(); ++i) {
        const auto c = static_cast<std::size_t>(frac[i].second);
        if (take[c] < static_cast<long long>(by_class[c].size())) {
            ++take[c];
            ++assigned;
        }
    }

    Rng rng(splitmix64(seed));
    std::vector<std::int64_t> chosen;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        std::vector<std::int64_t> pool = by_class[c];
        rng.shuffle(pool);
        chosen.insert(chosen.end(), pool.begin(), pool.begin() + take[c]);
    }
    std::sort(chosen.begin(), chosen.end());

    Dataset out;
    const SampleBatch b = ds.gather(chosen);
    out.features = b.features;
    out.labels = b.labels;
    out.class_count = ds.class_count;
    out.refingerprint();
    return out;
}

int batches_per_epoch(int n, int batch_size) { return (n + batch_size - 1) / batch_size; }

std::vector<std::vector<std::int64_t>> batches(int n, const BatchPlan& plan) {
    if (plan.batch_size < 1) throw SpecError("batch size must be positive");
    if (plan.batch_size > n) throw SpecError("batch size exceeds dataset size");
    if (plan.epoch < 0) throw SpecError("epoch must be nonnegative");

    std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(splitmix64(plan.shuffle_seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(plan.epoch + 1)));
    rng.shuffle(perm);

    std::vector<std::vector<std::int64_t>> out;
    for (int start = 0; start < n; start += plan.batch_size) {
        const int end = std::min(n, start + plan.batch_size);
        std::vector<std::int64_t> b(perm.begin() + start, perm.begin() + end);
        std::sort(b.begin(), b.end());
        out.push_back(std::move(b));
    }
    return out;
}

} // namespace linesgd
