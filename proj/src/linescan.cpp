#include "linesgd/linescan.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "linesgd/io_util.hpp"
#include "linesgd/parallel.hpp"

namespace linesgd {

Granularity granularity_from_string(const std::string& s) {
    if (s == "full") return Granularity::Full;
    if (s == "per_batch") return Granularity::PerBatch;
    if (s == "per_sample") return Granularity::PerSample;
    throw SpecError("unknown granularity: '" + s + "' (expected full, per_batch or per_sample)");
}

std::string to_string(Granularity g) {
    switch (g) {
        case Granularity::Full: return "full";
        case Granularity::PerBatch: return "per_batch";
        default: return "per_sample";
    }
}

double LineScan::masked_fraction() const {
    if (full_mask.empty()) return 0.0;
    std::size_t masked = 0;
    for (const std::uint8_t m : full_mask) masked += m;
    return static_cast<double>(masked) / static_cast<double>(full_mask.size());
}

namespace {

// Ascending fixed-order mean over a subset of precomputed sample losses.
double subset_mean(const std::vector<double>& losses, const std::vector<std::int64_t>& indices) {
    double sum = 0.0;
    for (const std::int64_t i : indices) sum += losses[static_cast<std::size_t>(i)];
    return sum / static_cast<double>(indices.size());
}

std::vector<std::int64_t> sorted_checked(std::span<const std::int64_t> indices, int n) {
    std::vector<std::int64_t> out(indices.begin(), indices.end());
    std::sort(out.begin(), out.end());
    for (const std::int64_t i : out)
        if (i < 0 || i >= n) throw SpecError("sample index out of range: " + std::to_string(i));
    return out;
}

} // namespace

LineScan scan_line(const Model& model, const ParamVector& origin, const StepRecord& record, const Grid& grid,
                   const Dataset& ds, Granularity granularity, int threads,
                   std::vector<std::vector<std::int64_t>> batch_sets, const std::string& kind) {
    if (origin.size() != model.param_count())
        throw SpecError("origin length " + std::to_string(origin.size()) + " does not match the model's " +
                        std::to_string(model.param_count()) + " parameters");
    const ParamVector& d = record.direction;
    if (!record.zero_direction) {
        if (d.size() != origin.size()) throw SpecError("direction length does not match the origin");
        if (std::abs(d.norm() - 1.0) > 1e-9) throw SpecError("scan direction is not unit length");
    }

    LineScan out;
    out.direction = {record.step,     kind, record.batch_indices, record.grad_norm, record.dir_deriv,
                     record.zero_direction};
    out.grid = grid;
    out.dataset_fingerprint = ds.fingerprint;
    out.granularity = granularity;

    const int count = grid.count();
    const int n = ds.n();
    out.full.assign(static_cast<std::size_t>(count), 0.0);
    out.full_mask.assign(static_cast<std::size_t>(count), 0);
    out.defining.assign(static_cast<std::size_t>(count), 0.0);
    const std::vector<std::int64_t> defining = sorted_checked(record.batch_indices, n);

    if (granularity == Granularity::PerBatch) {
        out.batch_sets = std::move(batch_sets);
        for (std::vector<std::int64_t>& set : out.batch_sets) set = sorted_checked(set, n);
        out.batch_curves.assign(out.batch_sets.size(), std::vector<double>(static_cast<std::size_t>(count), 0.0));
    } else if (granularity == Granularity::PerSample) {
        out.per_sample.resize(n, count);
    }

    // Each grid point writes only to its own slots and reduces samples in
    // ascending order, so the thread schedule cannot affect the result.
    auto body = [&](int i) {
        static thread_local std::vector<double> buf;
        buf.resize(static_cast<std::size_t>(n));
        const double s = grid.points[static_cast<std::size_t>(i)];
        const ParamVector theta = record.zero_direction ? origin : axpy_point(origin, s, d);
        model.per_sample_losses(theta, ds.features, ds.labels, std::span<double>(buf));
        const double mean = ordered_mean(buf);
        out.full[static_cast<std::size_t>(i)] = mean;
        out.full_mask[static_cast<std::size_t>(i)] = std::isfinite(mean) ? 0 : 1;
        out.defining[static_cast<std::size_t>(i)] = subset_mean(buf, defining);
        for (std::size_t b = 0; b < out.batch_sets.size(); ++b)
            out.batch_curves[b][static_cast<std::size_t>(i)] = subset_mean(buf, out.batch_sets[b]);
        if (granularity == Granularity::PerSample)
            for (int r = 0; r < n; ++r) out.per_sample(r, i) = buf[static_cast<std::size_t>(r)];
    };
    run_workers(threads, count, body);

    out.invalid = 10 * std::count(out.full_mask.begin(), out.full_mask.end(), std::uint8_t{1}) > count;
    return out;
}

std::vector<double> aggregate(const LineScan& scan, std::span<const std::int64_t> indices) {
    if (!scan.has_per_sample())
        throw CapabilityError("scan has no per-sample matrix; rerun the scan with per-sample granularity");
    if (indices.empty()) throw SpecError("aggregate: empty index set");
    const std::vector<std::int64_t> rows = sorted_checked(indices, static_cast<int>(scan.per_sample.rows()));
    std::vector<double> curve(static_cast<std::size_t>(scan.grid.count()));
    for (int c = 0; c < scan.grid.count(); ++c) {
        double sum = 0.0;
        for (const std::int64_t r : rows) sum += scan.per_sample(static_cast<Eigen::Index>(r), c);
        curve[static_cast<std::size_t>(c)] = sum / static_cast<double>(rows.size());
    }
    return curve;
}

std::vector<LineScan> fan_scan(const Model& model, const ParamVector& origin, int K, const Dataset& ds,
                               const BatchPlan& plan, const Grid& grid, Granularity granularity, int threads) {
    if (K < 2) throw SpecError("fan requires at least 2 directions");

    std::vector<std::vector<std::int64_t>> sets;
    for (std::int64_t epoch = plan.epoch; static_cast<int>(sets.size()) < K; ++epoch) {
        BatchPlan p = plan;
        p.epoch = epoch;
        for (std::vector<std::int64_t>& b : batches(ds.n(), p)) {
            sets.push_back(std::move(b));
            if (static_cast<int>(sets.size()) == K) break;
        }
    }

    std::vector<LineScan> scans;
    scans.reserve(static_cast<std::size_t>(K));
    for (int j = 0; j < K; ++j) {
        const SampleBatch batch = ds.gather(sets[static_cast<std::size_t>(j)]);
        const LossGrad lg = batch_loss_and_grad(model, origin, batch);
        StepRecord rec;
        rec.step = j;
        rec.batch_indices = batch.indices;
        rec.batch_loss = lg.loss;
        rec.grad_norm = lg.grad.norm();
        if (rec.grad_norm < 1e-15) {
            rec.zero_direction = true;
            rec.direction = ParamVector::Zero(origin.size());
        } else {
            rec.direction = -lg.grad / rec.grad_norm;
            rec.dir_deriv = lg.grad.dot(rec.direction);
        }
        rec.momentum_norm = rec.grad_norm;
        scans.push_back(scan_line(model, origin, rec, grid, ds, granularity, threads));
    }
    return scans;
}

void save_scan(const std::filesystem::path& step_dir, const LineScan& scan) {
    std::filesystem::create_directories(step_dir);

    nlohmann::ordered_json m;
    m["format"] = "linescan-v1";
    m["step"] = scan.direction.step;
    m["direction_kind"] = scan.direction.kind;
    m["zero_direction"] = scan.direction.zero_direction;
    m["grad_norm"] = scan.direction.grad_norm;
    m["dir_deriv"] = scan.direction.dir_deriv;
    m["batch_indices"] = scan.direction.batch_indices;
    m["grid"] = {{"lo", scan.grid.lo},
                 {"hi", scan.grid.hi},
                 {"resolution", scan.grid.resolution},
                 {"count", scan.grid.count()},
                 {"snap", "lo rounded up to a multiple of the resolution"}};
    m["granularity"] = to_string(scan.granularity);
    m["dataset_fingerprint"] = hex_u64(scan.dataset_fingerprint);
    m["config_hash"] = scan.config_hash;
    m["masked_fraction"] = scan.masked_fraction();
    m["invalid"] = scan.invalid;
    if (scan.granularity == Granularity::PerBatch) m["batch_sets"] = scan.batch_sets;
    if (scan.has_per_sample()) m["per_sample_rows"] = static_cast<int>(scan.per_sample.rows());
    write_text_file(step_dir / "manifest.json", m.dump(2) + "\n");

    std::string full = "s,loss,masked\n";
    for (int i = 0; i < scan.grid.count(); ++i) {
        full += fmt_double(scan.grid.points[static_cast<std::size_t>(i)]);
        full += ',';
        full += fmt_double(scan.full[static_cast<std::size_t>(i)]);
        full += ',';
        full += scan.full_mask[static_cast<std::size_t>(i)] ? '1' : '0';
        full += '\n';
    }
    write_text_file(step_dir / "full.csv", full);

    std::string batches_csv = "s,defining";
    for (std::size_t b = 0; b < scan.batch_curves.size(); ++b) batches_csv += ",batch_" + std::to_string(b);
    batches_csv += '\n';
    for (int i = 0; i < scan.grid.count(); ++i) {
        batches_csv += fmt_double(scan.grid.points[static_cast<std::size_t>(i)]);
        batches_csv += ',';
        batches_csv += fmt_double(scan.defining[static_cast<std::size_t>(i)]);
        for (std::size_t b = 0; b < scan.batch_curves.size(); ++b) {
            batches_csv += ',';
            batches_csv += fmt_double(scan.batch_curves[b][static_cast<std::size_t>(i)]);
        }
        batches_csv += '\n';
    }
    write_text_file(step_dir / "batches.csv", batches_csv);

    if (scan.has_per_sample()) {
        const Eigen::Index rows = scan.per_sample.rows(), cols = scan.per_sample.cols();
        std::vector<double> flat(static_cast<std::size_t>(rows * cols));
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c)
                flat[static_cast<std::size_t>(r * cols + c)] = scan.per_sample(r, c);
        write_f64le(step_dir / "per_sample.f64le", flat);
    }
}

LineScan load_scan(const std::filesystem::path& step_dir) {
    const std::filesystem::path manifest_path = step_dir / "manifest.json";
    nlohmann::ordered_json m;
    try {
        m = nlohmann::ordered_json::parse(read_text_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError(manifest_path.string() + ": " + e.what());
    }
    if (m.value("format", "") != "linescan-v1")
        throw IntegrityError(manifest_path.string() + ": not a line-scan manifest");

    LineScan scan;
    scan.direction.step = m.at("step").get<int>();
    scan.direction.kind = m.at("direction_kind").get<std::string>();
    scan.direction.zero_direction = m.at("zero_direction").get<bool>();
    scan.direction.grad_norm = m.at("grad_norm").get<double>();
    scan.direction.dir_deriv = m.at("dir_deriv").get<double>();
    scan.direction.batch_indices = m.at("batch_indices").get<std::vector<std::int64_t>>();
    const auto& g = m.at("grid");
    scan.grid = make_grid(g.at("lo").get<double>(), g.at("hi").get<double>(), g.at("resolution").get<double>());
    if (scan.grid.count() != g.at("count").get<int>())
        throw IntegrityError(manifest_path.string() + ": grid count " + std::to_string(g.at("count").get<int>()) +
                             " does not match the reconstructed grid (" + std::to_string(scan.grid.count()) + ")");
    scan.granularity = granularity_from_string(m.at("granularity").get<std::string>());
    scan.dataset_fingerprint = parse_hex_u64(m.at("dataset_fingerprint").get<std::string>());
    scan.config_hash = m.at("config_hash").get<std::string>();
    scan.invalid = m.at("invalid").get<bool>();
    if (m.contains("batch_sets")) scan.batch_sets = m.at("batch_sets").get<std::vector<std::vector<std::int64_t>>>();

    const CsvTable full = read_csv(step_dir / "full.csv");
    if (static_cast<int>(full.rows.size()) != scan.grid.count())
        throw IntegrityError((step_dir / "full.csv").string() + ": " + std::to_string(full.rows.size()) +
                             " rows for a " + std::to_string(scan.grid.count()) + "-point grid");
    scan.full.resize(full.rows.size());
    scan.full_mask.resize(full.rows.size());
    for (std::size_t i = 0; i < full.rows.size(); ++i) {
        if (parse_double(full.rows[i][0]) != scan.grid.points[i])
            throw IntegrityError((step_dir / "full.csv").string() + ": grid point mismatch in row " +
                                 std::to_string(i + 2));
        scan.full[i] = parse_double(full.rows[i][1]);
        scan.full_mask[i] = full.rows[i][2] == "1" ? 1 : 0;
    }

    const CsvTable batches_csv = read_csv(step_dir / "batches.csv");
    if (static_cast<int>(batches_csv.rows.size()) != scan.grid.count())
        throw IntegrityError((step_dir / "batches.csv").string() + ": row count mismatch");
    const std::size_t batch_cols = batches_csv.header.size() - 2;
    if (batch_cols != scan.batch_sets.size())
        throw IntegrityError((step_dir / "batches.csv").string() + ": " + std::to_string(batch_cols) +
                             " batch columns for " + std::to_string(scan.batch_sets.size()) + " recorded batch sets");
    scan.defining.resize(batches_csv.rows.size());
    scan.batch_curves.assign(batch_cols, std::vector<double>(batches_csv.rows.size()));
    for (std::size_t i = 0; i < batches_csv.rows.size(); ++i) {
        scan.defining[i] = parse_double(batches_csv.rows[i][1]);
        for (std::size_t b = 0; b < batch_cols; ++b) scan.batch_curves[b][i] = parse_double(batches_csv.rows[i][b + 2]);
    }

    const std::filesystem::path per_sample_path = step_dir / "per_sample.f64le";
    if (std::filesystem::exists(per_sample_path)) {
        const std::vector<double> flat = read_f64le(per_sample_path);
        const int rows = m.value("per_sample_rows", 0);
        const int cols = scan.grid.count();
        if (rows <= 0 || static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) != flat.size())
            throw IntegrityError(per_sample_path.string() + ": size does not match per_sample_rows x grid count");
        scan.per_sample.resize(rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
                scan.per_sample(r, c) = flat[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) +
                                             static_cast<std::size_t>(c)];
    }
    return scan;
}

} // namespace linesgd
