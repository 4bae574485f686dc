#include "linesgd/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "linesgd/analysis.hpp"
#include "linesgd/batchsim.hpp"
#include "linesgd/dataset.hpp"
#include "linesgd/errors.hpp"
#include "linesgd/grid.hpp"
#include "linesgd/io_util.hpp"
#include "linesgd/linescan.hpp"
#include "linesgd/model.hpp"
#include "linesgd/runconfig.hpp"
#include "linesgd/strategies.hpp"
#include "linesgd/svgplot.hpp"
#include "linesgd/trainer.hpp"

namespace fs = std::filesystem;

namespace linesgd {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string step_dir_name(int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%06d", k);
  return buf;
}

RunConfig make_config(const std::string& config_path, const Overrides& overrides) {
  RunConfig cfg;
  if (!config_path.empty()) cfg.apply_file(config_path);
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  return cfg;
}

RunConfig config_from_trajectory(const OpenedTrajectory& traj, const Overrides& overrides) {
  if (!traj.config_doc.contains("config")) {
    throw IntegrityError((traj.dir / "config.json").string() + ": missing 'config' object");
  }
  RunConfig cfg;
  cfg.apply_json(traj.config_doc.at("config"));
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  return cfg;
}

// The hash recorded in scan manifests always refers to the training config as
// stored, so overrides at scan/analysis time cannot break the linkage.
std::string trajectory_hash(const OpenedTrajectory& traj) {
  return config_hash_of(traj.config_doc.at("config"));
}

Dataset rebuild_dataset(const RunConfig& cfg, const OpenedTrajectory& traj) {
  Dataset ds = cfg.build_dataset();
  if (ds.fingerprint != traj.data_fingerprint) {
    throw IntegrityError("dataset fingerprint mismatch: config rebuilds " + hex_u64(ds.fingerprint) +
                         " but " + (traj.dir / "config.json").string() + " records " +
                         hex_u64(traj.data_fingerprint));
  }
  return ds;
}

std::unique_ptr<Model> model_for(const RunConfig& cfg, const Dataset& ds) {
  ModelSpec spec = cfg.model_spec();
  if (spec.kind == ModelKind::Mlp) {
    if (spec.feature_dim() != ds.dim()) {
      throw SpecError("model.layers input width " + std::to_string(spec.feature_dim()) +
                      " does not match the dataset feature dimension " + std::to_string(ds.dim()));
    }
    if (spec.class_count() != ds.class_count) {
      throw SpecError("model.layers output width " + std::to_string(spec.class_count()) +
                      " does not match the dataset class count " + std::to_string(ds.class_count));
    }
  }
  return make_model(spec);
}

void check_param_count(const Model& model, const OpenedTrajectory& traj) {
  if (model.param_count() != traj.param_count) {
    throw IntegrityError((traj.dir / "config.json").string() + ": param_count " +
                         std::to_string(traj.param_count) + " does not match the rebuilt model (" +
                         std::to_string(model.param_count()) + ")");
  }
}

void write_run_config(const fs::path& out, const RunConfig& cfg) {
  write_text_file(out / "run_config.json", cfg.to_json().dump(2) + "\n");
}

std::vector<std::pair<int, fs::path>> list_scan_dirs(const fs::path& root) {
  if (!fs::is_directory(root)) throw SpecError("scan directory not found: " + root.string());
  std::vector<std::pair<int, fs::path>> out;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    std::string name = entry.path().filename().string();
    if (name.rfind("step_", 0) != 0) continue;
    try {
      out.emplace_back(static_cast<int>(parse_int(name.substr(5))), entry.path());
    } catch (const FormatError&) {
      continue;  // unrelated directory
    }
  }
  if (out.empty()) throw SpecError("no scan archives (step_*) under " + root.string());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<LineScan> load_archives(const fs::path& root, std::vector<int>* steps_out = nullptr) {
  std::vector<LineScan> scans;
  for (const auto& [step, dir] : list_scan_dirs(root)) {
    scans.push_back(load_scan(dir));
    if (steps_out) steps_out->push_back(step);
  }
  for (std::size_t i = 1; i < scans.size(); ++i) {
    const Grid& a = scans[0].grid;
    const Grid& b = scans[i].grid;
    if (a.lo != b.lo || a.resolution != b.resolution || a.count() != b.count()) {
      throw SpecError("mixed-grid archives under " + root.string() + ": step " +
                      std::to_string(scans[i].direction.step) + " differs from step " +
                      std::to_string(scans[0].direction.step));
    }
  }
  return scans;
}

// State entering step k, using the latest stored snapshot at or before k.
std::pair<ParamVector, ParamVector> state_at(const OpenedTrajectory& traj, const Model& model, const Dataset& ds,
                                             const TrainConfig& tc, int k) {
  int base = traj.nearest_snapshot(k);
  ParamVector params = load_snapshot(traj, base);
  ParamVector buffer = load_momentum(traj, base);
  for (int j = base; j < k; ++j) advance_step(model, ds, tc, j, params, buffer);
  return {std::move(params), std::move(buffer)};
}

// Origin and unit direction of line k, preferring files written by cmd_scan.
std::pair<ParamVector, ParamVector> line_state(const OpenedTrajectory& traj, const Model& model, const Dataset& ds,
                                               const TrainConfig& tc, int k) {
  bool have_snap = fs::exists(traj.dir / "snapshots" / ("step_" + std::to_string(k) + ".f64le"));
  bool have_dir = fs::exists(traj.dir / "directions" / ("step_" + std::to_string(k) + ".f64le"));
  if (have_snap && have_dir) {
    return {load_snapshot(traj, k), load_direction(traj.dir, k, traj.param_count)};
  }
  auto [params, buffer] = state_at(traj, model, ds, tc, k);
  ParamVector origin = params;
  StepRecord rec = advance_step(model, ds, tc, k, params, buffer);
  if (rec.zero_direction) {
    throw SpecError("step " + std::to_string(k) + " has a zero direction; it cannot define a line");
  }
  return {std::move(origin), std::move(rec.direction)};
}

std::string csv_cell(double v) { return fmt_double(v); }

void append_row(std::string& out, std::initializer_list<std::string> cells) {
  bool first = true;
  for (const auto& c : cells) {
    if (!first) out += ',';
    out += c;
    first = false;
  }
  out += '\n';
}

double finite_mean(const std::vector<double>& v) {
  double sum = 0.0;
  int n = 0;
  for (double x : v)
    if (std::isfinite(x)) {
      sum += x;
      ++n;
    }
  return n ? sum / n : kNaN;
}

std::vector<double> steps_as_x(const std::vector<int>& steps) {
  std::vector<double> x(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) x[i] = steps[i];
  return x;
}

// ---------------------------------------------------------------------------
// analysis products shared by cmd_analyze (computed before anything is written
// so a failure leaves no partial output directory)

struct AnalysisProducts {
  std::vector<int> steps;
  Window window{};
  int kernel{25};
  DistanceMatrixResult dm;
  std::vector<PolyFit> fit1, fit2;
  std::vector<ArgminResult> argmins;
  ProportionalitySeries prop;        // over the non-boundary subset
  std::vector<int> prop_steps;       // steps contributing to prop
  std::vector<double> grad_norms;    // per line
  int invalid_lines{0};
};

AnalysisProducts analyze_archives(const std::vector<LineScan>& scans, const std::vector<int>& steps, Window window,
                                  int kernel, int threads) {
  AnalysisProducts p;
  p.steps = steps;
  p.window = window;
  p.kernel = kernel;

  std::vector<Curve> curves;
  curves.reserve(scans.size());
  for (const auto& scan : scans) {
    curves.push_back(full_curve(scan));
    if (scan.invalid) ++p.invalid_lines;
    p.grad_norms.push_back(scan.direction.grad_norm);
  }

  p.dm = distance_matrix(curves, window, threads);

  std::vector<double> s_opts, norms;
  for (std::size_t i = 0; i < curves.size(); ++i) {
    Curve shifted = shift_to_zero(curves[i], window);
    p.fit1.push_back(polyfit(shifted, 1, window));
    p.fit2.push_back(polyfit(shifted, 2, window));
    ArgminResult am = argmin_refined(curves[i], window);
    p.argmins.push_back(am);
    if (!am.boundary) {
      s_opts.push_back(am.s_opt);
      norms.push_back(p.grad_norms[i]);
      p.prop_steps.push_back(steps[i]);
    }
  }
  p.prop = proportionality(s_opts, norms);
  return p;
}

void write_analysis_outputs(const fs::path& out, const std::vector<LineScan>& scans, const AnalysisProducts& p) {
  fs::create_directories(out / "lines");

  const auto& steps = p.steps;
  const int m = static_cast<int>(steps.size());

  std::string dm_csv = "step";
  for (int j = 0; j < m; ++j) dm_csv += "," + std::to_string(steps[j]);
  dm_csv += '\n';
  for (int i = 0; i < m; ++i) {
    dm_csv += std::to_string(steps[i]);
    for (int j = 0; j < m; ++j) dm_csv += "," + csv_cell(p.dm.matrix(i, j));
    dm_csv += '\n';
  }
  write_text_file(out / "distance_matrix.csv", dm_csv);

  std::string cm_csv = "step_a,step_b,mae\n";
  for (int i = 0; i + 1 < m; ++i) {
    append_row(cm_csv, {std::to_string(steps[i]), std::to_string(steps[i + 1]), csv_cell(p.dm.consecutive[i])});
  }
  write_text_file(out / "consecutive_mae.csv", cm_csv);

  std::string fits_csv = "step,a,b,c,mae1,mae2,rmse1,rmse2\n";
  for (int i = 0; i < m; ++i) {
    append_row(fits_csv, {std::to_string(steps[i]), csv_cell(p.fit2[i].a), csv_cell(p.fit2[i].b),
                          csv_cell(p.fit2[i].c), csv_cell(p.fit1[i].mae), csv_cell(p.fit2[i].mae),
                          csv_cell(p.fit1[i].rmse), csv_cell(p.fit2[i].rmse)});
  }
  write_text_file(out / "fits.csv", fits_csv);

  std::string prop_csv = "step,s_opt,grad_norm,ratio\n";
  for (std::size_t i = 0; i < p.prop_steps.size(); ++i) {
    append_row(prop_csv, {std::to_string(p.prop_steps[i]), csv_cell(p.prop.s_opt[i]),
                          csv_cell(p.prop.grad_norm[i]), csv_cell(p.prop.ratio[i])});
  }
  write_text_file(out / "proportionality.csv", prop_csv);

  // per-line loss curve plots
  for (int i = 0; i < m; ++i) {
    const LineScan& scan = scans[i];
    SvgChart chart;
    chart.title = "loss along the update-step line, step " + std::to_string(steps[i]);
    chart.x_label = "step size s";
    chart.y_label = "loss";
    SvgSeries full_s{"full data", scan.grid.points, scan.full};
    for (std::size_t j = 0; j < scan.full_mask.size(); ++j)
      if (scan.full_mask[j]) full_s.y[j] = kNaN;
    chart.series.push_back(std::move(full_s));
    chart.series.push_back({"defining batch", scan.grid.points, scan.defining});
    write_text_file(out / "lines" / (step_dir_name(steps[i]) + ".svg"), render_line_chart(chart));
  }

  write_text_file(out / "distance_matrix.svg",
                  render_heatmap("pairwise shape distance (MAE) between min-shifted loss curves", p.dm.matrix));

  std::vector<double> xs = steps_as_x(steps);
  {
    SvgChart chart;
    chart.title = "parabola coefficients per step (kernel " + std::to_string(p.kernel) + ")";
    chart.x_label = "step";
    chart.y_label = "coefficient";
    std::vector<double> curv(m), slope(m);
    for (int i = 0; i < m; ++i) {
      curv[i] = 2.0 * p.fit2[i].a;
      slope[i] = p.fit2[i].b;
    }
    chart.series.push_back({"curvature 2a", xs, moving_average(curv, p.kernel)});
    chart.series.push_back({"slope b", xs, moving_average(slope, p.kernel)});
    write_text_file(out / "fits.svg", render_line_chart(chart));
  }
  if (m > 1) {
    SvgChart chart;
    chart.title = "shape distance between consecutive scanned steps";
    chart.x_label = "step";
    chart.y_label = "MAE";
    std::vector<double> xs2(xs.begin() + 1, xs.end());
    chart.series.push_back({"consecutive MAE", xs2, p.dm.consecutive});
    write_text_file(out / "consecutive_mae.svg", render_line_chart(chart));
  }
  {
    SvgChart chart;
    chart.title = "locally optimal step size vs gradient norm";
    chart.x_label = "step";
    chart.y_label = "step size";
    std::vector<double> px = steps_as_x(p.prop_steps), fitted(p.prop.grad_norm.size());
    for (std::size_t i = 0; i < fitted.size(); ++i) fitted[i] = p.prop.c * p.prop.grad_norm[i];
    chart.series.push_back({"s_opt", px, p.prop.s_opt});
    chart.series.push_back({"c * grad_norm", px, fitted});
    write_text_file(out / "proportionality.svg", render_line_chart(chart));
  }

  // summary
  nlohmann::ordered_json summary;
  summary["format"] = "analysis-v1";
  summary["lines"] = m;
  summary["window"] = {{"lo", p.window.lo}, {"hi", p.window.hi}};
  summary["kernel"] = p.kernel;
  summary["invalid_lines"] = p.invalid_lines;
  int boundary = 0;
  for (const auto& am : p.argmins) boundary += am.boundary ? 1 : 0;
  summary["boundary_lines"] = boundary;
  summary["proportionality"] = {{"c", p.prop.c},
                                {"pearson", p.prop.pearson},
                                {"points", p.prop_steps.size()},
                                {"degenerate", p.prop.degenerate},
                                {"note", p.prop.note}};
  double offdiag_sum = 0.0;
  int offdiag_n = 0;
  auto block_mean = [&](int lo, int hi) {
    double s = 0.0;
    int n = 0;
    for (int i = lo; i < hi; ++i)
      for (int j = lo; j < hi; ++j)
        if (i != j) {
          s += p.dm.matrix(i, j);
          ++n;
        }
    return n ? s / n : kNaN;
  };
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      if (i != j) {
        offdiag_sum += p.dm.matrix(i, j);
        ++offdiag_n;
      }
  summary["distance"] = {{"mean_offdiag", offdiag_n ? offdiag_sum / offdiag_n : kNaN},
                         {"early_block_mean", block_mean(0, m / 2)},
                         {"late_block_mean", block_mean(m - m / 2, m)},
                         {"consecutive_mean", finite_mean(p.dm.consecutive)}};
  int nest_ok = 0;
  std::vector<double> r1(m), r2(m);
  for (int i = 0; i < m; ++i) {
    r1[i] = p.fit1[i].rmse;
    r2[i] = p.fit2[i].rmse;
    nest_ok += p.fit2[i].rmse <= p.fit1[i].rmse ? 1 : 0;
  }
  summary["fits"] = {{"rmse2_le_rmse1_fraction", m ? static_cast<double>(nest_ok) / m : kNaN},
                     {"mean_rmse1", finite_mean(r1)},
                     {"mean_rmse2", finite_mean(r2)},
                     {"first_curvature", m ? 2.0 * p.fit2.front().a : kNaN},
                     {"last_curvature", m ? 2.0 * p.fit2.back().a : kNaN},
                     {"first_slope", m ? p.fit2.front().b : kNaN},
                     {"last_slope", m ? p.fit2.back().b : kNaN}};
  write_text_file(out / "analysis_summary.json", summary.dump(2) + "\n");
}

}  // namespace

// ---------------------------------------------------------------------------

int cmd_train(const TrainArgs& args) {
  RunConfig cfg = make_config(args.config_path, args.overrides);
  if (args.dry_run) {
    std::cout << cfg.canonical_text();
    return 0;
  }
  if (args.out.empty()) throw SpecError("train requires --out");
  Dataset ds = cfg.build_dataset();
  auto model = model_for(cfg, ds);
  TrainConfig tc = cfg.train_config();
  Trajectory traj = train(*model, ds, tc);
  nlohmann::ordered_json doc;
  doc["config"] = cfg.to_json();
  save_trajectory(args.out, traj, doc);
  std::cout << "trained " << tc.steps << " steps: final full loss " << fmt_double(traj.final_full_loss)
            << ", accuracy " << fmt_double(traj.final_full_accuracy) << "\n"
            << "trajectory written to " << args.out << "\n";
  return 0;
}

int cmd_scan(const ScanArgs& args) {
  if (args.out.empty()) throw SpecError("scan requires --out");
  OpenedTrajectory traj = open_trajectory(args.traj);
  RunConfig cfg = config_from_trajectory(traj, args.overrides);
  Dataset ds = rebuild_dataset(cfg, traj);
  auto model = model_for(cfg, ds);
  check_param_count(*model, traj);
  TrainConfig tc = cfg.train_config();
  Grid grid = cfg.scan_grid();
  long long stride = cfg.get_int("scan.stride");
  if (stride < 1) throw SpecError("config key scan.stride must be >= 1");
  Granularity gran = granularity_from_string(cfg.get("scan.granularity"));
  std::set<long long> per_sample_steps;
  for (long long s : cfg.get_ints("scan.per_sample_steps")) per_sample_steps.insert(s);
  std::string chash = trajectory_hash(traj);
  std::string kind = tc.momentum > 0.0 ? "momentum" : "gradient";
  int bpe = batches_per_epoch(ds.n(), tc.plan.batch_size);

  fs::create_directories(args.out);
  write_run_config(args.out, cfg);

  auto [params, buffer] = state_at(traj, *model, ds, tc, 0);
  int pos = 0;  // state entering step pos
  int scanned = 0, invalid = 0, skipped = 0;
  for (int k = 0; k == 0 || k < tc.steps; k += static_cast<int>(stride)) {
    int ns = traj.nearest_snapshot(k);
    if (ns > pos) {
      params = load_snapshot(traj, ns);
      buffer = load_momentum(traj, ns);
      pos = ns;
    }
    while (pos < k) {
      advance_step(*model, ds, tc, pos, params, buffer);
      ++pos;
    }
    store_snapshot(traj.dir, k, params, buffer);
    ParamVector origin = params;
    StepRecord rec = advance_step(*model, ds, tc, k, params, buffer);
    pos = k + 1;
    if (rec.zero_direction) {
      ++skipped;
      continue;
    }
    store_direction(traj.dir, k, rec.direction);
    Granularity g = gran;
    if (per_sample_steps.count(k)) g = Granularity::PerSample;
    std::vector<std::vector<std::int64_t>> sets;
    if (g == Granularity::PerBatch) {
      BatchPlan plan = tc.plan;
      plan.epoch = k / bpe;
      sets = batches(ds.n(), plan);
    }
    LineScan scan = scan_line(*model, origin, rec, grid, ds, g, args.threads, std::move(sets), kind);
    scan.config_hash = chash;
    save_scan(fs::path(args.out) / step_dir_name(k), scan);
    ++scanned;
    if (scan.invalid) ++invalid;
  }
  std::cout << "scanned " << scanned << " lines (" << invalid << " invalid, " << skipped
            << " zero-direction) into " << args.out << "\n";
  return 0;
}

int cmd_fan(const FanArgs& args) {
  if (args.out.empty()) throw SpecError("fan requires --out");
  OpenedTrajectory traj = open_trajectory(args.traj);
  RunConfig cfg = config_from_trajectory(traj, args.overrides);
  Dataset ds = rebuild_dataset(cfg, traj);
  auto model = model_for(cfg, ds);
  check_param_count(*model, traj);
  TrainConfig tc = cfg.train_config();
  Grid grid = cfg.scan_grid();
  int count = static_cast<int>(cfg.get_int("fan.count"));
  int origin_step = static_cast<int>(cfg.get_int("fan.step"));
  if (origin_step < 0 || origin_step > tc.steps) {
    throw SpecError("config key fan.step must lie in [0, train.steps]");
  }
  std::string chash = trajectory_hash(traj);
  int bpe = batches_per_epoch(ds.n(), tc.plan.batch_size);

  auto [params, buffer] = state_at(traj, *model, ds, tc, origin_step);
  BatchPlan plan = tc.plan;
  plan.epoch = origin_step / bpe;
  std::vector<LineScan> fans = fan_scan(*model, params, count, ds, plan, grid, Granularity::Full, args.threads);

  fs::create_directories(args.out);
  write_run_config(args.out, cfg);
  for (std::size_t j = 0; j < fans.size(); ++j) {
    fans[j].config_hash = chash;
    save_scan(fs::path(args.out) / step_dir_name(static_cast<int>(j)), fans[j]);
  }
  nlohmann::ordered_json doc;
  doc["format"] = "fan-v1";
  doc["origin_step"] = origin_step;
  doc["count"] = count;
  doc["config_hash"] = chash;
  write_text_file(fs::path(args.out) / "fan.json", doc.dump(2) + "\n");
  std::cout << "scanned a fan of " << count << " lines from step " << origin_step << " into " << args.out
            << "\n";
  return 0;
}

int cmd_analyze(const AnalyzeArgs& args) {
  if (args.out.empty()) throw SpecError("analyze requires --out");
  std::vector<int> steps;
  std::vector<LineScan> scans = load_archives(args.scans, &steps);

  RunConfig cfg = make_config(args.config_path, args.overrides);
  Window window;
  bool wide = std::any_of(scans.begin(), scans.end(),
                          [](const LineScan& s) { return s.direction.kind == "momentum"; });
  window.lo = cfg.is_set("analysis.window.lo") ? cfg.get_double("analysis.window.lo") : (wide ? -0.5 : -0.2);
  window.hi = cfg.is_set("analysis.window.hi") ? cfg.get_double("analysis.window.hi") : (wide ? 0.5 : 0.2);
  int kernel = static_cast<int>(cfg.get_int("analysis.kernel"));

  AnalysisProducts products = analyze_archives(scans, steps, window, kernel, args.threads);

  fs::create_directories(args.out);
  write_run_config(args.out, cfg);
  write_analysis_outputs(args.out, scans, products);
  std::cout << "analyzed " << scans.size() << " lines into " << args.out << "\n";
  return 0;
}

int cmd_strategies(const StrategiesArgs& args) {
  if (args.out.empty()) throw SpecError("strategies requires --out");
  OpenedTrajectory traj = open_trajectory(args.traj);
  RunConfig cfg = config_from_trajectory(traj, args.overrides);
  Dataset ds = rebuild_dataset(cfg, traj);
  auto model = model_for(cfg, ds);
  check_param_count(*model, traj);
  TrainConfig tc = cfg.train_config();
  Window window = cfg.analysis_window();
  int kernel = static_cast<int>(cfg.get_int("analysis.kernel"));
  double mu = cfg.get_double("strategies.mu");

  std::vector<int> steps;
  std::vector<LineScan> archived = load_archives(args.scans, &steps);
  std::vector<LineContext> lines;
  lines.reserve(archived.size());
  for (std::size_t i = 0; i < archived.size(); ++i) {
    auto [origin, direction] = line_state(traj, *model, ds, tc, steps[i]);
    lines.push_back({std::move(archived[i]), std::move(origin), std::move(direction)});
  }

  std::vector<StrategySpec> specs;
  for (double lr : cfg.get_doubles("strategies.lrs")) specs.push_back(StrategySpec::sgd(lr));
  specs.push_back(StrategySpec::pal(mu));
  specs.push_back(StrategySpec::fbpal(mu));
  specs.push_back(StrategySpec::exact_minibatch());
  specs.push_back(StrategySpec::exact_fullbatch());

  std::vector<StrategyOutcome> rows = evaluate_strategies(*model, ds, lines, specs, window, true, args.threads);
  std::vector<StrategySeries> series = group_outcomes(rows);

  fs::create_directories(args.out);
  write_run_config(args.out, cfg);

  std::string csv = "step,strategy,s_upd,s_opt,distance,improvement,flags\n";
  for (const auto& r : rows) {
    append_row(csv, {std::to_string(r.step), r.strategy, csv_cell(r.s_upd), csv_cell(r.s_opt),
                     csv_cell(r.distance), csv_cell(r.improvement), r.flags});
  }
  write_text_file(fs::path(args.out) / "strategies.csv", csv);

  std::string smoothed_csv = "step,strategy,kernel,distance,improvement,cumulative_improvement\n";
  SvgChart dist_chart{"distance to the locally optimal step (kernel " + std::to_string(kernel) + ")", "step",
                      "s_opt - s_upd"};
  SvgChart impr_chart{"full-data loss improvement per step (kernel " + std::to_string(kernel) + ")", "step",
                      "improvement"};
  SvgChart cum_chart{"cumulative full-data loss improvement", "step", "sum of improvements"};
  for (const auto& s : series) {
    std::vector<double> dist_sm = moving_average(s.distance, kernel);
    std::vector<double> impr_sm = moving_average(s.improvement, kernel);
    std::vector<double> cum = cumulative(s.improvement);
    for (std::size_t i = 0; i < s.steps.size(); ++i) {
      append_row(smoothed_csv, {std::to_string(s.steps[i]), s.label, std::to_string(kernel),
                                csv_cell(dist_sm[i]), csv_cell(impr_sm[i]), csv_cell(cum[i])});
    }
    std::vector<double> xs = steps_as_x(s.steps);
    dist_chart.series.push_back({s.label, xs, dist_sm});
    impr_chart.series.push_back({s.label, xs, impr_sm});
    cum_chart.series.push_back({s.label, xs, cum});
  }
  write_text_file(fs::path(args.out) / "strategies_smoothed.csv", smoothed_csv);
  write_text_file(fs::path(args.out) / "strategy_distance.svg", render_line_chart(dist_chart));
  write_text_file(fs::path(args.out) / "strategy_improvement.svg", render_line_chart(impr_chart));
  write_text_file(fs::path(args.out) / "strategy_cumulative.svg", render_line_chart(cum_chart));

  nlohmann::ordered_json summary;
  summary["format"] = "strategies-v1";
  summary["lines"] = lines.size();
  summary["window"] = {{"lo", window.lo}, {"hi", window.hi}};
  summary["kernel"] = kernel;
  summary["mu"] = mu;
  nlohmann::ordered_json per;
  for (const auto& s : series) {
    std::vector<double> abs_dist;
    int failed = 0;
    for (std::size_t i = 0; i < s.distance.size(); ++i) {
      if (std::isfinite(s.distance[i])) abs_dist.push_back(std::fabs(s.distance[i]));
      if (s.flags[i].find("failed") != std::string::npos) ++failed;
    }
    double mean_dist = finite_mean(s.distance);
    per[s.label] = {{"mean_abs_distance", finite_mean(abs_dist)},
                    {"mean_distance", mean_dist},
                    {"mean_overshoot", -mean_dist},  // mean s_upd - s_opt
                    {"mean_improvement", finite_mean(s.improvement)},
                    {"total_improvement", cumulative(s.improvement).empty() ? 0.0 : cumulative(s.improvement).back()},
                    {"failed", failed}};
  }
  summary["strategies"] = per;
  write_text_file(fs::path(args.out) / "strategy_summary.json", summary.dump(2) + "\n");
  std::cout << "evaluated " << specs.size() << " strategies on " << lines.size() << " lines into " << args.out
            << "\n";
  return 0;
}

int cmd_batchsize(const BatchsizeArgs& args) {
  if (args.out.empty()) throw SpecError("batchsize requires --out");
  OpenedTrajectory traj = open_trajectory(args.traj);
  RunConfig cfg = config_from_trajectory(traj, args.overrides);
  Dataset ds = rebuild_dataset(cfg, traj);
  auto model = model_for(cfg, ds);
  check_param_count(*model, traj);
  TrainConfig tc = cfg.train_config();

  std::set<long long> wanted;
  for (long long s : cfg.get_ints("batch.steps")) wanted.insert(s);

  std::vector<int> steps;
  std::vector<LineScan> archived = load_archives(args.scans, &steps);
  std::vector<BatchStudyLine> study;
  for (std::size_t i = 0; i < archived.size(); ++i) {
    if (!archived[i].has_per_sample()) continue;
    if (!wanted.empty() && !wanted.count(steps[i])) continue;
    auto [origin, direction] = line_state(traj, *model, ds, tc, steps[i]);
    BatchStudyLine line;
    line.line = {std::move(archived[i]), std::move(origin), std::move(direction)};
    line.dderivs = per_sample_dderiv(*model, line.line.origin, line.line.direction, ds, args.threads);
    study.push_back(std::move(line));
  }
  if (study.empty()) {
    throw CapabilityError("no per-sample scan archives under " + args.scans +
                          "; rerun scan with --per-sample or scan.per_sample_steps");
  }

  std::vector<double> factors = cfg.get_doubles("batch.factors");
  std::vector<int> sizes;
  for (long long s : cfg.get_ints("batch.sizes"))
    if (s >= 1 && s <= ds.n()) sizes.push_back(static_cast<int>(s));
  if (sizes.empty()) throw SpecError("config key batch.sizes has no size in [1, n]");
  double lr = cfg.get_double("train.lr");
  double mu = cfg.get_double("strategies.mu");
  std::uint64_t seed = cfg.seed_for("batch.seed");

  std::vector<RatioRow> ratios = ratio_study(study, factors, seed);
  std::vector<BatchSizeRow> size_rows = strategy_vs_batchsize(*model, ds, study, sizes, lr, mu, seed, args.threads);

  fs::create_directories(args.out);
  write_run_config(args.out, cfg);

  std::string ratio_csv = "step,factor,base_dderiv,scaled_dderiv,ratio,expected\n";
  for (const auto& r : ratios) {
    append_row(ratio_csv, {std::to_string(r.step), csv_cell(r.factor), csv_cell(r.base_dderiv),
                           csv_cell(r.scaled_dderiv), csv_cell(r.ratio), csv_cell(r.expected)});
  }
  write_text_file(fs::path(args.out) / "ratio.csv", ratio_csv);

  std::string impr_csv = "step,size,strategy,s_upd,improvement,flags\n";
  for (const auto& r : size_rows) {
    append_row(impr_csv, {std::to_string(r.step), std::to_string(r.size), r.strategy, csv_cell(r.s_upd),
                          csv_cell(r.improvement), r.flags});
  }
  write_text_file(fs::path(args.out) / "batchsize_improvements.csv", impr_csv);

  // ratio chart: one observed + one expected series per factor
  {
    SvgChart chart{"slope ratio when the defining batch is resized", "step", "|base slope| / |scaled slope|"};
    for (double f : factors) {
      std::vector<double> xs, ys;
      for (const auto& r : ratios)
        if (r.factor == f) {
          xs.push_back(r.step);
          ys.push_back(r.ratio);
        }
      std::vector<double> expected(xs.size(), f);
      chart.series.push_back({"observed x" + fmt_double(f), xs, ys});
      chart.series.push_back({"expected x" + fmt_double(f), xs, expected});
    }
    write_text_file(fs::path(args.out) / "ratio.svg", render_line_chart(chart));
  }

  // cumulative improvement per size, one chart per strategy
  std::map<std::string, std::map<int, std::pair<std::vector<double>, std::vector<double>>>> by_strategy;
  for (const auto& r : size_rows) {
    auto& [xs, ys] = by_strategy[r.strategy][r.size];
    xs.push_back(r.step);
    ys.push_back(std::isfinite(r.improvement) ? r.improvement : 0.0);
  }
  for (auto& [name, per_size] : by_strategy) {
    SvgChart chart{"cumulative improvement vs batch size (" + name + ")", "step", "sum of improvements"};
    for (auto& [size, xy] : per_size) {
      chart.series.push_back({"size " + std::to_string(size), xy.first, cumulative(xy.second)});
    }
    write_text_file(fs::path(args.out) / ("batchsize_improvement_" + name + ".svg"), render_line_chart(chart));
  }

  // summary: per-factor ratio stats and the ordering of PAL improvements by size
  nlohmann::ordered_json summary;
  summary["format"] = "batchsize-v1";
  summary["lines"] = study.size();
  summary["factors"] = factors;
  summary["sizes"] = sizes;
  nlohmann::ordered_json per_factor;
  for (double f : factors) {
    std::vector<double> obs;
    int masked = 0;
    for (const auto& r : ratios)
      if (r.factor == f) {
        if (r.masked) {
          ++masked;
        } else {
          obs.push_back(r.ratio);
        }
      }
    per_factor[fmt_double(f)] = {{"mean_ratio", finite_mean(obs)}, {"expected", f}, {"masked", masked}};
  }
  summary["ratio"] = per_factor;
  // fraction of steps on which the PAL improvement is nondecreasing in size
  {
    std::map<int, std::map<int, double>> pal;  // step -> size -> improvement
    for (const auto& r : size_rows)
      if (r.strategy == "pal") pal[r.step][r.size] = r.improvement;
    int ok = 0, total = 0;
    for (const auto& [step, per_size] : pal) {
      bool nondec = true;
      double prev = -std::numeric_limits<double>::infinity();
      for (const auto& [size, impr] : per_size) {
        if (!std::isfinite(impr) || impr < prev - 1e-12) nondec = false;
        if (std::isfinite(impr)) prev = impr;
      }
      ++total;
      ok += nondec ? 1 : 0;
    }
    summary["pal_improvement_nondecreasing_fraction"] = total ? static_cast<double>(ok) / total : kNaN;
  }
  write_text_file(fs::path(args.out) / "batchsize_summary.json", summary.dump(2) + "\n");
  std::cout << "batch-size study on " << study.size() << " lines into " << args.out << "\n";
  return 0;
}

int cmd_report(const ReportArgs& args) {
  if (args.out.empty()) throw SpecError("report requires --out");
  if (args.inputs.empty()) throw SpecError("report requires at least one input directory");

  static const std::map<std::string, std::string> kDescriptions = {
      {"config.json", "training run configuration and summary"},
      {"run_config.json", "resolved configuration of the command that wrote this directory"},
      {"steps.csv", "per-step training log (losses, gradient norms, slopes)"},
      {"manifest.json", "scan archive metadata (direction, grid, fingerprints)"},
      {"full.csv", "full-data loss along one update-step line"},
      {"batches.csv", "mini-batch loss curves along one update-step line"},
      {"per_sample.f64le", "per-sample loss matrix along one update-step line"},
      {"fan.json", "metadata of a fan of mini-batch lines from one origin"},
      {"distance_matrix.csv", "pairwise MAE between min-shifted full-data loss curves"},
      {"distance_matrix.svg", "heatmap of the pairwise shape distances"},
      {"consecutive_mae.csv", "shape distance between consecutive scanned steps"},
      {"consecutive_mae.svg", "line plot of consecutive shape distances"},
      {"fits.csv", "parabola fits per line with degree-1/2 residuals"},
      {"fits.svg", "curvature and slope of the fitted parabolas over training"},
      {"proportionality.csv", "locally optimal step size vs gradient norm per line"},
      {"proportionality.svg", "s_opt against the proportional gradient-norm fit"},
      {"analysis_summary.json", "aggregate shape and proportionality statistics"},
      {"strategies.csv", "per-line step sizes, distances and improvements per strategy"},
      {"strategies_smoothed.csv", "kernel-smoothed strategy series with cumulative improvement"},
      {"strategy_summary.json", "aggregate per-strategy statistics"},
      {"strategy_distance.svg", "smoothed distance to the locally optimal step per strategy"},
      {"strategy_improvement.svg", "smoothed per-step loss improvement per strategy"},
      {"strategy_cumulative.svg", "cumulative loss improvement per strategy"},
      {"ratio.csv", "directional-derivative ratios under virtual batch resizing"},
      {"ratio.svg", "observed vs expected slope ratios per resize factor"},
      {"batchsize_improvements.csv", "strategy improvements under virtual batch resizing"},
      {"batchsize_summary.json", "aggregate batch-size study statistics"},
      {"training_loss.svg", "full-data training loss curves"},
      {"training_accuracy.svg", "full-data training accuracy curves"},
      {"report.json", "inventory of the files in this report"},
  };

  SvgChart loss_chart{"full-data training loss", "step", "loss"};
  SvgChart acc_chart{"full-data training accuracy", "step", "accuracy"};
  std::vector<nlohmann::ordered_json> files;
  for (const std::string& input : args.inputs) {
    fs::path root(input);
    if (!fs::is_directory(root)) throw SpecError("report input not found: " + input);
    if (fs::exists(root / "config.json") && fs::exists(root / "steps.csv")) {
      CsvTable table = read_csv(root / "steps.csv");
      int step_col = table.column("step");
      int loss_col = table.column("full_loss");
      int acc_col = table.column("full_accuracy");
      if (step_col < 0 || loss_col < 0 || acc_col < 0) {
        throw FormatError((root / "steps.csv").string() + ": missing step/full_loss/full_accuracy columns");
      }
      std::vector<double> xs, loss, acc;
      for (const auto& row : table.rows) {
        double l = parse_double(row[loss_col]);
        if (!std::isfinite(l)) continue;
        xs.push_back(parse_double(row[step_col]));
        loss.push_back(l);
        acc.push_back(parse_double(row[acc_col]));
      }
      std::string label = root.filename().string();
      if (label.empty()) label = input;
      loss_chart.series.push_back({label, xs, loss});
      acc_chart.series.push_back({label, xs, acc});
    }
    std::vector<fs::path> found;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
      if (!entry.is_regular_file()) continue;
      std::string ext = entry.path().extension().string();
      if (ext != ".csv" && ext != ".svg" && ext != ".json" && ext != ".f64le") continue;
      found.push_back(entry.path());
    }
    std::sort(found.begin(), found.end());
    for (const auto& path : found) {
      std::string ext = path.extension().string();
      std::string name = path.filename().string();
      auto it = kDescriptions.find(name);
      nlohmann::ordered_json f;
      f["path"] = path.string();
      f["kind"] = ext.substr(1);
      f["description"] = it != kDescriptions.end() ? it->second : "data file";
      files.push_back(std::move(f));
    }
  }

  fs::create_directories(args.out);
  if (!loss_chart.series.empty()) {
    write_text_file(fs::path(args.out) / "training_loss.svg", render_line_chart(loss_chart));
    write_text_file(fs::path(args.out) / "training_accuracy.svg", render_line_chart(acc_chart));
  }
  nlohmann::ordered_json report;
  report["format"] = "report-v1";
  report["inputs"] = args.inputs;
  nlohmann::ordered_json emitted = nlohmann::ordered_json::array();
  if (!loss_chart.series.empty()) {
    emitted.push_back({{"path", (fs::path(args.out) / "training_loss.svg").string()},
                       {"kind", "svg"},
                       {"description", kDescriptions.at("training_loss.svg")}});
    emitted.push_back({{"path", (fs::path(args.out) / "training_accuracy.svg").string()},
                       {"kind", "svg"},
                       {"description", kDescriptions.at("training_accuracy.svg")}});
  }
  report["emitted"] = emitted;
  report["files"] = files;
  write_text_file(fs::path(args.out) / "report.json", report.dump(2) + "\n");
  std::cout << "report over " << args.inputs.size() << " directories written to " << args.out << "\n";
  return 0;
}

}  // namespace linesgd
