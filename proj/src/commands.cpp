#include "treeslam/commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <ostream>
#include <sstream>

#include "treeslam/error.hpp"
#include "treeslam/frame_log.hpp"
#include "treeslam/io.hpp"
#include "treeslam/pipeline.hpp"

namespace treeslam {

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config;
  std::string preset = "pear-row";
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

RunConfig resolve_config(const CommonOptions& o) {
  RunConfig cfg;
  if (!o.config.empty()) {
    cfg = load_run_config(o.config);
  } else {
    cfg.scenario = scenario_preset(o.preset);
    cfg.pipeline = pipeline_config_for(cfg.scenario);
  }
  if (o.seed) cfg.scenario.sensors.seed = *o.seed;
  return cfg;
}

fs::path ensure_dir(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

int cmd_simulate(const CommonOptions& o, bool clouds, std::ostream& out) {
  RunConfig cfg = resolve_config(o);
  if (clouds) cfg.scenario.sensors.emit_clouds = true;
  const SimulationOutput sim = simulate_scenario(cfg.scenario);
  const fs::path dir = ensure_dir(o.out);
  write_frame_log(dir / "frames.jsonl", sim.frames);
  write_tree_map_csv(dir / "ground_truth_trees.csv", sim.truth.trees);
  write_tree_map_csv(dir / "ground_truth_visible.csv", sim.truth.visible_trees);
  write_trajectory_csv(dir / "true_trajectory.csv", sim.truth.trajectory);
  write_text(dir / "scenario.json", scenario_json(cfg.scenario));

  std::size_t n_det = 0, n_gps = 0;
  for (const auto& f : sim.frames) {
    n_det += f.detections.size();
    n_gps += f.gps ? 1 : 0;
  }
  out << "scenario " << cfg.scenario.name << " seed " << cfg.scenario.sensors.seed << "\n"
      << "  trees " << sim.truth.trees.size() << " (visible " << sim.truth.visible_trees.size()
      << "), planting distance " << num(cfg.scenario.orchard.planting_distance, 2) << " m\n"
      << "  frames " << sim.frames.size() << ", gps fixes " << n_gps << ", detections " << n_det << "\n"
      << "  wrote " << dir.string() << "\n";
  return 0;
}

struct Toggles {
  bool no_pca = false;
  bool no_cascade = false;
  bool no_inter_distance = false;
};

int cmd_run(const CommonOptions& o, const std::string& log, const Toggles& t, std::ostream& out) {
  RunConfig cfg = resolve_config(o);
  if (t.no_pca) cfg.pipeline.use_pca = false;
  if (t.no_cascade) cfg.pipeline.enable_cascade = false;
  if (t.no_inter_distance) cfg.pipeline.inter_distance = false;
  const auto frames = read_frame_log(fs::path(log));
  const PipelineResult res = run_pipeline(frames, cfg.pipeline);
  const fs::path dir = ensure_dir(o.out);
  write_tree_map_csv(dir / "map.csv", res.map);
  write_trajectory_csv(dir / "trajectory.csv", res.trajectory);
  write_text(dir / "graph.json", graph_snapshot_json(res.graph));

  double max_pos = 0.0, max_rot = 0.0;
  const Values& inc = res.incremental;
  const Values& bat = res.batch.estimates;
  for (std::size_t i = 0; i < inc.poses.size(); ++i) {
    max_pos = std::max({max_pos, std::abs(inc.poses[i].x - bat.poses[i].x), std::abs(inc.poses[i].y - bat.poses[i].y)});
    max_rot = std::max(max_rot, std::abs(normalize_angle(inc.poses[i].theta - bat.poses[i].theta)));
  }
  for (const auto& [id, p] : inc.landmarks) {
    const Point2 q = bat.landmark(id);
    max_pos = std::max({max_pos, std::abs(p.x - q.x), std::abs(p.y - q.y)});
  }
  nlohmann::json summary = {{"frames", frames.size()},
                            {"landmarks", inc.landmarks.size()},
                            {"exported_trees", res.map.size()},
                            {"factors", res.graph.factors().size()},
                            {"matches", {{"iou", res.stages.iou},
                                         {"cascade", res.stages.cascade},
                                         {"global", res.stages.global},
                                         {"new_tracks", res.stages.new_tracks}}},
                            {"batch", {{"iterations", res.batch.iterations},
                                       {"initial_cost", res.batch.initial_cost},
                                       {"final_cost", res.batch.final_cost},
                                       {"converged", res.batch.converged}}},
                            {"incremental_vs_batch", {{"max_position", max_pos}, {"max_heading", max_rot}}}};
  write_text(dir / "run_summary.json", summary.dump(2) + "\n");
  out << "frames " << frames.size() << ", tracks " << inc.landmarks.size() << ", exported trees "
      << res.map.size() << "\n"
      << "  matches iou " << res.stages.iou << ", cascade " << res.stages.cascade << ", global "
      << res.stages.global << ", new tracks " << res.stages.new_tracks << "\n"
      << "  batch cost " << num(res.batch.final_cost, 3) << " after " << res.batch.iterations
      << " iterations\n"
      << "  wrote " << dir.string() << "\n";
  return 0;
}

int cmd_baseline(const CommonOptions& o, const std::string& log, std::optional<double> eps,
                 std::optional<int> min_samples, std::ostream& out) {
  RunConfig cfg = resolve_config(o);
  if (eps) cfg.baseline.eps = *eps;
  if (min_samples) cfg.baseline.min_samples = *min_samples;
  if (!(cfg.baseline.eps > 0.0) || cfg.baseline.min_samples < 1) {
    throw SchemaError("baseline", "eps must be positive and min_samples at least 1");
  }
  const auto frames = read_frame_log(fs::path(log));
  const TreeMap map = run_baseline(frames, cfg.pipeline, cfg.baseline);
  const fs::path dir = ensure_dir(o.out);
  write_tree_map_csv(dir / "baseline_map.csv", map);
  out << "baseline eps " << num(cfg.baseline.eps, 2) << ", min samples " << cfg.baseline.min_samples << ": "
      << map.size() << " trees\n  wrote " << (dir / "baseline_map.csv").string() << "\n";
  return 0;
}

std::vector<double> parse_gates(const std::string& text) {
  std::vector<double> gates;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      const double g = std::stod(cell, &used);
      if (used != cell.size() || !(g > 0.0)) throw std::invalid_argument(cell);
      gates.push_back(g);
    } catch (const std::exception&) {
      throw SchemaError("--sweep", "'" + cell + "' is not a positive number");
    }
  }
  if (!std::is_sorted(gates.begin(), gates.end())) throw SchemaError("--sweep", "gates must be ascending");
  return gates;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, double pd, std::optional<double> gate,
             const std::string& sweep, const std::string& out_dir, std::ostream& out) {
  if (!(pd > 0.0)) throw SchemaError("--planting-distance", "must be positive");
  const TreeMap pred = read_tree_map_csv(fs::path(pred_path));
  const TreeMap gt = read_tree_map_csv(fs::path(gt_path));
  const double g = gate.value_or(0.5 * pd);
  if (!(g > 0.0)) throw SchemaError("--gate", "must be positive");
  const EvalReport report = evaluate(pred, gt, g, pd);
  std::vector<double> gates;
  if (sweep.empty()) {
    for (int k = 1; k <= 20; ++k) gates.push_back(0.05 * k);
  } else {
    gates = parse_gates(sweep);
  }
  const auto reports = sweep_thresholds(pred, gt, gates, pd);
  const fs::path dir = ensure_dir(out_dir);
  write_text(dir / "report.json", eval_report_json(report));
  write_sweep_csv(dir / "sweep.csv", reports);
  write_text(dir / "overlay.svg", svg_overlay(pred, gt, match_maps(pred, gt, g)));
  out << "gate " << num(g, 3) << " m: tp " << report.tp << ", fp " << report.fp << ", fn " << report.fn
      << "\n  precision " << num(report.precision) << ", recall " << num(report.recall) << ", f1 "
      << num(report.f1) << "\n  mean tp error " << num(report.mean_tp_error) << " m, within PD/2 "
      << num(report.pct_within_half_pd) << "\n  wrote " << dir.string() << "\n";
  return 0;
}

int cmd_ablate(const CommonOptions& o, int n_seeds, std::ostream& out) {
  if (n_seeds < 1) throw SchemaError("--seeds", "must be at least 1");
  const RunConfig cfg = resolve_config(o);
  struct Variant {
    const char* name;
    AblationToggles toggles;
  };
  const Variant variants[] = {{"full", {true, true, true}},
                              {"no_pca", {false, true, true}},
                              {"no_cascade", {true, false, true}},
                              {"no_inter_distance", {true, true, false}}};
  const fs::path dir = ensure_dir(o.out);
  std::ofstream csv(dir / "ablation.csv", std::ios::binary);
  if (!csv) throw Error("cannot write " + (dir / "ablation.csv").string());
  csv << "variant,seed,tp,fp,fn,precision,recall,f1,mean_tp_error\n";
  nlohmann::json summary = nlohmann::json::object();
  const std::uint64_t first_seed = cfg.scenario.sensors.seed;
  for (const auto& v : variants) {
    double recall = 0.0, err = 0.0, precision = 0.0;
    for (int k = 0; k < n_seeds; ++k) {
      ScenarioConfig sc = cfg.scenario;
      sc.sensors.seed = first_seed + static_cast<std::uint64_t>(k);
      const EvalReport r = ablation_run(sc, v.toggles, cfg.pipeline);
      csv << v.name << ',' << sc.sensors.seed << ',' << r.tp << ',' << r.fp << ',' << r.fn << ','
          << num(r.precision, 6) << ',' << num(r.recall, 6) << ',' << num(r.f1, 6) << ','
          << num(r.mean_tp_error, 6) << '\n';
      recall += r.recall;
      precision += r.precision;
      err += r.mean_tp_error;
    }
    summary[v.name] = {{"mean_recall", recall / n_seeds},
                       {"mean_precision", precision / n_seeds},
                       {"mean_tp_error", err / n_seeds}};
    out << v.name << ": recall " << num(recall / n_seeds) << ", precision " << num(precision / n_seeds)
        << ", mean tp error " << num(err / n_seeds) << " m\n";
  }
  write_text(dir / "ablation.json", summary.dump(2) + "\n");
  out << "  wrote " << dir.string() << "\n";
  return 0;
}

void add_common(CLI::App* cmd, CommonOptions& o, bool with_preset, bool with_seed) {
  cmd->add_option("--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
  if (with_preset) {
    cmd->add_option("--preset", o.preset, "Scenario preset")
        ->check(CLI::IsMember(scenario_preset_names()));
  }
  if (with_seed) cmd->add_option("--seed", o.seed, "Random seed");
  cmd->add_option("--out", o.out, "Output directory (created if missing)");
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Orchard tree mapping: simulation, landmark SLAM, baseline and evaluation"};
  app.require_subcommand(1);

  CommonOptions sim_opts;
  bool clouds = false;
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic orchard run");
  add_common(sim, sim_opts, true, true);
  sim->add_flag("--clouds", clouds, "Attach sampled trunk point clouds to detections");

  CommonOptions run_opts;
  std::string run_log;
  Toggles toggles;
  auto* run = app.add_subcommand("run", "Build the tree map from a frame log");
  add_common(run, run_opts, true, false);
  run->add_option("--log", run_log, "Frame log (JSONL)")->required()->check(CLI::ExistingFile);
  run->add_flag("--no-pca", toggles.no_pca, "Use the plain cloud centroid");
  run->add_flag("--no-cascade", toggles.no_cascade, "Skip cascade association");
  run->add_flag("--no-inter-distance", toggles.no_inter_distance, "Omit inter-landmark distance factors");

  CommonOptions base_opts;
  std::string base_log;
  std::optional<double> eps;
  std::optional<int> min_samples;
  auto* base = app.add_subcommand("baseline", "Cluster all localized detections");
  add_common(base, base_opts, true, false);
  base->add_option("--log", base_log, "Frame log (JSONL)")->required()->check(CLI::ExistingFile);
  base->add_option("--eps", eps, "Neighborhood radius in meters (default 0.5)");
  base->add_option("--min-samples", min_samples, "Minimum cluster size (default 5)");

  std::string pred, gt, sweep, eval_out = ".";
  double pd = 1.1;
  std::optional<double> gate;
  auto* ev = app.add_subcommand("eval", "Score a predicted map against ground truth");
  ev->add_option("--pred", pred, "Predicted map CSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--gt", gt, "Ground-truth map CSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--planting-distance", pd, "Planting distance in meters");
  ev->add_option("--gate", gate, "Matching gate in meters (default PD/2)");
  ev->add_option("--sweep", sweep, "Comma-separated ascending gates");
  ev->add_option("--out", eval_out, "Output directory (created if missing)");

  CommonOptions abl_opts;
  int n_seeds = 5;
  auto* abl = app.add_subcommand("ablate", "Pipeline variants with components switched off");
  add_common(abl, abl_opts, true, true);
  abl->add_option("--seeds", n_seeds, "Number of consecutive seeds");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_opts, clouds, out);
    if (run->parsed()) return cmd_run(run_opts, run_log, toggles, out);
    if (base->parsed()) return cmd_baseline(base_opts, base_log, eps, min_samples, out);
    if (ev->parsed()) return cmd_eval(pred, gt, pd, gate, sweep, eval_out, out);
    if (abl->parsed()) return cmd_ablate(abl_opts, n_seeds, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace treeslam
