#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "treeslam/eval.hpp"
#include "treeslam/factor_graph.hpp"
#include "treeslam/pipeline.hpp"
#include "treeslam/simulator.hpp"
#include "treeslam/tree_map.hpp"

namespace treeslam {

/// `id,x,y` with a header line.
void write_tree_map_csv(std::ostream& out, const TreeMap& map);
void write_tree_map_csv(const std::filesystem::path& path, const TreeMap& map);
TreeMap read_tree_map_csv(std::istream& in);
TreeMap read_tree_map_csv(const std::filesystem::path& path);

/// `frame,x,y,theta`.
void write_trajectory_csv(const std::filesystem::path& path, std::span<const Pose2> poses);

/// Variables, factors (measurement, covariance) and current estimates.
std::string graph_snapshot_json(const FactorGraph& graph);

std::string eval_report_json(const EvalReport& report);
void write_sweep_csv(const std::filesystem::path& path, std::span<const EvalReport> reports);

/// Ground-truth and predicted trees with matched pairs joined by a line.
std::string svg_overlay(const TreeMap& pred, const TreeMap& gt, const MatchResult& matches);

/// Configuration file, a JSON object with optional sections:
///   {"preset": name, "seed": n, "orchard": {...}, "trajectory": {...},
///    "sensors": {...}, "pipeline": {...}, "baseline": {...}}
/// Section keys mirror the struct field names. The pipeline section starts
/// from the scenario-derived defaults. Unknown keys and wrong types raise
/// SchemaError naming the field path.
struct RunConfig {
  ScenarioConfig scenario;
  PipelineConfig pipeline;
  BaselineConfig baseline;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

std::string scenario_json(const ScenarioConfig& scenario);
std::string pipeline_config_json(const PipelineConfig& cfg);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace treeslam
