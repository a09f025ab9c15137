#pragma once

#include <span>
#include <vector>

#include "treeslam/association.hpp"
#include "treeslam/eval.hpp"
#include "treeslam/factor_graph.hpp"
#include "treeslam/perception.hpp"
#include "treeslam/simulator.hpp"

namespace treeslam {

struct PipelineConfig {
  double planting_distance = 1.1;
  NoiseDefaults noise;
  bool gps_full_pose = false;           // adds a heading row to GPS factors
  Pose2 initial_pose;                   // prior mean when the log has no GPS fix; heading always
  double initial_position_sigma = 0.01; // used when the log has no GPS fix
  double initial_heading_sigma = 0.05;
  SensorExtrinsics camera{Pose2{0.0, 0.0, -kPi / 2.0}, 0.6};
  bool use_pca = true;                  // false: plain centroid of the trunk cloud
  DetectionFilterOptions filter;
  bool enable_cascade = true;
  bool association_world_gate = true;
  bool inter_distance = true;
  bool inter_distance_on_spawn = false; // link a track in the frame that creates it
  int max_pairs_per_frame = 0;          // 0: every same-frame pair
  bool incremental = true;              // optimize after every frame
  SolverOptions solver;
  int min_track_hits = 3;               // tracks with fewer observations are not exported
};

/// Tracker gates derived from the planting distance, with the cascade toggle.
AssociationConfig association_config(const PipelineConfig& cfg);

struct StageCounts {
  int iou = 0;
  int cascade = 0;
  int global = 0;
  int new_tracks = 0;
};

struct PipelineResult {
  TreeMap map;                      // exported landmarks (batch solution)
  std::vector<Pose2> trajectory;    // batch pose estimates
  Values incremental;               // estimates after the last incremental update
  SolveReport batch;                // from-scratch solve on the final graph
  FactorGraph graph;
  std::vector<int> track_hits;      // indexed by track id
  StageCounts stages;
};

/// Per-frame loop: detection localization, filtering, association, graph
/// update and optimization, followed by a from-scratch batch solve.
PipelineResult run_pipeline(std::span<const FrameRecord> frames, const PipelineConfig& cfg);

/// Planar pose filter fusing odometry with position fixes (no landmarks).
class NavigationFilter {
 public:
  NavigationFilter(const Pose2& initial, const Eigen::Matrix3d& initial_cov);

  void predict(const Pose2Delta& odom, const Eigen::Matrix3d& odom_cov);
  void update_position(double x, double y, double sigma);

  const Pose2& pose() const { return pose_; }
  const Eigen::Matrix3d& covariance() const { return cov_; }

 private:
  Pose2 pose_;
  Eigen::Matrix3d cov_;
};

/// World positions of every filtered detection, localized with the
/// odometry/GPS navigation filter.
std::vector<Point2> localize_detections(std::span<const FrameRecord> frames, const PipelineConfig& cfg);

struct BaselineConfig {
  double eps = 0.5;
  int min_samples = 5;
};

TreeMap run_baseline(std::span<const FrameRecord> frames, const PipelineConfig& cfg,
                     const BaselineConfig& baseline = {});

struct AblationToggles {
  bool pca = true;
  bool cascade = true;
  bool inter_distance = true;
};

/// Simulates `scenario`, runs the pipeline with the given components
/// switched off, and scores the map against the trees the robot could see
/// at a PD/2 gate.
EvalReport ablation_run(const ScenarioConfig& scenario, const AblationToggles& toggles,
                        PipelineConfig base = {});

/// Pipeline configuration matching a simulated scenario (planting distance,
/// camera mounting).
PipelineConfig pipeline_config_for(const ScenarioConfig& scenario);

}  // namespace treeslam
