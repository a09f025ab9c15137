#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "treeslam/geometry.hpp"
#include "treeslam/perception.hpp"
#include "treeslam/tree_map.hpp"

namespace treeslam {

struct OrchardConfig {
  int n_trees = 135;
  double planting_distance = 1.1;
  double row_heading = 0.0;
  double position_jitter_sigma = 0.0;
  double trunk_radius = 0.1;
  Point2 row_origin;
};

enum class PathKind { kUShape, kFullLoop };

struct TrajectoryConfig {
  PathKind path = PathKind::kUShape;
  double lateral_offset = 1.5;  // from the row line
  double speed = 0.08;          // meters per frame
  double turn_radius = 1.5;     // <= lateral_offset
  double end_margin = 1.0;      // straight run past the last tree before turning
  double overshoot = 3.0;       // U-shape: distance driven past the start
};

struct CameraIntrinsics {
  double fx = 640.0;
  double fy = 640.0;
  double cx = 640.0;
  double cy = 360.0;
  int width = 1280;
  int height = 720;
};

struct SensorConfig {
  Eigen::Vector3d odom_sigma{0.01, 0.005, 0.002};
  double gps_sigma = 0.30;
  double gps_dropout_prob = 0.10;
  double gps_bias_walk_sigma = 0.0;         // m per frame, driving noise of the bias
  double gps_bias_correlation_frames = 0.0; // <= 0: pure random walk
  double detection_range = 3.0;
  double detection_fov = 1.5184;            // ~87 degrees
  double miss_prob = 0.05;
  double miss_burst_frames = 1.0;           // mean length of a miss run; <= 1 means independent misses
  double false_positive_rate = 0.05;        // expected spurious detections per frame
  double range_sigma = 0.03;
  double bearing_sigma = 0.01;
  double bbox_sigma_px = 2.0;
  double true_confidence_mean = 0.75;
  double true_confidence_sigma = 0.15;
  double false_confidence_min = 0.10;
  double false_confidence_max = 0.40;
  double trunk_height = 1.0;
  SensorExtrinsics camera{Pose2{0.0, 0.0, -kPi / 2.0}, 0.6};
  CameraIntrinsics intrinsics;
  bool emit_clouds = false;
  int cloud_points = 60;
  double cloud_depth_sigma = 0.003;
  std::uint64_t seed = 1;
};

struct GpsFix {
  double x = 0.0;
  double y = 0.0;
  double sigma = 0.0;
};

struct DetectionRecord {
  BBox bbox;
  double confidence = 0.0;
  RangeBearing measurement;
  std::optional<TrunkPointCloud> cloud;
};

struct FrameRecord {
  int frame = 0;
  Pose2Delta odom;
  std::optional<GpsFix> gps;
  std::vector<DetectionRecord> detections;
};

struct GroundTruth {
  TreeMap trees;            // every planted tree
  TreeMap visible_trees;    // trees inside the sensing wedge at least once
  std::vector<Pose2> trajectory;
};

struct SimulationOutput {
  std::vector<FrameRecord> frames;
  GroundTruth truth;
};

struct ScenarioConfig {
  std::string name = "pear-row";
  OrchardConfig orchard;
  TrajectoryConfig trajectory;
  SensorConfig sensors;
};

/// Named scenarios: "pear-row", "pear-row-degraded", "pear-row-intermittent",
/// "apple-row". Throws treeslam::Error for unknown names.
ScenarioConfig scenario_preset(const std::string& name);
std::vector<std::string> scenario_preset_names();

TreeMap generate_orchard(const OrchardConfig& cfg, std::uint64_t seed);

std::vector<Pose2> generate_trajectory(const OrchardConfig& orchard, const TrajectoryConfig& cfg);

SimulationOutput simulate(const TreeMap& orchard, double trunk_radius,
                          const std::vector<Pose2>& trajectory, const SensorConfig& sensors);

/// Orchard, trajectory and sensor simulation in one call, seeded from
/// `cfg.sensors.seed`.
SimulationOutput simulate_scenario(const ScenarioConfig& cfg);

/// Camera-facing half of a vertical trunk cylinder as an RGB-D camera at
/// `camera` (camera frame origin) would sample it: rays spread uniformly
/// across the silhouette and over `height`, depth noise along each ray.
TrunkPointCloud sample_trunk_cloud(const Eigen::Vector3d& axis_base, double radius, double height,
                                   int n_points, double depth_sigma, std::mt19937_64& rng,
                                   const Eigen::Vector3d& camera = Eigen::Vector3d::Zero());

}  // namespace treeslam
