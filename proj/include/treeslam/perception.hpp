#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

#include "treeslam/geometry.hpp"

namespace treeslam {

/// Axis-aligned image rectangle in pixels.
struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double area() const { return width() * height(); }
  bool valid() const { return x_min < x_max && y_min < y_max; }
  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Trunk surface points in the camera frame (x along the optical axis,
/// y left, z up), together with the camera center in the same frame.
struct TrunkPointCloud {
  std::vector<Eigen::Vector3d> points;
  Eigen::Vector3d camera_origin = Eigen::Vector3d::Zero();
};

struct TrunkEstimate {
  Eigen::Vector3d center3d = Eigen::Vector3d::Zero();
  double width = 0.0;
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();  // first principal component
};

struct Detection {
  BBox bbox;
  double confidence = 0.0;
  Point2 world_pos;
  RangeBearing measurement;  // relative to the robot
};

/// Camera mounting on the robot. The camera frame shares the robot's axis
/// convention, so identity extrinsics mean the camera sits at the robot
/// origin looking forward.
struct SensorExtrinsics {
  Pose2 mount;
  double height = 0.0;
};

/// PCA trunk localization: principal axis, cross-section width and the
/// visible-surface centroid pushed out by half the width, away from the
/// camera and perpendicular to the axis.
///
/// Throws DegenerateCloudError for fewer than three points, non-finite
/// coordinates or a collinear cloud.
TrunkEstimate estimate_trunk_center(const TrunkPointCloud& cloud);

/// Plain average of the cloud; the fallback used when PCA is disabled.
Eigen::Vector3d trunk_centroid(const TrunkPointCloud& cloud);

/// Drops height and maps a camera-frame point into the world frame.
Point2 project_to_ground(const Eigen::Vector3d& center3d, const Pose2& robot_pose,
                         const SensorExtrinsics& extrinsics);

/// Camera-frame point to robot-relative range/bearing (height dropped).
RangeBearing camera_point_to_measurement(const Eigen::Vector3d& center3d,
                                         const SensorExtrinsics& extrinsics);

inline constexpr int kNoise = -1;

/// DBSCAN with inclusive eps-neighborhoods that count the point itself.
/// Clusters are numbered 0.. in the order their first core point appears
/// in the input; border points join the first cluster that reaches them.
std::vector<int> dbscan(std::span<const Point2> points, double eps, int min_pts);

struct DetectionFilterOptions {
  double eps_fraction = 0.6;     // of the planting distance
  double min_confidence = 0.1;
  bool keep_singletons = true;
};

/// Collapses each spatial cluster of detections to its most confident
/// member. Survivors keep their input order.
std::vector<Detection> filter_detections(std::span<const Detection> detections,
                                         double planting_distance,
                                         const DetectionFilterOptions& options = {});

}  // namespace treeslam
