#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <vector>

#include "treeslam/geometry.hpp"
#include "treeslam/perception.hpp"

namespace treeslam {

struct KalmanConfig {
  double process_var = 1.0;       // px^2 per elapsed frame
  double measurement_var = 4.0;   // px^2
  double initial_velocity_var = 1.0e4;
};

/// Constant-velocity filter on the bbox center x (state: position px,
/// velocity px/frame).
class AxisKalman {
 public:
  AxisKalman() = default;
  AxisKalman(double x0, const KalmanConfig& cfg);

  double position() const { return state_(0); }
  double velocity() const { return state_(1); }
  const Eigen::Matrix2d& covariance() const { return cov_; }

  /// Position after `frames` frames without touching the filter state.
  double predicted_position(int frames) const { return state_(0) + frames * state_(1); }

  void predict(int frames);
  void update(double measured_x);

 private:
  KalmanConfig cfg_;
  Eigen::Vector2d state_ = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov_ = Eigen::Matrix2d::Identity();
};

/// Persistent tree identity. `world_pos` mirrors the factor-graph estimate
/// of the landmark with the same id.
struct Track {
  int id = 0;
  BBox last_bbox;
  AxisKalman x_filter;
  Point2 world_pos;
  int last_seen_frame = 0;
  int hits = 0;
};

enum class MatchStage { kIou, kCascade, kGlobal };

const char* to_string(MatchStage stage);

struct Match {
  int track_id = 0;
  int detection = 0;
  MatchStage stage = MatchStage::kIou;
};

struct AssociationResult {
  std::vector<Match> matches;
  std::vector<int> new_track_detections;
  std::vector<int> new_track_ids;  // parallel to new_track_detections (filled by Tracker)
};

/// Index pairing between a track list and a detection list.
struct Pairing {
  int track = 0;
  int detection = 0;
  friend bool operator==(const Pairing&, const Pairing&) = default;
};

struct AssociationConfig {
  double iou_gate = 0.3;
  double dist_gate = 0.55;        // meters
  double neighbor_radius = 1.65;  // meters
  int max_frames_unseen = 5;      // stage-1 eligibility window
  bool stage1_world_gate = true;  // also require dist_gate in world space for IoU matches
  bool enable_cascade = true;
  bool global_after_cascade = true;  // gated Euclidean pass over cascade leftovers
  KalmanConfig kalman;

  /// Gates derived from the row's planting distance: PD/2 and 1.5 PD.
  static AssociationConfig for_planting_distance(double planting_distance);
};

double iou(const BBox& a, const BBox& b);

/// Track bbox shifted to the Kalman-predicted center x at `frame`.
BBox kalman_predict_bbox(const Track& track, int frame);

/// Stage 1: image-space Hungarian on 1 - IoU for tracks seen within the
/// eligibility window; pairs below the IoU gate stay unassociated, as do
/// pairs further apart in world space than `world_gate` when it is set.
std::vector<Pairing> associate_stage1(std::span<const Track> tracks,
                                      std::span<const Detection> detections, int frame,
                                      double iou_gate, int max_frames_unseen = 5,
                                      std::optional<double> world_gate = std::nullopt);

/// Stage 2a: breadth-first propagation from `matched_tracks` through
/// world-space neighborhoods. Every index list refers into `tracks` /
/// `detections`.
std::vector<Pairing> associate_cascade(std::span<const Track> tracks,
                                       std::span<const Detection> detections,
                                       std::span<const int> matched_tracks,
                                       std::span<const int> unassoc_tracks,
                                       std::span<const int> unassoc_detections, double radius,
                                       double dist_gate);

/// Stage 2b: Euclidean Hungarian over every leftover pair, gated.
std::vector<Pairing> associate_global(std::span<const Track> tracks,
                                      std::span<const Detection> detections,
                                      std::span<const int> unassoc_tracks,
                                      std::span<const int> unassoc_detections, double dist_gate);

/// Owns the track set and runs the full cascade once per frame.
class Tracker {
 public:
  explicit Tracker(AssociationConfig cfg) : cfg_(cfg) {}

  /// Associates `detections` (already filtered), updates matched tracks and
  /// spawns one track per leftover detection.
  AssociationResult step(std::span<const Detection> detections, int frame);

  const std::vector<Track>& tracks() const { return tracks_; }
  const Track* find(int id) const;
  void set_world_pos(int id, Point2 p);
  const AssociationConfig& config() const { return cfg_; }

 private:
  Track* find_mut(int id);

  AssociationConfig cfg_;
  std::vector<Track> tracks_;  // ascending id
  int next_id_ = 0;
};

}  // namespace treeslam
