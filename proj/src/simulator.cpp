#include "treeslam/simulator.hpp"

#include <algorithm>
#include <cmath>

#include "treeslam/error.hpp"

namespace treeslam {

namespace {

constexpr double kMinReportedGpsSigma = 1e-3;

double gauss(std::mt19937_64& rng, double sigma) {
  if (sigma <= 0.0) return 0.0;
  return std::normal_distribution<double>(0.0, sigma)(rng);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool bernoulli(std::mt19937_64& rng, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return uniform(rng, 0.0, 1.0) < p;
}

// Arc-length parameterised path made of straight and circular pieces.
class PathBuilder {
 public:
  explicit PathBuilder(Pose2 start) : pose_(start) {}

  void straight(double length) {
    if (length > 0.0) pieces_.push_back({pose_, length, 0.0});
    pose_ = advance({pose_, length, 0.0}, length);
  }

  /// Curvature sign: negative turns clockwise (to the right).
  void arc(double radius, double angle, bool clockwise) {
    const double kappa = (clockwise ? -1.0 : 1.0) / radius;
    const double length = radius * angle;
    pieces_.push_back({pose_, length, kappa});
    pose_ = advance(pieces_.back(), length);
  }

  const Pose2& end() const { return pose_; }

  std::vector<Pose2> sample(double step) const {
    double total = 0.0;
    for (const auto& p : pieces_) total += p.length;
    std::vector<Pose2> out;
    const auto n = static_cast<long>(std::floor(total / step + 1e-9));
    std::size_t piece = 0;
    double piece_start = 0.0;
    for (long k = 0; k <= n; ++k) {
      const double s = static_cast<double>(k) * step;
      while (piece + 1 < pieces_.size() && s > piece_start + pieces_[piece].length) {
        piece_start += pieces_[piece].length;
        ++piece;
      }
      out.push_back(advance(pieces_[piece], s - piece_start));
    }
    return out;
  }

 private:
  struct Piece {
    Pose2 start;
    double length;
    double kappa;
  };

  static Pose2 advance(const Piece& p, double s) {
    if (std::abs(p.kappa) < 1e-12) {
      return {p.start.x + s * std::cos(p.start.theta), p.start.y + s * std::sin(p.start.theta),
              p.start.theta};
    }
    const double th = p.start.theta + p.kappa * s;
    return {p.start.x + (std::sin(th) - std::sin(p.start.theta)) / p.kappa,
            p.start.y - (std::cos(th) - std::cos(p.start.theta)) / p.kappa, normalize_angle(th)};
  }

  Pose2 pose_;
  std::vector<Piece> pieces_;
};

// Image rectangle of an upright cylinder whose axis passes through the
// camera-frame point (depth, left).
std::optional<BBox> project_cylinder(double depth, double left, double radius, double height,
                                     const SensorConfig& s) {
  if (depth <= radius) return std::nullopt;
  const auto& k = s.intrinsics;
  BBox b;
  b.x_min = k.cx - k.fx * (left + radius) / depth;
  b.x_max = k.cx - k.fx * (left - radius) / depth;
  b.y_min = k.cy - k.fy * (height - s.camera.height) / depth;
  b.y_max = k.cy + k.fy * s.camera.height / depth;
  b.x_min = std::clamp(b.x_min, 0.0, double(k.width));
  b.x_max = std::clamp(b.x_max, 0.0, double(k.width));
  b.y_min = std::clamp(b.y_min, 0.0, double(k.height));
  b.y_max = std::clamp(b.y_max, 0.0, double(k.height));
  if (b.x_max - b.x_min < 1.0 || b.y_max - b.y_min < 1.0) return std::nullopt;
  return b;
}

void jitter_bbox(BBox& b, double sigma, std::mt19937_64& rng) {
  b.x_min += gauss(rng, sigma);
  b.x_max += gauss(rng, sigma);
  b.y_min += gauss(rng, sigma);
  b.y_max += gauss(rng, sigma);
  if (b.x_max - b.x_min < 1.0) b.x_max = b.x_min + 1.0;
  if (b.y_max - b.y_min < 1.0) b.y_max = b.y_min + 1.0;
}

}  // namespace

ScenarioConfig scenario_preset(const std::string& name) {
  ScenarioConfig cfg;
  cfg.name = name;
  if (name == "pear-row") return cfg;
  if (name == "pear-row-degraded") {
    cfg.sensors.gps_bias_walk_sigma = 0.05;
    cfg.sensors.gps_bias_correlation_frames = 200.0;
    return cfg;
  }
  if (name == "pear-row-intermittent") {
    cfg.sensors.gps_bias_walk_sigma = 0.05;
    cfg.sensors.gps_bias_correlation_frames = 200.0;
    cfg.sensors.miss_prob = 0.5;
    return cfg;
  }
  if (name == "apple-row") {
    cfg.orchard.n_trees = 65;
    cfg.orchard.planting_distance = 1.2;
    cfg.orchard.trunk_radius = 0.05;
    cfg.trajectory.path = PathKind::kFullLoop;
    return cfg;
  }
  throw Error("unknown scenario preset '" + name + "'");
}

std::vector<std::string> scenario_preset_names() {
  return {"pear-row", "pear-row-degraded", "pear-row-intermittent", "apple-row"};
}

TreeMap generate_orchard(const OrchardConfig& cfg, std::uint64_t seed) {
  if (cfg.n_trees < 1) throw Error("orchard needs at least one tree");
  if (!(cfg.planting_distance > 0.0)) throw Error("planting distance must be positive");
  std::mt19937_64 rng(seed);
  TreeMap map;
  map.frame = "world";
  const double c = std::cos(cfg.row_heading);
  const double s = std::sin(cfg.row_heading);
  for (int k = 0; k < cfg.n_trees; ++k) {
    const double along = k * cfg.planting_distance;
    Point2 p{cfg.row_origin.x + c * along, cfg.row_origin.y + s * along};
    p.x += gauss(rng, cfg.position_jitter_sigma);
    p.y += gauss(rng, cfg.position_jitter_sigma);
    map.trees.push_back({k, p});
  }
  return map;
}

std::vector<Pose2> generate_trajectory(const OrchardConfig& orchard, const TrajectoryConfig& cfg) {
  if (!(cfg.speed > 0.0)) throw Error("trajectory speed must be positive");
  if (!(cfg.lateral_offset > orchard.trunk_radius)) throw Error("lateral offset must exceed trunk radius");
  if (!(cfg.turn_radius > 0.0) || cfg.turn_radius > cfg.lateral_offset + 1e-12) {
    throw Error("turn radius must be in (0, lateral_offset]");
  }
  // Row frame: trees along +x from the origin, side A at y = +offset driving +x
  // so the right-facing camera looks at the row.
  const double row_len = (orchard.n_trees - 1) * orchard.planting_distance;
  const double off = cfg.lateral_offset;
  const double rho = cfg.turn_radius;
  const double mid = 0.5 * row_len;
  const double far_end = row_len + cfg.end_margin;
  const double near_end = -cfg.end_margin;

  PathBuilder path({mid, off, 0.0});
  path.straight(far_end - mid);
  path.arc(rho, kPi / 2.0, true);
  path.straight(2.0 * (off - rho));
  path.arc(rho, kPi / 2.0, true);
  if (cfg.path == PathKind::kUShape) {
    path.straight(far_end - (mid - cfg.overshoot));
  } else {
    path.straight(far_end - near_end);
    path.arc(rho, kPi / 2.0, true);
    path.straight(2.0 * (off - rho));
    path.arc(rho, kPi / 2.0, true);
    path.straight(mid - near_end);
  }

  const double c = std::cos(orchard.row_heading);
  const double s = std::sin(orchard.row_heading);
  std::vector<Pose2> out;
  for (const Pose2& p : path.sample(cfg.speed)) {
    out.push_back({orchard.row_origin.x + c * p.x - s * p.y, orchard.row_origin.y + s * p.x + c * p.y,
                   normalize_angle(p.theta + orchard.row_heading)});
  }
  return out;
}

TrunkPointCloud sample_trunk_cloud(const Eigen::Vector3d& axis_base, double radius, double height,
                                   int n_points, double depth_sigma, std::mt19937_64& rng,
                                   const Eigen::Vector3d& camera) {
  TrunkPointCloud cloud;
  cloud.camera_origin = camera;
  const Eigen::Vector2d to_cam = camera.head<2>() - axis_base.head<2>();
  const double d = to_cam.norm();
  if (d <= radius) throw DegenerateGeometryError("camera inside trunk");
  const Eigen::Vector2d u = to_cam / d;
  const Eigen::Vector2d w(-u.y(), u.x());
  const double half = std::sqrt(1.0 - (radius / d) * (radius / d));  // sin of the tangent angle
  cloud.points.reserve(n_points);
  for (int i = 0; i < n_points; ++i) {
    const double a = std::asin(uniform(rng, -half, half));
    const Eigen::Vector2d xy = axis_base.head<2>() + radius * (std::cos(a) * u + std::sin(a) * w);
    Eigen::Vector3d p(xy.x(), xy.y(), axis_base.z() + uniform(rng, 0.0, height));
    const Eigen::Vector3d ray = (p - camera).normalized();
    p += gauss(rng, depth_sigma) * ray;
    cloud.points.push_back(p);
  }
  return cloud;
}

SimulationOutput simulate(const TreeMap& orchard, double trunk_radius,
                          const std::vector<Pose2>& trajectory, const SensorConfig& s) {
  for (double p : {s.gps_dropout_prob, s.miss_prob}) {
    if (p < 0.0 || p > 1.0) throw Error("sensor probabilities must lie in [0, 1]");
  }
  std::mt19937_64 rng(s.seed);
  SimulationOutput out;
  out.truth.trees = orchard;
  out.truth.trajectory = trajectory;
  out.truth.visible_trees.frame = orchard.frame;

  const std::size_t n_trees = orchard.trees.size();
  std::vector<bool> ever_visible(n_trees, false);
  std::vector<int> miss_state(n_trees, -1);  // -1 unknown, 0 detected run, 1 miss run
  const bool bursty = s.miss_burst_frames > 1.0 && s.miss_prob > 0.0 && s.miss_prob < 1.0;
  const double leave_miss = bursty ? 1.0 / s.miss_burst_frames : 0.0;
  const double enter_miss =
      bursty ? std::min(1.0, s.miss_prob / (s.miss_burst_frames * (1.0 - s.miss_prob))) : 0.0;

  Eigen::Vector2d bias = Eigen::Vector2d::Zero();
  const double bias_decay = s.gps_bias_correlation_frames > 0.0
                                ? std::exp(-1.0 / s.gps_bias_correlation_frames)
                                : 1.0;

  for (std::size_t t = 0; t < trajectory.size(); ++t) {
    const Pose2& truth = trajectory[t];
    FrameRecord rec;
    rec.frame = static_cast<int>(t);
    if (t > 0) {
      const Pose2Delta d = pose_between(trajectory[t - 1], truth);
      rec.odom = {d.dx + gauss(rng, s.odom_sigma(0)), d.dy + gauss(rng, s.odom_sigma(1)),
                  normalize_angle(d.dtheta + gauss(rng, s.odom_sigma(2)))};
    }

    bias(0) = bias_decay * bias(0) + gauss(rng, s.gps_bias_walk_sigma);
    bias(1) = bias_decay * bias(1) + gauss(rng, s.gps_bias_walk_sigma);
    if (!bernoulli(rng, s.gps_dropout_prob)) {
      rec.gps = GpsFix{truth.x + bias(0) + gauss(rng, s.gps_sigma),
                       truth.y + bias(1) + gauss(rng, s.gps_sigma),
                       s.gps_sigma > 0.0 ? s.gps_sigma : kMinReportedGpsSigma};
    }

    const Pose2 cam = pose_compose(truth, {s.camera.mount.x, s.camera.mount.y, s.camera.mount.theta});
    for (std::size_t k = 0; k < n_trees; ++k) {
      const Point2 tree = orchard.trees[k].position;
      const Pose2Delta local = pose_between(cam, {tree.x, tree.y, 0.0});
      const bool in_wedge = local.dx > trunk_radius &&
                            std::abs(std::atan2(local.dy, local.dx)) <= 0.5 * s.detection_fov &&
                            distance(tree, {truth.x, truth.y}) <= s.detection_range;
      if (!in_wedge) {
        miss_state[k] = -1;
        continue;
      }
      ever_visible[k] = true;

      bool missed = false;
      if (bursty) {
        if (miss_state[k] < 0) {
          miss_state[k] = bernoulli(rng, s.miss_prob) ? 1 : 0;
        } else if (miss_state[k] == 1) {
          miss_state[k] = bernoulli(rng, leave_miss) ? 0 : 1;
        } else {
          miss_state[k] = bernoulli(rng, enter_miss) ? 1 : 0;
        }
        missed = miss_state[k] == 1;
      } else {
        missed = bernoulli(rng, s.miss_prob);
      }
      if (missed) continue;

      auto box = project_cylinder(local.dx, local.dy, trunk_radius, s.trunk_height, s);
      if (!box) continue;
      DetectionRecord det;
      det.bbox = *box;
      jitter_bbox(det.bbox, s.bbox_sigma_px, rng);
      det.confidence = std::clamp(s.true_confidence_mean + gauss(rng, s.true_confidence_sigma), 0.1, 1.0);
      const RangeBearing z = range_bearing(truth, tree);
      det.measurement = {std::max(1e-3, z.range + gauss(rng, s.range_sigma)),
                         normalize_angle(z.bearing + gauss(rng, s.bearing_sigma))};
      if (s.emit_clouds) {
        det.cloud = sample_trunk_cloud(Eigen::Vector3d(local.dx, local.dy, -s.camera.height), trunk_radius,
                                       s.trunk_height, s.cloud_points, s.cloud_depth_sigma, rng);
      }
      rec.detections.push_back(std::move(det));
    }

    const int n_false = s.false_positive_rate > 0.0
                            ? std::poisson_distribution<int>(s.false_positive_rate)(rng)
                            : 0;
    for (int i = 0; i < n_false; ++i) {
      const double r = uniform(rng, 0.5, s.detection_range);
      const double a = uniform(rng, -0.5 * s.detection_fov, 0.5 * s.detection_fov);
      const double depth = r * std::cos(a);
      const double left = r * std::sin(a);
      constexpr double kPoleRadius = 0.03;
      auto box = project_cylinder(depth, left, kPoleRadius, 0.8 * s.trunk_height, s);
      if (!box) continue;
      DetectionRecord det;
      det.bbox = *box;
      jitter_bbox(det.bbox, s.bbox_sigma_px, rng);
      det.confidence = uniform(rng, s.false_confidence_min, s.false_confidence_max);
      const Eigen::Vector3d center(depth, left, 0.0);
      det.measurement = camera_point_to_measurement(center, s.camera);
      if (s.emit_clouds) {
        det.cloud = sample_trunk_cloud(Eigen::Vector3d(depth, left, -s.camera.height), kPoleRadius,
                                       0.8 * s.trunk_height, s.cloud_points, s.cloud_depth_sigma, rng);
      }
      rec.detections.push_back(std::move(det));
    }
    out.frames.push_back(std::move(rec));
  }

  for (std::size_t k = 0; k < n_trees; ++k) {
    if (ever_visible[k]) out.truth.visible_trees.trees.push_back(orchard.trees[k]);
  }
  return out;
}

SimulationOutput simulate_scenario(const ScenarioConfig& cfg) {
  const TreeMap orchard = generate_orchard(cfg.orchard, cfg.sensors.seed);
  const auto trajectory = generate_trajectory(cfg.orchard, cfg.trajectory);
  SensorConfig sensors = cfg.sensors;
  sensors.seed = cfg.sensors.seed ^ 0x5DEECE66DULL;  // decorrelate from the orchard draw
  return simulate(orchard, cfg.orchard.trunk_radius, trajectory, sensors);
}

}  // namespace treeslam
