#include "treeslam/pipeline.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>

#include "treeslam/error.hpp"

namespace treeslam {

namespace {

Eigen::Matrix3d diag3(const Eigen::Vector3d& sigma) { return sigma.cwiseAbs2().asDiagonal(); }

RangeBearing measure(const DetectionRecord& d, const PipelineConfig& cfg) {
  if (!d.cloud) return d.measurement;
  try {
    const Eigen::Vector3d center =
        cfg.use_pca ? estimate_trunk_center(*d.cloud).center3d : trunk_centroid(*d.cloud);
    return camera_point_to_measurement(center, cfg.camera);
  } catch (const DegenerateGeometryError&) {
    return d.measurement;
  }
}

// Localizes the frame's detections through `pose` and applies the per-frame
// duplicate filter.
std::vector<Detection> frame_detections(const FrameRecord& rec, const Pose2& pose,
                                        const PipelineConfig& cfg) {
  std::vector<Detection> dets;
  dets.reserve(rec.detections.size());
  for (const auto& d : rec.detections) {
    Detection det;
    det.bbox = d.bbox;
    det.confidence = d.confidence;
    det.measurement = measure(d, cfg);
    det.world_pos = project_range_bearing(pose, det.measurement);
    dets.push_back(det);
  }
  return filter_detections(dets, cfg.planting_distance, cfg.filter);
}

struct Start {
  Pose2 mean;
  Eigen::Matrix3d cov;
  int gps_frame = -1;  // index of the fix folded into the prior
};

// Prior on pose 0 from the first GPS fix, carried back to frame 0 along the
// dead-reckoned odometry; the configured initial pose when the log has none.
Start initial_state(std::span<const FrameRecord> frames, const PipelineConfig& cfg) {
  Start s;
  const double theta0 = normalize_angle(cfg.initial_pose.theta);
  Pose2 dr{0.0, 0.0, theta0};
  for (std::size_t k = 0; k < frames.size(); ++k) {
    if (k > 0) dr = pose_compose(dr, frames[k].odom);
    if (!frames[k].gps) continue;
    const GpsFix& fix = *frames[k].gps;
    const double drift2 = static_cast<double>(k) * cfg.noise.odom_sigma.head<2>().squaredNorm();
    const double sigma = std::sqrt(fix.sigma * fix.sigma + drift2);
    s.mean = {fix.x - dr.x, fix.y - dr.y, theta0};
    s.cov = diag3({sigma, sigma, cfg.initial_heading_sigma});
    s.gps_frame = static_cast<int>(k);
    return s;
  }
  s.mean = cfg.initial_pose;
  s.cov = diag3({cfg.initial_position_sigma, cfg.initial_position_sigma, cfg.initial_heading_sigma});
  return s;
}

Eigen::VectorXd gps_vector(const GpsFix& fix, const Pose2& pose_estimate, bool full_pose) {
  if (!full_pose) return Eigen::Vector2d(fix.x, fix.y);
  return Eigen::Vector3d(fix.x, fix.y, pose_estimate.theta);
}

}  // namespace

AssociationConfig association_config(const PipelineConfig& cfg) {
  AssociationConfig a = AssociationConfig::for_planting_distance(cfg.planting_distance);
  a.enable_cascade = cfg.enable_cascade;
  a.stage1_world_gate = cfg.association_world_gate;
  return a;
}

PipelineResult run_pipeline(std::span<const FrameRecord> frames, const PipelineConfig& cfg) {
  if (!(cfg.planting_distance > 0.0)) throw Error("planting distance must be positive");
  PipelineResult out;
  out.map.frame = "world";
  if (frames.empty()) return out;

  FactorGraph& graph = out.graph;
  Tracker tracker(association_config(cfg));
  const Eigen::Matrix3d odom_cov = diag3(cfg.noise.odom_sigma);
  const Start start = initial_state(frames, cfg);
  graph.initialize(start.mean, start.cov);

  for (std::size_t i = 0; i < frames.size(); ++i) {
    const FrameRecord& rec = frames[i];
    const int frame = static_cast<int>(i);
    const VariableKey pose = i == 0 ? pose_key(0) : graph.add_pose(rec.odom, odom_cov);

    if (rec.gps && static_cast<int>(i) != start.gps_frame) {
      const double var = rec.gps->sigma * rec.gps->sigma;
      if (cfg.gps_full_pose) {
        Eigen::Matrix3d cov = Eigen::Matrix3d::Identity() * var;
        cov(2, 2) = 1e6;
        graph.add_gps(pose, gps_vector(*rec.gps, graph.estimates().pose(frame), true), cov);
      } else {
        graph.add_gps(pose, gps_vector(*rec.gps, {}, false), Eigen::Matrix2d::Identity() * var);
      }
    }

    const std::vector<Detection> dets = frame_detections(rec, graph.estimates().pose(frame), cfg);
    const AssociationResult assoc = tracker.step(dets, frame);

    struct Seen {
      int id;
      const Detection* det;
      bool spawned;
    };
    std::vector<Seen> seen;
    for (const auto& m : assoc.matches) {
      seen.push_back({m.track_id, &dets[m.detection], false});
      switch (m.stage) {
        case MatchStage::kIou: ++out.stages.iou; break;
        case MatchStage::kCascade: ++out.stages.cascade; break;
        case MatchStage::kGlobal: ++out.stages.global; break;
      }
    }
    for (std::size_t k = 0; k < assoc.new_track_detections.size(); ++k) {
      seen.push_back({assoc.new_track_ids[k], &dets[assoc.new_track_detections[k]], true});
      ++out.stages.new_tracks;
    }
    std::sort(seen.begin(), seen.end(), [](const Seen& a, const Seen& b) { return a.id < b.id; });
    for (const Seen& s : seen) {
      graph.add_observation(pose, s.id, s.det->measurement, cfg.noise.range_sigma, cfg.noise.bearing_sigma);
    }
    if (cfg.inter_distance) {
      int pairs = 0;
      for (std::size_t a = 0; a < seen.size(); ++a) {
        for (std::size_t b = a + 1; b < seen.size(); ++b) {
          if (cfg.max_pairs_per_frame > 0 && pairs >= cfg.max_pairs_per_frame) break;
          if (!cfg.inter_distance_on_spawn && (seen[a].spawned || seen[b].spawned)) continue;
          const double delta = distance(seen[a].det->world_pos, seen[b].det->world_pos);
          graph.add_inter_distance(seen[a].id, seen[b].id, delta, cfg.noise.inter_distance_sigma);
          ++pairs;
        }
      }
    }

    if (cfg.incremental) graph.optimize(OptimizeMode::kIncremental, cfg.solver);
    for (const auto& t : tracker.tracks()) {
      if (graph.has_landmark(t.id)) tracker.set_world_pos(t.id, graph.estimates().landmark(t.id));
    }
  }

  out.incremental = graph.estimates();
  out.batch = graph.optimize(OptimizeMode::kBatch, cfg.solver);
  const Values& est = graph.estimates();
  out.trajectory = est.poses;
  for (const auto& t : tracker.tracks()) {
    out.track_hits.push_back(t.hits);
    if (t.hits >= cfg.min_track_hits && graph.has_landmark(t.id)) {
      out.map.trees.push_back({t.id, est.landmark(t.id)});
    }
  }
  return out;
}

NavigationFilter::NavigationFilter(const Pose2& initial, const Eigen::Matrix3d& initial_cov)
    : pose_(initial), cov_(initial_cov) {}

void NavigationFilter::predict(const Pose2Delta& u, const Eigen::Matrix3d& odom_cov) {
  const double c = std::cos(pose_.theta);
  const double s = std::sin(pose_.theta);
  Eigen::Matrix3d f = Eigen::Matrix3d::Identity();
  f(0, 2) = -s * u.dx - c * u.dy;
  f(1, 2) = c * u.dx - s * u.dy;
  Eigen::Matrix3d g = Eigen::Matrix3d::Identity();
  g.topLeftCorner<2, 2>() << c, -s, s, c;
  pose_ = pose_compose(pose_, u);
  cov_ = f * cov_ * f.transpose() + g * odom_cov * g.transpose();
}

void NavigationFilter::update_position(double x, double y, double sigma) {
  const Eigen::Vector2d innovation(x - pose_.x, y - pose_.y);
  const Eigen::Matrix2d s = cov_.topLeftCorner<2, 2>() + Eigen::Matrix2d::Identity() * sigma * sigma;
  const Eigen::Matrix<double, 3, 2> gain = cov_.leftCols<2>() * s.inverse();
  const Eigen::Vector3d dx = gain * innovation;
  pose_ = {pose_.x + dx(0), pose_.y + dx(1), normalize_angle(pose_.theta + dx(2))};
  Eigen::Matrix<double, 2, 3> h = Eigen::Matrix<double, 2, 3>::Zero();
  h(0, 0) = h(1, 1) = 1.0;
  cov_ = (Eigen::Matrix3d::Identity() - gain * h) * cov_;
  cov_ = (0.5 * (cov_ + cov_.transpose())).eval();
}

std::vector<Point2> localize_detections(std::span<const FrameRecord> frames, const PipelineConfig& cfg) {
  std::vector<Point2> out;
  if (frames.empty()) return out;
  const Start start = initial_state(frames, cfg);
  NavigationFilter nav(start.mean, start.cov);
  const Eigen::Matrix3d odom_cov = diag3(cfg.noise.odom_sigma);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const FrameRecord& rec = frames[i];
    if (i > 0) nav.predict(rec.odom, odom_cov);
    if (rec.gps && static_cast<int>(i) != start.gps_frame) nav.update_position(rec.gps->x, rec.gps->y, rec.gps->sigma);
    for (const auto& d : frame_detections(rec, nav.pose(), cfg)) out.push_back(d.world_pos);
  }
  return out;
}

TreeMap run_baseline(std::span<const FrameRecord> frames, const PipelineConfig& cfg,
                     const BaselineConfig& baseline) {
  const std::vector<Point2> points = localize_detections(frames, cfg);
  return baseline_map(points, baseline.eps, baseline.min_samples);
}

PipelineConfig pipeline_config_for(const ScenarioConfig& scenario) {
  PipelineConfig cfg;
  cfg.planting_distance = scenario.orchard.planting_distance;
  cfg.camera = scenario.sensors.camera;
  cfg.initial_pose.theta = scenario.orchard.row_heading;
  return cfg;
}

EvalReport ablation_run(const ScenarioConfig& scenario, const AblationToggles& toggles, PipelineConfig base) {
  const SimulationOutput sim = simulate_scenario(scenario);
  const PipelineConfig derived = pipeline_config_for(scenario);
  base.planting_distance = derived.planting_distance;
  base.camera = derived.camera;
  base.initial_pose.theta = derived.initial_pose.theta;
  base.use_pca = toggles.pca;
  base.enable_cascade = toggles.cascade;
  base.inter_distance = toggles.inter_distance;
  const PipelineResult res = run_pipeline(sim.frames, base);
  const double pd = base.planting_distance;
  return evaluate(res.map, sim.truth.visible_trees, 0.5 * pd, pd);
}

}  // namespace treeslam
