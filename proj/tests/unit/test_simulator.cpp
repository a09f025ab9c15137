#include <doctest.h>

#include <sstream>

#include "oracles.hpp"
#include "treeslam/error.hpp"
#include "treeslam/frame_log.hpp"
#include "treeslam/simulator.hpp"

using namespace treeslam;
using doctest::Approx;

namespace {

SensorConfig noiseless() {
  SensorConfig s;
  s.odom_sigma.setZero();
  s.gps_sigma = 0.0;
  s.gps_dropout_prob = 0.0;
  s.miss_prob = 0.0;
  s.false_positive_rate = 0.0;
  s.range_sigma = 0.0;
  s.bearing_sigma = 0.0;
  s.bbox_sigma_px = 0.0;
  return s;
}

std::string log_text(const SimulationOutput& out) {
  std::ostringstream os;
  write_frame_log(os, out.frames);
  return os.str();
}

}  // namespace

TEST_CASE("orchard layout") {
  OrchardConfig cfg;
  cfg.n_trees = 3;
  const TreeMap m = generate_orchard(cfg, 1);
  REQUIRE(m.size() == 3);
  CHECK(m.trees[0].position == Point2{0, 0});
  CHECK(m.trees[1].position.x == Approx(1.1));
  CHECK(m.trees[2].position.x == Approx(2.2));
  CHECK(m.trees[2].position.y == 0.0);

  cfg.n_trees = 135;
  const TreeMap row = generate_orchard(cfg, 1);
  CHECK(distance(row.trees.front().position, row.trees.back().position) == Approx(147.4));

  cfg.position_jitter_sigma = 0.05;
  const TreeMap a = generate_orchard(cfg, 9), b = generate_orchard(cfg, 9), c = generate_orchard(cfg, 10);
  auto same = [](const TreeMap& x, const TreeMap& y) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!(x.trees[i].position == y.trees[i].position)) return false;
    }
    return true;
  };
  CHECK(same(a, b));
  CHECK_FALSE(same(a, c));

  cfg.row_heading = kPi / 2;
  cfg.position_jitter_sigma = 0.0;
  cfg.row_origin = {5, 5};
  const TreeMap turned = generate_orchard(cfg, 1);
  CHECK(std::abs(turned.trees[1].position.x - 5.0) < 1e-12);
  CHECK(turned.trees[1].position.y == Approx(6.1));

  cfg.n_trees = 0;
  CHECK_THROWS_AS(generate_orchard(cfg, 1), Error);
}

TEST_CASE("U-shape trajectory geometry") {
  OrchardConfig orchard;
  TrajectoryConfig cfg;
  const auto traj = generate_trajectory(orchard, cfg);
  REQUIRE(traj.size() > 100);
  const double row_len = (orchard.n_trees - 1) * orchard.planting_distance;
  CHECK(traj.front().x == Approx(row_len / 2));
  CHECK(traj.front().y == Approx(cfg.lateral_offset));
  CHECK(traj.front().theta == 0.0);
  CHECK(std::abs(oracle::wrap(traj.back().theta - traj.front().theta)) == Approx(kPi));
  CHECK(traj.back().y == Approx(-cfg.lateral_offset));
  CHECK(traj.back().x <= row_len / 2 - cfg.overshoot + cfg.speed);
  for (std::size_t i = 1; i < traj.size(); ++i) {
    CHECK(distance({traj[i].x, traj[i].y}, {traj[i - 1].x, traj[i - 1].y}) <= cfg.speed + 1e-9);
  }
  // Straight segments (heading 0 or pi) keep the lateral offset.
  for (const auto& p : traj) {
    if (std::abs(std::sin(p.theta)) < 1e-12) CHECK(std::abs(p.y) >= cfg.lateral_offset - 1e-6);
  }
}

TEST_CASE("full loop closes near the start") {
  OrchardConfig orchard;
  orchard.n_trees = 20;
  TrajectoryConfig cfg;
  cfg.path = PathKind::kFullLoop;
  const auto traj = generate_trajectory(orchard, cfg);
  CHECK(distance({traj.front().x, traj.front().y}, {traj.back().x, traj.back().y}) <= 2 * cfg.speed);
}

TEST_CASE("trajectory respects the row heading") {
  OrchardConfig orchard;
  orchard.n_trees = 10;
  orchard.row_heading = 0.7;
  orchard.row_origin = {3, -2};
  const auto traj = generate_trajectory(orchard, {});
  const Pose2 row{3, -2, 0.7};
  for (const auto& p : traj) {
    const Pose2Delta local = pose_between(row, p);
    if (std::abs(std::sin(oracle::wrap(p.theta - 0.7))) < 1e-9) CHECK(std::abs(local.dy) >= 1.5 - 1e-6);
  }
}

TEST_CASE("trajectory config validation") {
  OrchardConfig orchard;
  TrajectoryConfig cfg;
  cfg.turn_radius = 2.0;
  CHECK_THROWS_AS(generate_trajectory(orchard, cfg), Error);
  cfg = {};
  cfg.speed = 0.0;
  CHECK_THROWS_AS(generate_trajectory(orchard, cfg), Error);
}

TEST_CASE("noiseless simulation reproduces the truth") {
  ScenarioConfig sc;
  sc.orchard.n_trees = 15;
  sc.sensors = noiseless();
  const SimulationOutput out = simulate_scenario(sc);
  const auto& traj = out.truth.trajectory;
  REQUIRE(out.frames.size() == traj.size());
  Pose2 p = traj.front();
  for (std::size_t i = 0; i < out.frames.size(); ++i) {
    const FrameRecord& f = out.frames[i];
    CHECK(f.frame == static_cast<int>(i));
    if (i > 0) p = pose_compose(p, f.odom);
    CHECK(std::abs(p.x - traj[i].x) < 1e-9);
    CHECK(std::abs(p.y - traj[i].y) < 1e-9);
    REQUIRE(f.gps.has_value());
    CHECK(f.gps->x == traj[i].x);
    CHECK(f.gps->y == traj[i].y);
    for (const auto& d : f.detections) {
      // Exact measurements land on a planted tree.
      const Point2 w = project_range_bearing(traj[i], d.measurement);
      double best = 1e9;
      for (const auto& t : out.truth.trees.trees) best = std::min(best, distance(w, t.position));
      CHECK(best < 1e-9);
      CHECK(d.bbox.valid());
    }
  }
  CHECK(out.truth.visible_trees.size() > 0);
  CHECK(out.truth.visible_trees.size() <= out.truth.trees.size());
}

TEST_CASE("detections stay inside the sensing range") {
  ScenarioConfig sc = scenario_preset("pear-row");
  sc.orchard.n_trees = 30;
  sc.sensors.false_positive_rate = 0.0;
  sc.sensors.range_sigma = 0.0;
  const SimulationOutput out = simulate_scenario(sc);
  std::size_t n = 0;
  for (std::size_t i = 0; i < out.frames.size(); ++i) {
    for (const auto& d : out.frames[i].detections) {
      CHECK(d.measurement.range <= sc.sensors.detection_range + 1e-9);
      // Right-facing camera: bearings within the wedge around -pi/2.
      CHECK(std::abs(oracle::wrap(d.measurement.bearing + kPi / 2)) <= 0.5 * sc.sensors.detection_fov + 0.05);
      ++n;
    }
  }
  CHECK(n > 0);
}

TEST_CASE("GPS availability follows the dropout probability") {
  ScenarioConfig sc = scenario_preset("pear-row");
  sc.sensors.gps_dropout_prob = 0.3;
  const SimulationOutput out = simulate_scenario(sc);
  const double n = static_cast<double>(out.frames.size());
  double fixes = 0;
  for (const auto& f : out.frames) fixes += f.gps.has_value();
  const double se = std::sqrt(0.3 * 0.7 / n);
  CHECK(std::abs(fixes / n - 0.7) < 3 * se);
}

TEST_CASE("miss probability and bursts") {
  for (double burst : {1.0, 8.0}) {
    ScenarioConfig sc = scenario_preset("pear-row");
    sc.orchard.n_trees = 40;
    sc.sensors.miss_prob = 0.5;
    sc.sensors.miss_burst_frames = burst;
    sc.sensors.false_positive_rate = 0.0;
    const SimulationOutput base_out = [&] {
      ScenarioConfig all = sc;
      all.sensors.miss_prob = 0.0;
      return simulate_scenario(all);
    }();
    const SimulationOutput out = simulate_scenario(sc);
    double total = 0, seen = 0;
    for (const auto& f : base_out.frames) total += f.detections.size();
    for (const auto& f : out.frames) seen += f.detections.size();
    INFO("burst " << burst);
    CHECK(seen / total == Approx(0.5).epsilon(0.15));
  }
}

TEST_CASE("false positives are low confidence and inside the wedge") {
  ScenarioConfig sc = scenario_preset("pear-row");
  sc.orchard.n_trees = 5;
  sc.orchard.row_origin = {1000, 1000};  // no real trees anywhere near
  sc.trajectory = {};
  sc.sensors.false_positive_rate = 1.0;
  OrchardConfig far = sc.orchard;
  const TreeMap orchard = generate_orchard(far, 1);
  OrchardConfig path_row;
  path_row.n_trees = 20;
  const auto traj = generate_trajectory(path_row, sc.trajectory);
  const SimulationOutput out = simulate(orchard, 0.1, traj, sc.sensors);
  double n = 0;
  for (const auto& f : out.frames) {
    for (const auto& d : f.detections) {
      CHECK(d.confidence >= sc.sensors.false_confidence_min);
      CHECK(d.confidence <= sc.sensors.false_confidence_max);
      CHECK(d.measurement.range <= sc.sensors.detection_range + 1e-9);
      ++n;
    }
  }
  CHECK(n / out.frames.size() == Approx(1.0).epsilon(0.1));
  CHECK(out.truth.visible_trees.size() == 0);
}

TEST_CASE("simulation is deterministic per seed") {
  ScenarioConfig sc = scenario_preset("pear-row-degraded");
  sc.orchard.n_trees = 20;
  sc.sensors.emit_clouds = true;
  sc.sensors.cloud_points = 10;
  const std::string a = log_text(simulate_scenario(sc));
  const std::string b = log_text(simulate_scenario(sc));
  CHECK(a == b);
  sc.sensors.seed = 2;
  CHECK(log_text(simulate_scenario(sc)) != a);
}

TEST_CASE("emitted clouds sit on the visible trunk surface") {
  ScenarioConfig sc;
  sc.orchard.n_trees = 10;
  sc.sensors = noiseless();
  sc.sensors.emit_clouds = true;
  sc.sensors.cloud_depth_sigma = 0.0;
  const SimulationOutput out = simulate_scenario(sc);
  int checked = 0;
  for (const auto& f : out.frames) {
    for (const auto& d : f.detections) {
      REQUIRE(d.cloud.has_value());
      const Eigen::Vector3d c = trunk_centroid(*d.cloud);
      // Camera-frame centroid maps back near the logged measurement.
      const RangeBearing z = camera_point_to_measurement(c, sc.sensors.camera);
      CHECK(std::abs(z.range - d.measurement.range) < sc.orchard.trunk_radius + 1e-9);
      ++checked;
    }
  }
  CHECK(checked > 0);
}

TEST_CASE("sample_trunk_cloud geometry") {
  std::mt19937_64 rng(4);
  const Eigen::Vector3d base(3.0, 1.0, -0.5);
  const auto cloud = sample_trunk_cloud(base, 0.2, 1.5, 500, 0.0, rng);
  for (const auto& p : cloud.points) {
    CHECK(std::hypot(p.x() - base.x(), p.y() - base.y()) == Approx(0.2));
    CHECK(p.z() >= base.z());
    CHECK(p.z() <= base.z() + 1.5);
    // Facing the camera: closer than the axis.
    CHECK(p.head<2>().norm() < base.head<2>().norm());
  }
  std::mt19937_64 rng2(4);
  CHECK_THROWS_AS(sample_trunk_cloud({0.05, 0, 0}, 0.1, 1.0, 10, 0.0, rng2), DegenerateGeometryError);
}

TEST_CASE("presets") {
  for (const auto& name : scenario_preset_names()) CHECK(scenario_preset(name).name == name);
  CHECK(scenario_preset("pear-row").orchard.n_trees == 135);
  CHECK(scenario_preset("pear-row").orchard.planting_distance == 1.1);
  CHECK(scenario_preset("pear-row").sensors.gps_sigma == 0.30);
  CHECK(scenario_preset("pear-row").sensors.gps_dropout_prob == 0.10);
  CHECK(scenario_preset("pear-row-degraded").sensors.gps_bias_walk_sigma == 0.05);
  CHECK(scenario_preset("pear-row-intermittent").sensors.miss_prob == 0.5);
  CHECK_THROWS_AS(scenario_preset("vineyard"), Error);
}
