#include <doctest.h>

#include "oracles.hpp"
#include "treeslam/error.hpp"
#include "treeslam/io.hpp"
#include "treeslam/pipeline.hpp"

using namespace treeslam;
using doctest::Approx;

namespace {

ScenarioConfig small_scenario() {
  ScenarioConfig sc = scenario_preset("pear-row");
  sc.orchard.n_trees = 16;
  sc.trajectory.overshoot = 1.0;
  return sc;
}

ScenarioConfig noiseless_scenario() {
  ScenarioConfig sc = small_scenario();
  auto& s = sc.sensors;
  s.odom_sigma.setZero();
  s.gps_dropout_prob = 1.0;
  s.miss_prob = 0.0;
  s.false_positive_rate = 0.0;
  s.range_sigma = 0.0;
  s.bearing_sigma = 0.0;
  s.bbox_sigma_px = 0.0;
  s.true_confidence_sigma = 0.0;
  return sc;
}

double nearest(const Point2& p, const TreeMap& m) {
  double best = 1e300;
  for (const auto& t : m.trees) best = std::min(best, distance(p, t.position));
  return best;
}

}  // namespace

TEST_CASE("noiseless run recovers every visible tree") {
  const ScenarioConfig sc = noiseless_scenario();
  const SimulationOutput sim = simulate_scenario(sc);
  PipelineConfig cfg = pipeline_config_for(sc);
  cfg.initial_pose = sim.truth.trajectory.front();
  const PipelineResult res = run_pipeline(sim.frames, cfg);

  CHECK(res.map.size() == sim.truth.visible_trees.size());
  for (const auto& t : res.map.trees) CHECK(nearest(t.position, sim.truth.visible_trees) < 1e-3);
  for (const auto& t : sim.truth.visible_trees.trees) CHECK(nearest(t.position, res.map) < 1e-3);
  REQUIRE(res.trajectory.size() == sim.truth.trajectory.size());
  for (std::size_t i = 0; i < res.trajectory.size(); ++i) {
    CHECK(distance({res.trajectory[i].x, res.trajectory[i].y},
                   {sim.truth.trajectory[i].x, sim.truth.trajectory[i].y}) < 1e-3);
    CHECK(std::abs(oracle::wrap(res.trajectory[i].theta - sim.truth.trajectory[i].theta)) < 1e-3);
  }
  CHECK(res.batch.final_cost < 1e-6);
  CHECK(res.stages.new_tracks == static_cast<int>(sim.truth.visible_trees.size()));

  const EvalReport base = evaluate(run_baseline(sim.frames, cfg), sim.truth.visible_trees, 0.55, 1.1);
  CHECK(base.recall == 1.0);
  CHECK(base.fp == 0);
  CHECK(base.mean_tp_error < 1e-6);
}

TEST_CASE("frames without detections") {
  SimulationOutput sim = simulate_scenario(small_scenario());
  for (auto& f : sim.frames) f.detections.clear();
  const PipelineConfig cfg = pipeline_config_for(small_scenario());
  const PipelineResult res = run_pipeline(sim.frames, cfg);
  CHECK(res.map.empty());
  CHECK(res.trajectory.size() == sim.frames.size());
  CHECK(res.graph.estimates().landmarks.empty());
  CHECK(run_baseline(sim.frames, cfg).empty());

  const PipelineResult none = run_pipeline({}, cfg);
  CHECK(none.map.empty());
  CHECK(none.trajectory.empty());
}

TEST_CASE("pipeline output is deterministic") {
  ScenarioConfig sc = small_scenario();
  sc.sensors.seed = 4;
  const SimulationOutput sim = simulate_scenario(sc);
  const PipelineConfig cfg = pipeline_config_for(sc);
  const PipelineResult a = run_pipeline(sim.frames, cfg);
  const PipelineResult b = run_pipeline(sim.frames, cfg);
  REQUIRE(a.map.size() == b.map.size());
  for (std::size_t i = 0; i < a.map.size(); ++i) {
    CHECK(a.map.trees[i].id == b.map.trees[i].id);
    CHECK(a.map.trees[i].position == b.map.trees[i].position);
  }
  CHECK(graph_snapshot_json(a.graph) == graph_snapshot_json(b.graph));
}

TEST_CASE("noisy run matches the incremental estimate") {
  const ScenarioConfig sc = small_scenario();
  const SimulationOutput sim = simulate_scenario(sc);
  const PipelineResult res = run_pipeline(sim.frames, pipeline_config_for(sc));
  double worst = 0.0;
  for (std::size_t i = 0; i < res.trajectory.size(); ++i) {
    worst = std::max(worst, distance({res.trajectory[i].x, res.trajectory[i].y},
                                     {res.incremental.poses[i].x, res.incremental.poses[i].y}));
  }
  for (const auto& [id, p] : res.incremental.landmarks) {
    worst = std::max(worst, distance(p, res.batch.estimates.landmark(id)));
  }
  CHECK(worst < 1e-3);
  const EvalReport r = evaluate(res.map, sim.truth.visible_trees, 0.55, 1.1);
  CHECK(r.recall > 0.9);
  CHECK(r.mean_tp_error < 0.2);
}

TEST_CASE("anchoring from a later first fix") {
  const ScenarioConfig sc = small_scenario();
  SimulationOutput sim = simulate_scenario(sc);
  for (int i = 0; i < 5; ++i) sim.frames[i].gps.reset();
  const PipelineConfig cfg = pipeline_config_for(sc);
  const PipelineResult res = run_pipeline(sim.frames, cfg);
  double worst = 0.0;
  for (std::size_t i = 0; i < res.trajectory.size(); ++i) {
    worst = std::max(worst, distance({res.trajectory[i].x, res.trajectory[i].y},
                                     {sim.truth.trajectory[i].x, sim.truth.trajectory[i].y}));
  }
  CHECK(worst < 0.5);
  CHECK(evaluate(res.map, sim.truth.visible_trees, 0.55, 1.1).recall > 0.9);
  const EvalReport base = evaluate(run_baseline(sim.frames, cfg), sim.truth.visible_trees, 0.55, 1.1);
  CHECK(base.recall > 0.5);
}

TEST_CASE("track export threshold") {
  const ScenarioConfig sc = small_scenario();
  const SimulationOutput sim = simulate_scenario(sc);
  PipelineConfig cfg = pipeline_config_for(sc);
  cfg.min_track_hits = 1;
  const PipelineResult all = run_pipeline(sim.frames, cfg);
  int expected = 0;
  for (int h : all.track_hits) expected += h >= 3;
  cfg.min_track_hits = 3;
  const PipelineResult some = run_pipeline(sim.frames, cfg);
  CHECK(static_cast<int>(all.map.size()) == static_cast<int>(all.track_hits.size()));
  CHECK(static_cast<int>(some.map.size()) == expected);
}

TEST_CASE("ablation with every component on equals the standard run") {
  const ScenarioConfig sc = small_scenario();
  const SimulationOutput sim = simulate_scenario(sc);
  const PipelineResult res = run_pipeline(sim.frames, pipeline_config_for(sc));
  const EvalReport direct = evaluate(res.map, sim.truth.visible_trees, 0.55, 1.1);
  const EvalReport ablated = ablation_run(sc, {});
  CHECK(ablated.tp == direct.tp);
  CHECK(ablated.fp == direct.fp);
  CHECK(ablated.fn == direct.fn);
  CHECK(ablated.mean_tp_error == direct.mean_tp_error);
}

TEST_CASE("centroid fallback on clean trunk clouds") {
  ScenarioConfig sc = noiseless_scenario();
  sc.orchard.n_trees = 8;
  sc.sensors.emit_clouds = true;
  sc.sensors.cloud_points = 200;
  sc.sensors.cloud_depth_sigma = 0.0;
  PipelineConfig base;
  base.initial_pose = generate_trajectory(sc.orchard, sc.trajectory).front();
  const EvalReport pca = ablation_run(sc, {true, true, true}, base);
  const EvalReport centroid = ablation_run(sc, {false, true, true}, base);
  CHECK(pca.tp > 0);
  CHECK(centroid.mean_tp_error >= pca.mean_tp_error);
}

TEST_CASE("navigation filter") {
  NavigationFilter nav({0, 0, 0}, Eigen::Matrix3d::Identity() * 1e-4);
  const Pose2Delta u{1.0, 0.0, kPi / 2};
  nav.predict(u, Eigen::Matrix3d::Zero());
  CHECK(nav.pose().x == Approx(1.0));
  CHECK(nav.pose().theta == Approx(kPi / 2));
  // Heading uncertainty feeds the lateral position variance.
  nav.predict({1.0, 0.0, 0.0}, Eigen::Matrix3d::Zero());
  CHECK(nav.covariance()(0, 0) > 1e-4 + 0.5e-4);
  nav.update_position(5.0, 5.0, 1e-6);
  CHECK(nav.pose().x == Approx(5.0).epsilon(1e-6));
  CHECK(nav.pose().y == Approx(5.0).epsilon(1e-6));
  CHECK(nav.covariance()(0, 0) < 1e-10);
  CHECK((nav.covariance() - nav.covariance().transpose()).norm() == 0.0);
}

TEST_CASE("pipeline config validation") {
  PipelineConfig cfg;
  cfg.planting_distance = 0.0;
  const SimulationOutput sim = simulate_scenario(small_scenario());
  CHECK_THROWS_AS(run_pipeline(sim.frames, cfg), Error);
}
