#include <doctest.h>

#include <functional>
#include <sstream>

#include "treeslam/error.hpp"
#include "treeslam/frame_log.hpp"
#include "treeslam/io.hpp"

using namespace treeslam;

namespace {

std::string where_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const SchemaError& e) {
    return e.where();
  }
  return "<no error>";
}

std::vector<FrameRecord> parse_log(const std::string& text) {
  std::istringstream in(text);
  return read_frame_log(in);
}

const char* kGood =
    R"({"frame":0,"odom":{"dx":0,"dy":0,"dtheta":0},"gps":{"x":1,"y":2,"sigma":0.3},"detections":[]})";

}  // namespace

TEST_CASE("frame log round trip") {
  ScenarioConfig sc = scenario_preset("pear-row");
  sc.orchard.n_trees = 12;
  sc.sensors.emit_clouds = true;
  sc.sensors.cloud_points = 8;
  const auto frames = simulate_scenario(sc).frames;
  std::ostringstream os;
  write_frame_log(os, frames);
  const auto back = parse_log(os.str());
  REQUIRE(back.size() == frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    CHECK(back[i].frame == frames[i].frame);
    CHECK(back[i].odom.dx == frames[i].odom.dx);
    CHECK(back[i].odom.dtheta == frames[i].odom.dtheta);
    CHECK(back[i].gps.has_value() == frames[i].gps.has_value());
    if (frames[i].gps) CHECK(back[i].gps->y == frames[i].gps->y);
    REQUIRE(back[i].detections.size() == frames[i].detections.size());
    for (std::size_t k = 0; k < frames[i].detections.size(); ++k) {
      const auto& a = back[i].detections[k];
      const auto& b = frames[i].detections[k];
      CHECK(a.confidence == b.confidence);
      CHECK(a.measurement.bearing == b.measurement.bearing);
      CHECK(a.bbox.x_max == b.bbox.x_max);
      REQUIRE(a.cloud.has_value());
      CHECK(a.cloud->points == b.cloud->points);
    }
  }
  std::ostringstream again;
  write_frame_log(again, back);
  CHECK(again.str() == os.str());
}

TEST_CASE("frame log schema errors name the frame") {
  CHECK(parse_log(std::string(kGood) + "\n\n").size() == 1);
  CHECK(where_of([] { parse_log("{not json\n"); }) == "line 1");
  CHECK(where_of([] { parse_log(std::string(kGood) + "\n" + R"({"odom":{}})"); }) == "line 2");
  CHECK(where_of([] { parse_log(R"({"frame":"7"})"); }) == "line 1");
  CHECK(where_of([] {
          parse_log(R"({"frame":4,"odom":{"dx":0,"dy":0},"gps":null,"detections":[]})");
        }) == "frame 4");
  CHECK(where_of([] {
          parse_log(R"({"frame":3,"odom":{"dx":0,"dy":0,"dtheta":0},"gps":{"x":0,"y":0,"sigma":0},"detections":[]})");
        }) == "frame 3");
  CHECK(where_of([] {
          parse_log(R"({"frame":2,"odom":{"dx":0,"dy":0,"dtheta":0},"gps":null,"detections":[{"bbox":[5,0,1,1],"conf":0.5,"range":1,"bearing":0}]})");
        }) == "frame 2");
  CHECK(where_of([] {
          parse_log(R"({"frame":2,"odom":{"dx":0,"dy":0,"dtheta":0},"gps":null,"detections":[{"bbox":[0,0,1,1],"conf":1.5,"range":1,"bearing":0}]})");
        }) == "frame 2");
  CHECK(where_of([] {
          parse_log(R"({"frame":2,"odom":{"dx":0,"dy":0,"dtheta":0},"gps":null,"detections":[{"bbox":[0,0,1,1],"conf":0.5,"range":-1,"bearing":0}]})");
        }) == "frame 2");
  CHECK(where_of([] { parse_log(std::string(kGood) + "\n" + kGood + "\n"); }) == "frame 0");
}

TEST_CASE("tree map csv") {
  TreeMap m;
  m.trees = {{0, {1.25, -3.5}}, {7, {0.0, 2.0}}};
  std::ostringstream os;
  write_tree_map_csv(os, m);
  CHECK(os.str().rfind("id,x,y\n", 0) == 0);
  std::istringstream in(os.str());
  const TreeMap back = read_tree_map_csv(in);
  REQUIRE(back.size() == 2);
  CHECK(back.trees[1].id == 7);
  CHECK(back.trees[0].position.x == doctest::Approx(1.25));
  CHECK(back.trees[0].position.y == doctest::Approx(-3.5));

  std::istringstream no_header("1,2,3\n");
  CHECK(read_tree_map_csv(no_header).size() == 1);

  auto fails_at = [](const std::string& text) {
    return where_of([&] {
      std::istringstream s(text);
      read_tree_map_csv(s);
    });
  };
  CHECK(fails_at("id,x,y\n1,2\n") == "line 2");
  CHECK(fails_at("id,x,y\n1,2,abc\n") == "line 2");
  CHECK(fails_at("id,x,y\n1,2,3\n1,4,5\n") == "line 3");
  CHECK(fails_at("id,x,z\n") == "line 1");
  CHECK(fails_at("id,x,y\n1.5,0,0\n") == "line 2");
}

TEST_CASE("run config") {
  const RunConfig d = parse_run_config("{}");
  CHECK(d.scenario.name == "pear-row");
  CHECK(d.pipeline.planting_distance == 1.1);

  const RunConfig c = parse_run_config(R"({
    "preset": "apple-row", "seed": 9,
    "sensors": {"miss_prob": 0.2, "camera": {"height": 0.8}},
    "pipeline": {"enable_cascade": false, "association_world_gate": false,
                 "solver": {"huber_threshold": 1.5}},
    "baseline": {"min_samples": 3}})");
  CHECK(c.scenario.name == "apple-row");
  CHECK(c.scenario.sensors.seed == 9);
  CHECK(c.scenario.sensors.miss_prob == 0.2);
  CHECK(c.scenario.sensors.camera.height == 0.8);
  CHECK(c.pipeline.planting_distance == scenario_preset("apple-row").orchard.planting_distance);
  CHECK_FALSE(c.pipeline.enable_cascade);
  CHECK_FALSE(c.pipeline.association_world_gate);
  CHECK(c.pipeline.solver.huber_threshold == 1.5);
  CHECK(c.baseline.min_samples == 3);

  CHECK(where_of([] { parse_run_config(R"({"sensors": {"miss": 0.2}})"); }) == "sensors.miss");
  CHECK(where_of([] { parse_run_config(R"({"pipeline": {"solver": {"max_iterations": 1.5}}})"); }) ==
        "pipeline.solver.max_iterations");
  CHECK(where_of([] { parse_run_config(R"({"orchard": {"row_origin": [1]}})"); }) == "orchard.row_origin");
  CHECK(where_of([] { parse_run_config(R"({"trajectory": {"path": "spiral"}})"); }) == "trajectory.path");
  CHECK(where_of([] { parse_run_config("[1,2"); }) == "config");
  CHECK_THROWS_AS(parse_run_config(R"({"preset": "vineyard"})"), Error);
}

TEST_CASE("pipeline config json parses back") {
  PipelineConfig p;
  p.enable_cascade = false;
  p.min_track_hits = 5;
  p.initial_pose = {1, 2, 0.5};
  const std::string text = pipeline_config_json(p);
  const RunConfig c = parse_run_config("{\"pipeline\": " + text + "}");
  CHECK(pipeline_config_json(c.pipeline) == text);
}

TEST_CASE("eval report json and svg") {
  EvalReport r;
  r.tp = 3;
  r.precision = 0.75;
  const std::string j = eval_report_json(r);
  CHECK(j.find("\"tp\": 3") != std::string::npos);
  CHECK(j.find("\"precision\": 0.75") != std::string::npos);

  TreeMap gt, pred;
  gt.trees = {{0, {0, 0}}, {1, {1.1, 0}}};
  pred.trees = {{0, {0.1, 0}}};
  const std::string svg = svg_overlay(pred, gt, match_maps(pred, gt, 0.55));
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("<line") != std::string::npos);
}
