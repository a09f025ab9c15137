#include "treeslam/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>

#include "treeslam/error.hpp"

namespace treeslam {

using nlohmann::json;

namespace {

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s(buf);
  if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& text, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw SchemaError(where, "'" + text + "' is not a finite number");
  }
}

json pose_json(const Pose2& p) { return json::array({p.x, p.y, p.theta}); }

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json key_json(const VariableKey& k) {
  return json::array({k.kind == VariableKind::kPose ? "pose" : "landmark", k.index});
}

// Applies the members of one config section, tracking the dotted path for
// error messages.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw SchemaError(path_, "expected an object");
  }

  template <class T>
  Section& field(const char* key, T& target) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return *this;
    read(*it, child(key), target);
    return *this;
  }

  Section& nested(const char* key, const std::function<void(Section&)>& fn) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return *this;
    Section sub(*it, child(key));
    fn(sub);
    sub.done();
    return *this;
  }

  void done() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw SchemaError(child(it.key()), "unknown field");
    }
  }

 private:
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  static void read(const json& v, const std::string& where, double& out) {
    if (!v.is_number()) throw SchemaError(where, "expected a number");
    out = v.get<double>();
    if (!std::isfinite(out)) throw SchemaError(where, "expected a finite number");
  }
  static void read(const json& v, const std::string& where, int& out) {
    if (!v.is_number_integer()) throw SchemaError(where, "expected an integer");
    out = v.get<int>();
  }
  static void read(const json& v, const std::string& where, std::uint64_t& out) {
    if (!v.is_number_unsigned()) throw SchemaError(where, "expected a non-negative integer");
    out = v.get<std::uint64_t>();
  }
  static void read(const json& v, const std::string& where, bool& out) {
    if (!v.is_boolean()) throw SchemaError(where, "expected a boolean");
    out = v.get<bool>();
  }
  static void read(const json& v, const std::string& where, std::string& out) {
    if (!v.is_string()) throw SchemaError(where, "expected a string");
    out = v.get<std::string>();
  }
  static void read(const json& v, const std::string& where, Eigen::Vector3d& out) {
    if (!v.is_array() || v.size() != 3) throw SchemaError(where, "expected a 3-element array");
    for (int i = 0; i < 3; ++i) read(v[i], where + "[" + std::to_string(i) + "]", out(i));
  }
  static void read(const json& v, const std::string& where, Point2& out) {
    if (!v.is_array() || v.size() != 2) throw SchemaError(where, "expected [x, y]");
    read(v[0], where + "[0]", out.x);
    read(v[1], where + "[1]", out.y);
  }
  static void read(const json& v, const std::string& where, Pose2& out) {
    if (!v.is_array() || v.size() != 3) throw SchemaError(where, "expected [x, y, theta]");
    read(v[0], where + "[0]", out.x);
    read(v[1], where + "[1]", out.y);
    read(v[2], where + "[2]", out.theta);
    out.theta = normalize_angle(out.theta);
  }
  static void read(const json& v, const std::string& where, PathKind& out) {
    if (v == "u_shape") {
      out = PathKind::kUShape;
    } else if (v == "full_loop") {
      out = PathKind::kFullLoop;
    } else {
      throw SchemaError(where, "expected \"u_shape\" or \"full_loop\"");
    }
  }
  static void read(const json& v, const std::string& where, std::optional<double>& out) {
    if (v.is_null()) {
      out.reset();
      return;
    }
    double x = 0.0;
    read(v, where, x);
    out = x;
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void apply_orchard(Section& s, OrchardConfig& o) {
  s.field("n_trees", o.n_trees)
      .field("planting_distance", o.planting_distance)
      .field("row_heading", o.row_heading)
      .field("position_jitter_sigma", o.position_jitter_sigma)
      .field("trunk_radius", o.trunk_radius)
      .field("row_origin", o.row_origin);
}

void apply_trajectory(Section& s, TrajectoryConfig& t) {
  s.field("path", t.path)
      .field("lateral_offset", t.lateral_offset)
      .field("speed", t.speed)
      .field("turn_radius", t.turn_radius)
      .field("end_margin", t.end_margin)
      .field("overshoot", t.overshoot);
}

void apply_sensors(Section& s, SensorConfig& c) {
  s.field("odom_sigma", c.odom_sigma)
      .field("gps_sigma", c.gps_sigma)
      .field("gps_dropout_prob", c.gps_dropout_prob)
      .field("gps_bias_walk_sigma", c.gps_bias_walk_sigma)
      .field("gps_bias_correlation_frames", c.gps_bias_correlation_frames)
      .field("detection_range", c.detection_range)
      .field("detection_fov", c.detection_fov)
      .field("miss_prob", c.miss_prob)
      .field("miss_burst_frames", c.miss_burst_frames)
      .field("false_positive_rate", c.false_positive_rate)
      .field("range_sigma", c.range_sigma)
      .field("bearing_sigma", c.bearing_sigma)
      .field("bbox_sigma_px", c.bbox_sigma_px)
      .field("true_confidence_mean", c.true_confidence_mean)
      .field("true_confidence_sigma", c.true_confidence_sigma)
      .field("false_confidence_min", c.false_confidence_min)
      .field("false_confidence_max", c.false_confidence_max)
      .field("trunk_height", c.trunk_height)
      .nested("camera",
              [&](Section& cam) { cam.field("mount", c.camera.mount).field("height", c.camera.height); })
      .nested("intrinsics",
              [&](Section& k) {
                k.field("fx", c.intrinsics.fx)
                    .field("fy", c.intrinsics.fy)
                    .field("cx", c.intrinsics.cx)
                    .field("cy", c.intrinsics.cy)
                    .field("width", c.intrinsics.width)
                    .field("height", c.intrinsics.height);
              })
      .field("emit_clouds", c.emit_clouds)
      .field("cloud_points", c.cloud_points)
      .field("cloud_depth_sigma", c.cloud_depth_sigma)
      .field("seed", c.seed);
}

void apply_pipeline(Section& s, PipelineConfig& p) {
  s.field("planting_distance", p.planting_distance)
      .nested("noise",
              [&](Section& n) {
                n.field("odom_sigma", p.noise.odom_sigma)
                    .field("gps_sigma", p.noise.gps_sigma)
                    .field("range_sigma", p.noise.range_sigma)
                    .field("bearing_sigma", p.noise.bearing_sigma)
                    .field("inter_distance_sigma", p.noise.inter_distance_sigma);
              })
      .field("gps_full_pose", p.gps_full_pose)
      .field("initial_pose", p.initial_pose)
      .field("initial_position_sigma", p.initial_position_sigma)
      .field("initial_heading_sigma", p.initial_heading_sigma)
      .nested("camera",
              [&](Section& cam) { cam.field("mount", p.camera.mount).field("height", p.camera.height); })
      .field("use_pca", p.use_pca)
      .nested("filter",
              [&](Section& f) {
                f.field("eps_fraction", p.filter.eps_fraction)
                    .field("min_confidence", p.filter.min_confidence)
                    .field("keep_singletons", p.filter.keep_singletons);
              })
      .field("enable_cascade", p.enable_cascade)
      .field("association_world_gate", p.association_world_gate)
      .field("inter_distance", p.inter_distance)
      .field("inter_distance_on_spawn", p.inter_distance_on_spawn)
      .field("max_pairs_per_frame", p.max_pairs_per_frame)
      .field("incremental", p.incremental)
      .nested("solver",
              [&](Section& o) {
                o.field("max_iterations", p.solver.max_iterations)
                    .field("relative_tolerance", p.solver.relative_tolerance)
                    .field("absolute_tolerance", p.solver.absolute_tolerance)
                    .field("initial_lambda", p.solver.initial_lambda)
                    .field("max_lambda", p.solver.max_lambda)
                    .field("huber_threshold", p.solver.huber_threshold);
              })
      .field("min_track_hits", p.min_track_hits);
}

json vec3_json(const Eigen::Vector3d& v) { return json::array({v(0), v(1), v(2)}); }

}  // namespace

void write_tree_map_csv(std::ostream& out, const TreeMap& map) {
  out << "id,x,y\n";
  for (const auto& t : map.trees) out << t.id << ',' << fixed(t.position.x) << ',' << fixed(t.position.y) << '\n';
}

void write_tree_map_csv(const std::filesystem::path& path, const TreeMap& map) {
  auto out = open_out(path);
  write_tree_map_csv(out, map);
}

TreeMap read_tree_map_csv(std::istream& in) {
  TreeMap map;
  std::string line;
  int n = 0;
  std::set<int> ids;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(n);
    const auto cells = split_csv(line);
    if (n == 1 && !cells.empty() && cells[0] == "id") {
      if (cells != std::vector<std::string>{"id", "x", "y"}) throw SchemaError(where, "header must be id,x,y");
      continue;
    }
    if (cells.size() != 3) throw SchemaError(where, "expected 3 columns");
    const double id = parse_double(cells[0], where);
    if (id != std::floor(id)) throw SchemaError(where, "id must be an integer");
    TreeEntry e{static_cast<int>(id), {parse_double(cells[1], where), parse_double(cells[2], where)}};
    if (!ids.insert(e.id).second) throw SchemaError(where, "duplicate id " + cells[0]);
    map.trees.push_back(e);
  }
  return map;
}

TreeMap read_tree_map_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  return read_tree_map_csv(in);
}

void write_trajectory_csv(const std::filesystem::path& path, std::span<const Pose2> poses) {
  auto out = open_out(path);
  out << "frame,x,y,theta\n";
  for (std::size_t i = 0; i < poses.size(); ++i) {
    out << i << ',' << fixed(poses[i].x) << ',' << fixed(poses[i].y) << ',' << fixed(poses[i].theta) << '\n';
  }
}

std::string graph_snapshot_json(const FactorGraph& graph) {
  json j;
  const Values& v = graph.estimates();
  json poses = json::array();
  for (const auto& p : v.poses) poses.push_back(pose_json(p));
  json landmarks = json::array();
  for (const auto& [id, p] : v.landmarks) landmarks.push_back({{"id", id}, {"x", p.x}, {"y", p.y}});
  json factors = json::array();
  for (const auto& f : graph.factors()) {
    json keys = json::array();
    for (const auto& k : f.keys) keys.push_back(key_json(k));
    json m = json::array();
    for (int i = 0; i < f.measurement.size(); ++i) m.push_back(f.measurement(i));
    factors.push_back({{"kind", to_string(f.kind)},
                       {"keys", std::move(keys)},
                       {"measurement", std::move(m)},
                       {"covariance", matrix_json(f.covariance)}});
  }
  j["variables"] = {{"poses", std::move(poses)}, {"landmarks", std::move(landmarks)}};
  j["factors"] = std::move(factors);
  j["cost"] = graph.cost();
  return j.dump(1) + "\n";
}

std::string eval_report_json(const EvalReport& r) {
  json j = {{"tp", r.tp},
            {"fp", r.fp},
            {"fn", r.fn},
            {"precision", r.precision},
            {"recall", r.recall},
            {"f1", r.f1},
            {"mean_tp_error", r.mean_tp_error},
            {"pct_within_half_pd", r.pct_within_half_pd},
            {"gate", r.gate}};
  return j.dump(2) + "\n";
}

void write_sweep_csv(const std::filesystem::path& path, std::span<const EvalReport> reports) {
  auto out = open_out(path);
  out << "gate,tp,fp,fn,precision,recall,f1,mean_tp_error\n";
  for (const auto& r : reports) {
    out << fixed(r.gate, 4) << ',' << r.tp << ',' << r.fp << ',' << r.fn << ',' << fixed(r.precision) << ','
        << fixed(r.recall) << ',' << fixed(r.f1) << ',' << fixed(r.mean_tp_error) << '\n';
  }
}

std::string svg_overlay(const TreeMap& pred, const TreeMap& gt, const MatchResult& matches) {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;
  bool first = true;
  for (const TreeMap* m : {&pred, &gt}) {
    for (const auto& t : m->trees) {
      if (first) {
        x0 = x1 = t.position.x;
        y0 = y1 = t.position.y;
        first = false;
      }
      x0 = std::min(x0, t.position.x);
      x1 = std::max(x1, t.position.x);
      y0 = std::min(y0, t.position.y);
      y1 = std::max(y1, t.position.y);
    }
  }
  const double margin = 1.0;
  x0 -= margin;
  y0 -= margin;
  x1 += margin;
  y1 += margin;
  const double scale = 20.0;  // px per meter
  auto px = [&](double x) { return fixed((x - x0) * scale, 2); };
  auto py = [&](double y) { return fixed((y1 - y) * scale, 2); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed((x1 - x0) * scale, 0) << "\" height=\""
    << fixed((y1 - y0) * scale, 0) << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const auto& m : matches.matches) {
    const Point2 a = pred.trees[m.pred].position;
    const Point2 b = gt.trees[m.gt].position;
    s << "<line x1=\"" << px(a.x) << "\" y1=\"" << py(a.y) << "\" x2=\"" << px(b.x) << "\" y2=\"" << py(b.y)
      << "\" stroke=\"gray\" stroke-width=\"1\"/>\n";
  }
  for (const auto& t : gt.trees) {
    s << "<circle cx=\"" << px(t.position.x) << "\" cy=\"" << py(t.position.y)
      << "\" r=\"4\" fill=\"none\" stroke=\"green\" stroke-width=\"1.5\"/>\n";
  }
  for (const auto& t : pred.trees) {
    s << "<circle cx=\"" << px(t.position.x) << "\" cy=\"" << py(t.position.y) << "\" r=\"2\" fill=\"red\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("config", std::string("invalid JSON: ") + e.what());
  }
  RunConfig cfg;
  Section root(j, "");
  std::string preset = "pear-row";
  root.field("preset", preset);
  cfg.scenario = scenario_preset(preset);
  root.field("name", cfg.scenario.name);
  std::uint64_t seed = cfg.scenario.sensors.seed;
  root.field("seed", seed);
  root.nested("orchard", [&](Section& s) { apply_orchard(s, cfg.scenario.orchard); });
  root.nested("trajectory", [&](Section& s) { apply_trajectory(s, cfg.scenario.trajectory); });
  root.nested("sensors", [&](Section& s) { apply_sensors(s, cfg.scenario.sensors); });
  if (j.contains("seed")) cfg.scenario.sensors.seed = seed;
  cfg.pipeline = pipeline_config_for(cfg.scenario);
  root.nested("pipeline", [&](Section& s) { apply_pipeline(s, cfg.pipeline); });
  root.nested("baseline", [&](Section& s) { s.field("eps", cfg.baseline.eps).field("min_samples", cfg.baseline.min_samples); });
  root.done();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(read_text(path)); }

std::string scenario_json(const ScenarioConfig& c) {
  const auto& o = c.orchard;
  const auto& t = c.trajectory;
  const auto& s = c.sensors;
  json j;
  j["name"] = c.name;
  j["seed"] = s.seed;
  j["orchard"] = {{"n_trees", o.n_trees},
                  {"planting_distance", o.planting_distance},
                  {"row_heading", o.row_heading},
                  {"position_jitter_sigma", o.position_jitter_sigma},
                  {"trunk_radius", o.trunk_radius},
                  {"row_origin", json::array({o.row_origin.x, o.row_origin.y})}};
  j["trajectory"] = {{"path", t.path == PathKind::kUShape ? "u_shape" : "full_loop"},
                     {"lateral_offset", t.lateral_offset},
                     {"speed", t.speed},
                     {"turn_radius", t.turn_radius},
                     {"end_margin", t.end_margin},
                     {"overshoot", t.overshoot}};
  j["sensors"] = {{"odom_sigma", vec3_json(s.odom_sigma)},
                  {"gps_sigma", s.gps_sigma},
                  {"gps_dropout_prob", s.gps_dropout_prob},
                  {"gps_bias_walk_sigma", s.gps_bias_walk_sigma},
                  {"gps_bias_correlation_frames", s.gps_bias_correlation_frames},
                  {"detection_range", s.detection_range},
                  {"detection_fov", s.detection_fov},
                  {"miss_prob", s.miss_prob},
                  {"miss_burst_frames", s.miss_burst_frames},
                  {"false_positive_rate", s.false_positive_rate},
                  {"range_sigma", s.range_sigma},
                  {"bearing_sigma", s.bearing_sigma},
                  {"bbox_sigma_px", s.bbox_sigma_px},
                  {"true_confidence_mean", s.true_confidence_mean},
                  {"true_confidence_sigma", s.true_confidence_sigma},
                  {"false_confidence_min", s.false_confidence_min},
                  {"false_confidence_max", s.false_confidence_max},
                  {"trunk_height", s.trunk_height},
                  {"camera", {{"mount", pose_json(s.camera.mount)}, {"height", s.camera.height}}},
                  {"intrinsics",
                   {{"fx", s.intrinsics.fx},
                    {"fy", s.intrinsics.fy},
                    {"cx", s.intrinsics.cx},
                    {"cy", s.intrinsics.cy},
                    {"width", s.intrinsics.width},
                    {"height", s.intrinsics.height}}},
                  {"emit_clouds", s.emit_clouds},
                  {"cloud_points", s.cloud_points},
                  {"cloud_depth_sigma", s.cloud_depth_sigma}};
  return j.dump(2) + "\n";
}

std::string pipeline_config_json(const PipelineConfig& p) {
  json j;
  j["planting_distance"] = p.planting_distance;
  j["noise"] = {{"odom_sigma", vec3_json(p.noise.odom_sigma)},
                {"gps_sigma", p.noise.gps_sigma},
                {"range_sigma", p.noise.range_sigma},
                {"bearing_sigma", p.noise.bearing_sigma},
                {"inter_distance_sigma", p.noise.inter_distance_sigma}};
  j["gps_full_pose"] = p.gps_full_pose;
  j["initial_pose"] = pose_json(p.initial_pose);
  j["initial_position_sigma"] = p.initial_position_sigma;
  j["initial_heading_sigma"] = p.initial_heading_sigma;
  j["camera"] = {{"mount", pose_json(p.camera.mount)}, {"height", p.camera.height}};
  j["use_pca"] = p.use_pca;
  j["filter"] = {{"eps_fraction", p.filter.eps_fraction},
                 {"min_confidence", p.filter.min_confidence},
                 {"keep_singletons", p.filter.keep_singletons}};
  j["enable_cascade"] = p.enable_cascade;
  j["association_world_gate"] = p.association_world_gate;
  j["inter_distance"] = p.inter_distance;
  j["inter_distance_on_spawn"] = p.inter_distance_on_spawn;
  j["max_pairs_per_frame"] = p.max_pairs_per_frame;
  j["incremental"] = p.incremental;
  j["solver"] = {{"max_iterations", p.solver.max_iterations},
                 {"relative_tolerance", p.solver.relative_tolerance},
                 {"absolute_tolerance", p.solver.absolute_tolerance},
                 {"initial_lambda", p.solver.initial_lambda},
                 {"max_lambda", p.solver.max_lambda},
                 {"huber_threshold", p.solver.huber_threshold ? json(*p.solver.huber_threshold) : json(nullptr)}};
  j["min_track_hits"] = p.min_track_hits;
  return j.dump(2) + "\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace treeslam
