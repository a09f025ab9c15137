#include "treeslam/frame_log.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "treeslam/error.hpp"

namespace treeslam {

using nlohmann::json;

namespace {

json vec3(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

class Reader {
 public:
  explicit Reader(std::string where) : where_(std::move(where)) {}

  [[noreturn]] void fail(const std::string& what) const { throw SchemaError(where_, what); }

  const json& field(const json& obj, const char* key) const {
    if (!obj.is_object()) fail("expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(std::string("missing field '") + key + "'");
    return *it;
  }

  double value(const json& v, const std::string& name) const {
    if (!v.is_number()) fail("'" + name + "' must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail("'" + name + "' must be finite");
    return x;
  }

  double number(const json& obj, const char* key) const { return value(field(obj, key), key); }

  Eigen::Vector3d vec3(const json& v, const std::string& name) const {
    if (!v.is_array() || v.size() != 3) fail("'" + name + "' must be a 3-element array");
    return {value(v[0], name), value(v[1], name), value(v[2], name)};
  }

 private:
  std::string where_;
};

FrameRecord parse_record(const json& j, int line) {
  Reader line_reader("line " + std::to_string(line));
  const json& fr = line_reader.field(j, "frame");
  if (!fr.is_number_integer()) line_reader.fail("'frame' must be an integer");
  FrameRecord rec;
  rec.frame = fr.get<int>();
  Reader r("frame " + std::to_string(rec.frame));

  const json& odom = r.field(j, "odom");
  rec.odom = {r.number(odom, "dx"), r.number(odom, "dy"), r.number(odom, "dtheta")};

  const json& gps = r.field(j, "gps");
  if (!gps.is_null()) {
    GpsFix fix{r.number(gps, "x"), r.number(gps, "y"), r.number(gps, "sigma")};
    if (!(fix.sigma > 0.0)) r.fail("'gps.sigma' must be positive");
    rec.gps = fix;
  }

  const json& dets = r.field(j, "detections");
  if (!dets.is_array()) r.fail("'detections' must be an array");
  for (const json& d : dets) {
    DetectionRecord det;
    const json& bb = r.field(d, "bbox");
    if (!bb.is_array() || bb.size() != 4) r.fail("'bbox' must be [x0, y0, x1, y1]");
    det.bbox = {r.value(bb[0], "bbox"), r.value(bb[1], "bbox"), r.value(bb[2], "bbox"),
                r.value(bb[3], "bbox")};
    if (!det.bbox.valid()) r.fail("'bbox' must satisfy x0 < x1 and y0 < y1");
    det.confidence = r.number(d, "conf");
    if (det.confidence < 0.0 || det.confidence > 1.0) r.fail("'conf' must lie in [0, 1]");
    det.measurement = {r.number(d, "range"), r.number(d, "bearing")};
    if (!(det.measurement.range > 0.0)) r.fail("'range' must be positive");
    if (auto it = d.find("cloud"); it != d.end() && !it->is_null()) {
      TrunkPointCloud cloud;
      cloud.camera_origin = r.vec3(r.field(*it, "camera_origin"), "camera_origin");
      const json& pts = r.field(*it, "points");
      if (!pts.is_array()) r.fail("'points' must be an array");
      cloud.points.reserve(pts.size());
      for (const json& p : pts) cloud.points.push_back(r.vec3(p, "points"));
      det.cloud = std::move(cloud);
    }
    rec.detections.push_back(std::move(det));
  }
  return rec;
}

}  // namespace

std::string frame_to_json_line(const FrameRecord& f) {
  json j;
  j["frame"] = f.frame;
  j["odom"] = {{"dx", f.odom.dx}, {"dy", f.odom.dy}, {"dtheta", f.odom.dtheta}};
  j["gps"] = f.gps ? json{{"x", f.gps->x}, {"y", f.gps->y}, {"sigma", f.gps->sigma}} : json(nullptr);
  json dets = json::array();
  for (const auto& d : f.detections) {
    json jd;
    jd["bbox"] = json::array({d.bbox.x_min, d.bbox.y_min, d.bbox.x_max, d.bbox.y_max});
    jd["conf"] = d.confidence;
    jd["range"] = d.measurement.range;
    jd["bearing"] = d.measurement.bearing;
    if (d.cloud) {
      json pts = json::array();
      for (const auto& p : d.cloud->points) pts.push_back(vec3(p));
      jd["cloud"] = {{"camera_origin", vec3(d.cloud->camera_origin)}, {"points", std::move(pts)}};
    }
    dets.push_back(std::move(jd));
  }
  j["detections"] = std::move(dets);
  return j.dump();
}

void write_frame_log(std::ostream& out, std::span<const FrameRecord> frames) {
  for (const auto& f : frames) out << frame_to_json_line(f) << '\n';
}

void write_frame_log(const std::filesystem::path& path, std::span<const FrameRecord> frames) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_frame_log(out, frames);
}

std::vector<FrameRecord> read_frame_log(std::istream& in) {
  std::vector<FrameRecord> frames;
  std::string text;
  int line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw SchemaError("line " + std::to_string(line), std::string("invalid JSON: ") + e.what());
    }
    FrameRecord rec = parse_record(j, line);
    if (!frames.empty() && rec.frame <= frames.back().frame) {
      throw SchemaError("frame " + std::to_string(rec.frame), "frame numbers must be strictly increasing");
    }
    frames.push_back(std::move(rec));
  }
  return frames;
}

std::vector<FrameRecord> read_frame_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  return read_frame_log(in);
}

}  // namespace treeslam
