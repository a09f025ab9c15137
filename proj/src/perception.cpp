#include "treeslam/perception.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <unordered_map>

#include "treeslam/error.hpp"

namespace treeslam {

namespace {

Eigen::Vector3d mean_of(const std::vector<Eigen::Vector3d>& pts) {
  Eigen::Vector3d m = Eigen::Vector3d::Zero();
  for (const auto& p : pts) m += p;
  return m / static_cast<double>(pts.size());
}

void check_cloud(const TrunkPointCloud& cloud) {
  if (cloud.points.size() < 3) throw DegenerateCloudError("trunk cloud needs at least 3 points");
  for (const auto& p : cloud.points) {
    if (!p.allFinite()) throw DegenerateCloudError("trunk cloud has non-finite coordinates");
  }
  if (!cloud.camera_origin.allFinite()) throw DegenerateCloudError("camera origin is non-finite");
}

double extent_along(const std::vector<Eigen::Vector3d>& pts, const Eigen::Vector3d& dir) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& p : pts) {
    const double s = p.dot(dir);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  return hi - lo;
}

}  // namespace

TrunkEstimate estimate_trunk_center(const TrunkPointCloud& cloud) {
  check_cloud(cloud);
  const Eigen::Vector3d centroid = mean_of(cloud.points);

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : cloud.points) {
    const Eigen::Vector3d d = p - centroid;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(cloud.points.size());

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  if (eig.info() != Eigen::Success) throw DegenerateCloudError("covariance eigen-decomposition failed");
  const Eigen::Vector3d& lambda = eig.eigenvalues();  // ascending
  if (!(lambda(2) > 0.0) || lambda(1) <= 1e-12 * lambda(2)) {
    throw DegenerateCloudError("trunk cloud is collinear");
  }

  TrunkEstimate est;
  est.axis = eig.eigenvectors().col(2).normalized();
  est.width = std::max(extent_along(cloud.points, eig.eigenvectors().col(1)),
                       extent_along(cloud.points, eig.eigenvectors().col(0)));

  // Visible surface sits between the camera and the trunk axis: push the
  // centroid outwards by the estimated radius.
  Eigen::Vector3d view = centroid - cloud.camera_origin;
  view -= est.axis * est.axis.dot(view);
  const double n = view.norm();
  est.center3d = centroid;
  if (n >= 1e-9) est.center3d += (0.5 * est.width / n) * view;
  return est;
}

Eigen::Vector3d trunk_centroid(const TrunkPointCloud& cloud) {
  check_cloud(cloud);
  return mean_of(cloud.points);
}

Point2 project_to_ground(const Eigen::Vector3d& center3d, const Pose2& robot_pose,
                         const SensorExtrinsics& extrinsics) {
  const Point2 in_robot = transform_point(extrinsics.mount, {center3d.x(), center3d.y()});
  return transform_point(robot_pose, in_robot);
}

RangeBearing camera_point_to_measurement(const Eigen::Vector3d& center3d,
                                         const SensorExtrinsics& extrinsics) {
  const Point2 in_robot = transform_point(extrinsics.mount, {center3d.x(), center3d.y()});
  return range_bearing(Pose2{}, in_robot);
}

std::vector<int> dbscan(std::span<const Point2> points, double eps, int min_pts) {
  const std::size_t n = points.size();
  std::vector<int> labels(n, kNoise);
  if (n == 0) return labels;

  // Uniform grid with cell size eps: every eps-neighbor lies in the 3x3 block.
  auto cell_of = [eps](double v) { return static_cast<std::int64_t>(std::floor(v / eps)); };
  auto key = [](std::int64_t cx, std::int64_t cy) {
    return (static_cast<std::uint64_t>(cx) * 0x9E3779B97F4A7C15ULL) ^ static_cast<std::uint64_t>(cy);
  };
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> grid;
  grid.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    grid[key(cell_of(points[i].x), cell_of(points[i].y))].push_back(i);
  }
  const double eps2 = eps * eps;
  auto region = [&](std::size_t i) {
    std::vector<std::size_t> out;
    const auto cx = cell_of(points[i].x);
    const auto cy = cell_of(points[i].y);
    std::uint64_t probed[9];
    int n_probed = 0;
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        const std::uint64_t k = key(cx + dx, cy + dy);
        if (std::find(probed, probed + n_probed, k) != probed + n_probed) continue;
        probed[n_probed++] = k;
        auto it = grid.find(k);
        if (it == grid.end()) continue;
        for (std::size_t j : it->second) {
          const double ex = points[j].x - points[i].x;
          const double ey = points[j].y - points[i].y;
          if (ex * ex + ey * ey <= eps2) out.push_back(j);
        }
      }
    }
    return out;
  };

  std::vector<bool> visited(n, false);
  int cluster = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (visited[i]) continue;
    visited[i] = true;
    auto seeds = region(i);
    if (static_cast<int>(seeds.size()) < min_pts) continue;  // noise unless reached later
    labels[i] = cluster;
    std::deque<std::size_t> queue(seeds.begin(), seeds.end());
    while (!queue.empty()) {
      const std::size_t j = queue.front();
      queue.pop_front();
      if (labels[j] == kNoise) labels[j] = cluster;
      if (visited[j]) continue;
      visited[j] = true;
      auto more = region(j);
      if (static_cast<int>(more.size()) >= min_pts) queue.insert(queue.end(), more.begin(), more.end());
    }
    ++cluster;
  }
  return labels;
}

std::vector<Detection> filter_detections(std::span<const Detection> detections,
                                         double planting_distance,
                                         const DetectionFilterOptions& options) {
  if (!(planting_distance > 0.0)) throw Error("filter_detections: planting distance must be positive");
  std::vector<Detection> kept;
  for (const auto& d : detections) {
    if (d.confidence >= options.min_confidence) kept.push_back(d);
  }
  if (kept.empty()) return kept;

  std::vector<Point2> pos;
  pos.reserve(kept.size());
  for (const auto& d : kept) pos.push_back(d.world_pos);
  const auto labels = dbscan(pos, options.eps_fraction * planting_distance, 1);

  const int clusters = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<int> best(clusters, -1);
  std::vector<int> size(clusters, 0);
  auto better = [&](int a, int b) {
    if (kept[a].confidence != kept[b].confidence) return kept[a].confidence > kept[b].confidence;
    if (pos[a].x != pos[b].x) return pos[a].x < pos[b].x;
    return pos[a].y < pos[b].y;
  };
  for (int i = 0; i < static_cast<int>(kept.size()); ++i) {
    const int c = labels[i];
    ++size[c];
    if (best[c] < 0 || better(i, best[c])) best[c] = i;
  }

  std::vector<Detection> out;
  for (int i = 0; i < static_cast<int>(kept.size()); ++i) {
    const int c = labels[i];
    if (best[c] != i) continue;
    if (!options.keep_singletons && size[c] == 1) continue;
    out.push_back(kept[i]);
  }
  return out;
}

}  // namespace treeslam
