#include "treeslam/geometry.hpp"

#include "treeslam/error.hpp"

namespace treeslam {

double normalize_angle(double a) {
  if (!std::isfinite(a)) throw DegenerateGeometryError("normalize_angle: non-finite angle");
  double r = std::remainder(a, kTwoPi);  // [-pi, pi]
  if (r <= -kPi) r += kTwoPi;
  return r;
}

Pose2 pose_compose(const Pose2& a, const Pose2Delta& d) {
  const double c = std::cos(a.theta);
  const double s = std::sin(a.theta);
  return {a.x + c * d.dx - s * d.dy, a.y + s * d.dx + c * d.dy,
          normalize_angle(a.theta + d.dtheta)};
}

Pose2Delta pose_between(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.theta);
  const double s = std::sin(a.theta);
  const double ex = b.x - a.x;
  const double ey = b.y - a.y;
  return {c * ex + s * ey, -s * ex + c * ey, normalize_angle(b.theta - a.theta)};
}

RangeBearing range_bearing(const Pose2& p, const Point2& l) {
  const double ex = l.x - p.x;
  const double ey = l.y - p.y;
  const double r = std::hypot(ex, ey);
  if (!(r > 1e-9)) throw DegenerateGeometryError("range_bearing: landmark coincides with pose");
  return {r, normalize_angle(std::atan2(ey, ex) - p.theta)};
}

Point2 project_range_bearing(const Pose2& p, const RangeBearing& z) {
  const double a = p.theta + z.bearing;
  return {p.x + z.range * std::cos(a), p.y + z.range * std::sin(a)};
}

Point2 transform_point(const Pose2& p, const Point2& local) {
  const double c = std::cos(p.theta);
  const double s = std::sin(p.theta);
  return {p.x + c * local.x - s * local.y, p.y + s * local.x + c * local.y};
}

}  // namespace treeslam
