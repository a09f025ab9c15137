#pragma once

#include <cmath>
#include <numbers>

namespace treeslam {

/// Planar robot pose. x east, y north (meters), theta heading in (-pi, pi].
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

/// Relative motion expressed in the source pose frame (dx forward, dy left).
struct Pose2Delta {
  double dx = 0.0;
  double dy = 0.0;
  double dtheta = 0.0;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Point2&, const Point2&) = default;
};

struct RangeBearing {
  double range = 0.0;
  double bearing = 0.0;
};

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Wraps an angle into (-pi, pi]. Throws DegenerateGeometryError on NaN/inf.
double normalize_angle(double a);

/// Applies `d` in the frame of `a`.
Pose2 pose_compose(const Pose2& a, const Pose2Delta& d);

/// `b` expressed relative to `a`; exact inverse of pose_compose.
Pose2Delta pose_between(const Pose2& a, const Pose2& b);

/// Range and heading-relative bearing from `p` to `l`.
/// Throws DegenerateGeometryError when `l` coincides with the pose position.
RangeBearing range_bearing(const Pose2& p, const Point2& l);

/// Point at range/bearing from `p`; inverse of range_bearing.
Point2 project_range_bearing(const Pose2& p, const RangeBearing& z);

/// Maps a point given in the pose's local frame into the world frame.
Point2 transform_point(const Pose2& p, const Point2& local);

inline double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace treeslam
