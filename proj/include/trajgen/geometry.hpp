#pragma once

#include <array>
#include <cstdint>
#include <numbers>
#include <span>
#include <variant>
#include <vector>

namespace trajgen {

inline constexpr double kPi = std::numbers::pi;

/// Default densification steps. Finer than the tightest success tolerance (5 cm).
inline constexpr double kDefaultPosStep = 0.01;
inline constexpr double kDefaultYawStep = 0.05;

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

/// Signed shortest rotation taking `from` to `to`, in (-pi, pi].
/// An exact half-turn resolves to +pi.
double shortest_arc(double from, double to);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

double dot(Vec2 a, Vec2 b);
double cross(Vec2 a, Vec2 b);
double norm(Vec2 a);
/// Rotates `v` counter-clockwise by `angle` radians.
Vec2 rotate(Vec2 v, double angle);

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec2 xy() const { return {x, y}; }
  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

double norm(Vec3 a);

/// 4-DoF end-effector target in the robot-base frame: +x right, +y away from
/// the robot, +z up, table surface at z = 0. Yaw rotates about +z.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double yaw = 0.0;

  Vec3 position() const { return {x, y, z}; }
  bool is_finite() const;
  friend bool operator==(const Pose&, const Pose&) = default;
};

/// Euclidean distance between the positions of two poses.
double position_gap(const Pose& a, const Pose& b);

enum class GripperCommand { Open, Close };

using TrajectoryElement = std::variant<Pose, GripperCommand>;

/// Ordered poses and gripper commands, executed open-loop in order.
struct Trajectory {
  std::vector<TrajectoryElement> elements;

  bool empty() const { return elements.empty(); }
  std::vector<Pose> poses() const;
  std::size_t pose_count() const;
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Rigid transform: p' = R p + t, R row-major.
struct RigidTransform {
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
  Vec3 translation{};

  Vec3 apply(Vec3 p) const;
  Vec3 apply_inverse(Vec3 p) const;
  bool is_orthonormal(double tol = 1e-9) const;

  /// Rotation about +z followed by a translation.
  static RigidTransform from_yaw(double yaw, Vec3 translation);
  /// Camera looking straight down (-z world) from `height`, image +u along world +x.
  static RigidTransform top_down(Vec3 camera_position);
};

struct Pixel {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

/// Pinhole camera with a camera-to-world extrinsic.
struct CameraModel {
  double fx = 600.0;
  double fy = 600.0;
  double cx = 320.0;
  double cy = 240.0;
  RigidTransform extrinsic{};
  int width = 640;
  int height = 480;

  /// Throws ConfigError when an invariant is broken.
  void validate() const;
  /// World point to pixel coordinates plus depth along the optical axis.
  Pixel project(Vec3 world) const;
  /// Pinhole back-projection of (u, v) at `depth`, then camera-to-world.
  Vec3 deproject(double u, double v, double depth) const;
};

/// Row-major binary mask; nonzero = set.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  bool at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u] != 0; }
};

/// Row-major per-pixel depth in meters.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  double at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
};

/// Oriented box: yaw rotates the box frame, width runs along the box x-axis,
/// length along the box y-axis. Canonical form keeps width <= length and
/// yaw in (-pi/2, pi/2]; square footprints use yaw in (-pi/4, pi/4].
struct BBox3D {
  Vec3 position{};
  double orientation = 0.0;
  Vec3 dimensions{};  // (w, l, h)

  friend bool operator==(const BBox3D&, const BBox3D&) = default;
};

/// Builds the canonical box for a footprint of `extent_x` along `yaw` and
/// `extent_y` perpendicular to it.
BBox3D canonical_box(Vec3 center, double yaw, double extent_x, double extent_y, double height);

/// Corners of the box footprint, counter-clockwise.
std::array<Vec2, 4> footprint(const BBox3D& box);

std::vector<Vec3> deproject_mask(const Mask& mask, const DepthImage& depth, const CameraModel& cam);

/// Convex hull (counter-clockwise, collinear points dropped).
std::vector<Vec2> convex_hull(std::vector<Vec2> points);

/// Minimum-area yaw-oriented box enclosing `points`, via rotating calipers on
/// the XY hull; height spans the z extent. Throws EmptyInput on no points.
BBox3D fit_bbox3(std::span<const Vec3> points);

/// Poses from a to b inclusive with position steps <= pos_step and yaw steps
/// <= yaw_step along the shortest arc.
std::vector<Pose> interpolate_linear(const Pose& a, const Pose& b, double pos_step = kDefaultPosStep,
                                     double yaw_step = kDefaultYawStep);

/// Replaces each consecutive pose pair by its interpolation; gripper commands
/// keep their place.
Trajectory densify(const Trajectory& waypoints, double pos_step = kDefaultPosStep,
                   double yaw_step = kDefaultYawStep);

// Convex polygon helpers used for footprints and contact.

using Polygon = std::vector<Vec2>;

/// True when the convex polygons interpenetrate by more than `tol`.
bool polygons_overlap(const Polygon& a, const Polygon& b, double tol = 0.0);

/// Penetration depth along the best separating axis (<= 0 when separated).
double penetration_depth(const Polygon& a, const Polygon& b);

/// Smallest s >= 0 such that `b` translated by s * dir no longer overlaps `a`.
/// `dir` must be a unit vector.
double separation_along(const Polygon& a, const Polygon& b, Vec2 dir);

/// Euclidean distance between two convex polygons (0 when they touch or overlap).
double polygon_distance(const Polygon& a, const Polygon& b);

bool polygon_contains(const Polygon& poly, Vec2 p);

Polygon rectangle(Vec2 center, double yaw, double extent_x, double extent_y);
Polygon regular_polygon(Vec2 center, double radius, int sides, double yaw = 0.0);

}  // namespace trajgen
