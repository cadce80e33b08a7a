#include "trajgen/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "trajgen/errors.hpp"

namespace trajgen {

double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

double shortest_arc(double from, double to) {
  double d = wrap_angle(to - from);
  if (d == -kPi) d = kPi;
  return d;
}

double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
double norm(Vec2 a) { return std::hypot(a.x, a.y); }
double norm(Vec3 a) { return std::sqrt(a.x * a.x + a.y * a.y + a.z * a.z); }

Vec2 rotate(Vec2 v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

bool Pose::is_finite() const {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(z) && std::isfinite(yaw);
}

double position_gap(const Pose& a, const Pose& b) { return norm(a.position() - b.position()); }

std::vector<Pose> Trajectory::poses() const {
  std::vector<Pose> out;
  for (const auto& e : elements) {
    if (const auto* p = std::get_if<Pose>(&e)) out.push_back(*p);
  }
  return out;
}

std::size_t Trajectory::pose_count() const {
  return static_cast<std::size_t>(std::count_if(elements.begin(), elements.end(), [](const auto& e) {
    return std::holds_alternative<Pose>(e);
  }));
}

// ---------------------------------------------------------------------------
// Frames and camera

Vec3 RigidTransform::apply(Vec3 p) const {
  const auto& r = rotation;
  return {r[0] * p.x + r[1] * p.y + r[2] * p.z + translation.x,
          r[3] * p.x + r[4] * p.y + r[5] * p.z + translation.y,
          r[6] * p.x + r[7] * p.y + r[8] * p.z + translation.z};
}

Vec3 RigidTransform::apply_inverse(Vec3 p) const {
  const auto& r = rotation;
  const Vec3 q = p - translation;
  return {r[0] * q.x + r[3] * q.y + r[6] * q.z,
          r[1] * q.x + r[4] * q.y + r[7] * q.z,
          r[2] * q.x + r[5] * q.y + r[8] * q.z};
}

bool RigidTransform::is_orthonormal(double tol) const {
  const auto& r = rotation;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += r[k * 3 + i] * r[k * 3 + j];
      if (std::abs(s - (i == j ? 1.0 : 0.0)) > tol) return false;
    }
  }
  return true;
}

RigidTransform RigidTransform::from_yaw(double yaw, Vec3 translation) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {{c, -s, 0, s, c, 0, 0, 0, 1}, translation};
}

RigidTransform RigidTransform::top_down(Vec3 camera_position) {
  return {{1, 0, 0, 0, -1, 0, 0, 0, -1}, camera_position};
}

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("camera focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ConfigError("camera image size must be positive");
  if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height) {
    throw ConfigError("camera principal point lies outside the image");
  }
  if (!extrinsic.is_orthonormal()) throw ConfigError("camera extrinsic rotation is not orthonormal");
}

Pixel CameraModel::project(Vec3 world) const {
  const Vec3 c = extrinsic.apply_inverse(world);
  return {fx * c.x / c.z + cx, fy * c.y / c.z + cy, c.z};
}

Vec3 CameraModel::deproject(double u, double v, double depth) const {
  const Vec3 c{(u - cx) / fx * depth, (v - cy) / fy * depth, depth};
  return extrinsic.apply(c);
}

std::vector<Vec3> deproject_mask(const Mask& mask, const DepthImage& depth, const CameraModel& cam) {
  if (mask.width != cam.width || mask.height != cam.height || depth.width != cam.width ||
      depth.height != cam.height) {
    throw std::invalid_argument("mask and depth dimensions must match the camera image");
  }
  std::vector<Vec3> points;
  for (int v = 0; v < mask.height; ++v) {
    for (int u = 0; u < mask.width; ++u) {
      if (!mask.at(u, v)) continue;
      const double d = depth.at(u, v);
      if (!(d > 0.0) || !std::isfinite(d)) {
        throw InvalidDepth("non-positive depth at pixel (" + std::to_string(u) + ", " +
                           std::to_string(v) + ")");
      }
      points.push_back(cam.deproject(u, v, d));
    }
  }
  if (points.empty()) throw EmptyMask("mask has no set pixels");
  return points;
}

// ---------------------------------------------------------------------------
// Boxes

namespace {

constexpr double kYawEps = 1e-9;

// Reduces `yaw` into (-period/2, period/2].
double reduce_yaw(double yaw, double period) {
  double r = yaw - period * std::floor(yaw / period + 0.5);
  if (r <= -period / 2.0 + kYawEps) r += period;
  return r;
}

}  // namespace

BBox3D canonical_box(Vec3 center, double yaw, double extent_x, double extent_y, double height) {
  double w = extent_x;
  double l = extent_y;
  double a = yaw;
  if (w > l) {
    std::swap(w, l);
    a += kPi / 2.0;
  }
  const bool square = (l - w) <= 1e-12 * std::max(1.0, l);
  a = square ? reduce_yaw(a, kPi / 2.0) : reduce_yaw(a, kPi);
  if (std::abs(a) < 1e-15) a = 0.0;
  return {center, a, {w, l, height}};
}

std::array<Vec2, 4> footprint(const BBox3D& box) {
  const Vec2 c = box.position.xy();
  const Vec2 ex = rotate({box.dimensions.x / 2.0, 0.0}, box.orientation);
  const Vec2 ey = rotate({0.0, box.dimensions.y / 2.0}, box.orientation);
  return {c - ex - ey, c + ex - ey, c + ex + ey, c - ex + ey};
}

std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() <= 2) return pts;

  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const Vec2& p : pts) {
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    const Vec2& p = pts[i];
    while (k >= lower && cross(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0.0) --k;
    hull[k++] = p;
  }
  hull.resize(k - 1);
  return hull;
}

BBox3D fit_bbox3(std::span<const Vec3> points) {
  if (points.empty()) throw EmptyInput("cannot fit a box to an empty point set");

  double zmin = points.front().z;
  double zmax = points.front().z;
  std::vector<Vec2> xy;
  xy.reserve(points.size());
  for (const Vec3& p : points) {
    zmin = std::min(zmin, p.z);
    zmax = std::max(zmax, p.z);
    xy.push_back(p.xy());
  }
  const double zc = (zmax + zmin) / 2.0;
  const double h = zmax - zmin;

  const std::vector<Vec2> hull = convex_hull(std::move(xy));
  if (hull.size() == 1) return canonical_box({hull[0].x, hull[0].y, zc}, 0.0, 0.0, 0.0, h);
  if (hull.size() == 2) {
    const Vec2 d = hull[1] - hull[0];
    const Vec2 mid = 0.5 * (hull[0] + hull[1]);
    return canonical_box({mid.x, mid.y, zc}, std::atan2(d.y, d.x), norm(d), 0.0, h);
  }

  // Rotating calipers: for every hull edge keep the extreme vertices along
  // the edge direction (max, min) and along its inward normal.
  const std::size_t n = hull.size();
  auto next = [n](std::size_t i) { return (i + 1) % n; };

  double best_area = std::numeric_limits<double>::infinity();
  BBox3D best{};
  std::size_t j = 1, k = 1, m = 1;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 edge = hull[next(i)] - hull[i];
    const Vec2 e = (1.0 / norm(edge)) * edge;
    const Vec2 nrm{-e.y, e.x};

    if (i == 0) j = next(i);
    for (std::size_t guard = 0; guard < n && dot(hull[next(j)], e) > dot(hull[j], e); ++guard) j = next(j);
    if (i == 0) k = j;
    for (std::size_t guard = 0; guard < n && dot(hull[next(k)], nrm) > dot(hull[k], nrm); ++guard) k = next(k);
    if (i == 0) m = k;
    for (std::size_t guard = 0; guard < n && dot(hull[next(m)], e) < dot(hull[m], e); ++guard) m = next(m);

    const double lo = dot(hull[m], e);
    const double hi = dot(hull[j], e);
    const double base = dot(hull[i], nrm);
    const double top = dot(hull[k], nrm);
    const double area = (hi - lo) * (top - base);
    if (area < best_area) {
      best_area = area;
      const Vec2 c = ((lo + hi) / 2.0) * e + ((base + top) / 2.0) * nrm;
      best = canonical_box({c.x, c.y, zc}, std::atan2(e.y, e.x), hi - lo, top - base, h);
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Interpolation

std::vector<Pose> interpolate_linear(const Pose& a, const Pose& b, double pos_step, double yaw_step) {
  if (!(pos_step > 0.0) || !(yaw_step > 0.0)) throw std::invalid_argument("interpolation steps must be positive");
  const double dist = position_gap(a, b);
  const double dyaw = shortest_arc(a.yaw, b.yaw);
  // The small slack keeps exact multiples (0.1 / 0.01) from gaining a segment.
  const auto segments_for = [](double span, double step) {
    return static_cast<std::size_t>(std::max(0.0, std::ceil(span / step - 1e-9)));
  };
  const std::size_t segments = std::max(segments_for(dist, pos_step), segments_for(std::abs(dyaw), yaw_step));
  if (segments == 0) return {a};

  std::vector<Pose> out;
  out.reserve(segments + 1);
  out.push_back(a);
  for (std::size_t i = 1; i < segments; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(segments);
    out.push_back({a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t, a.z + (b.z - a.z) * t,
                   wrap_angle(a.yaw + dyaw * t)});
  }
  out.push_back(b);
  return out;
}

Trajectory densify(const Trajectory& waypoints, double pos_step, double yaw_step) {
  Trajectory out;
  const Pose* previous = nullptr;
  for (const auto& element : waypoints.elements) {
    if (const auto* pose = std::get_if<Pose>(&element)) {
      if (previous == nullptr) {
        out.elements.emplace_back(*pose);
      } else {
        const auto segment = interpolate_linear(*previous, *pose, pos_step, yaw_step);
        out.elements.insert(out.elements.end(), segment.begin() + 1, segment.end());
      }
      previous = pose;
    } else {
      out.elements.push_back(element);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convex polygons

namespace {

template <typename F>
void for_each_axis(const Polygon& a, const Polygon& b, F&& f) {
  for (const Polygon* poly : {&a, &b}) {
    const std::size_t n = poly->size();
    if (n < 2) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 edge = (*poly)[(i + 1) % n] - (*poly)[i];
      const double len = norm(edge);
      if (len <= 0.0) continue;
      f(Vec2{-edge.y / len, edge.x / len});
    }
  }
}

std::pair<double, double> project(const Polygon& poly, Vec2 axis) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (Vec2 p : poly) {
    const double d = dot(p, axis);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  return {lo, hi};
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return norm(p - (a + t * ab));
}

}  // namespace

double penetration_depth(const Polygon& a, const Polygon& b) {
  double depth = std::numeric_limits<double>::infinity();
  for_each_axis(a, b, [&](Vec2 axis) {
    const auto [alo, ahi] = project(a, axis);
    const auto [blo, bhi] = project(b, axis);
    depth = std::min(depth, std::min(ahi, bhi) - std::max(alo, blo));
  });
  return depth;
}

bool polygons_overlap(const Polygon& a, const Polygon& b, double tol) { return penetration_depth(a, b) > tol; }

double separation_along(const Polygon& a, const Polygon& b, Vec2 dir) {
  if (penetration_depth(a, b) <= 0.0) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for_each_axis(a, b, [&](Vec2 axis) {
    for (Vec2 n : {axis, Vec2{-axis.x, -axis.y}}) {
      const double rate = dot(n, dir);
      if (rate <= 1e-12) continue;
      const double a_hi = project(a, n).second;
      const double b_lo = project(b, n).first;
      best = std::min(best, (a_hi - b_lo) / rate);
    }
  });
  return std::isfinite(best) ? std::max(0.0, best) : 0.0;
}

double polygon_distance(const Polygon& a, const Polygon& b) {
  if (penetration_depth(a, b) >= 0.0) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [p, q] : {std::pair{&a, &b}, std::pair{&b, &a}}) {
    const std::size_t n = q->size();
    for (Vec2 v : *p) {
      for (std::size_t i = 0; i < n; ++i) best = std::min(best, point_segment_distance(v, (*q)[i], (*q)[(i + 1) % n]));
    }
  }
  return best;
}

bool polygon_contains(const Polygon& poly, Vec2 p) {
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (cross(poly[(i + 1) % n] - poly[i], p - poly[i]) < -1e-12) return false;
  }
  return n >= 3;
}

Polygon rectangle(Vec2 center, double yaw, double extent_x, double extent_y) {
  const Vec2 ex = rotate({extent_x / 2.0, 0.0}, yaw);
  const Vec2 ey = rotate({0.0, extent_y / 2.0}, yaw);
  return {center - ex - ey, center + ex - ey, center + ex + ey, center - ex + ey};
}

Polygon regular_polygon(Vec2 center, double radius, int sides, double yaw) {
  Polygon out;
  out.reserve(static_cast<std::size_t>(sides));
  for (int i = 0; i < sides; ++i) {
    const double a = yaw + 2.0 * kPi * i / sides;
    out.push_back({center.x + radius * std::cos(a), center.y + radius * std::sin(a)});
  }
  return out;
}

}  // namespace trajgen
