#include "trajgen/simulator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "trajgen/errors.hpp"

namespace trajgen {

bool Workspace::contains(const Pose& p, double tol) const {
  return p.x >= x_min - tol && p.x <= x_max + tol && p.y >= y_min - tol && p.y <= y_max + tol &&
         p.z >= z_min - tol && p.z <= z_max + tol;
}

Pose Workspace::clamp(const Pose& p) const {
  return {std::clamp(p.x, x_min, x_max), std::clamp(p.y, y_min, y_max), std::clamp(p.z, z_min, z_max), p.yaw};
}

std::uint64_t Rng::next() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Objects

namespace {

constexpr int kCylinderSides = 16;
// Motion is swept in sub-steps so fast moves cannot tunnel through objects.
constexpr double kSubstep = 0.005;
constexpr double kSubstepYaw = 0.02;

Vec3 local_to_world(const Pose& frame, Vec3 local) {
  const Vec2 r = rotate(local.xy(), frame.yaw);
  return {frame.x + r.x, frame.y + r.y, frame.z + local.z};
}

}  // namespace

BBox3D SceneObject::bbox() const { return canonical_box(pose.position(), pose.yaw, size.x, size.y, size.z); }

BBox3D SceneObject::part_box(const ObjectPart& part) const {
  return canonical_box(local_to_world(pose, part.offset), pose.yaw + part.yaw, part.size.x, part.size.y,
                       part.size.z);
}

Polygon SceneObject::footprint() const {
  if (shape == Shape::Cylinder) return regular_polygon(pose.position().xy(), size.x / 2.0, kCylinderSides, pose.yaw);
  return rectangle(pose.position().xy(), pose.yaw, size.x, size.y);
}

namespace {

double box_width_along(double yaw, double w, double l, Vec2 axis) {
  const Vec2 ex = rotate({1.0, 0.0}, yaw);
  const Vec2 ey = rotate({0.0, 1.0}, yaw);
  return w * std::abs(dot(ex, axis)) + l * std::abs(dot(ey, axis));
}

}  // namespace

double SceneObject::width_along(Vec2 axis) const {
  if (shape == Shape::Cylinder) return size.x;
  return box_width_along(pose.yaw, size.x, size.y, axis);
}

const SceneObject* SimState::find(std::string_view name) const {
  for (const auto& o : objects) {
    if (o.name == name) return &o;
  }
  return nullptr;
}

SceneObject* SimState::find(std::string_view name) {
  for (auto& o : objects) {
    if (o.name == name) return &o;
  }
  return nullptr;
}

void TaskScene::validate() const {
  if (id.empty()) throw CatalogError("task id is empty");
  if (instruction.empty()) throw CatalogError("task " + id + ": instruction is empty");
  if (objects.empty()) throw CatalogError("task " + id + ": no objects");
  std::set<std::string> names;
  for (const auto& t : objects) {
    const auto& o = t.object;
    if (!names.insert(o.name).second) throw CatalogError("task " + id + ": duplicate object " + o.name);
    if (!(o.size.x > 0 && o.size.y > 0 && o.size.z > 0)) {
      throw CatalogError("task " + id + ": object " + o.name + " has non-positive dimensions");
    }
    if (t.relative_to && !names.count(t.relative_to->anchor)) {
      throw CatalogError("task " + id + ": object " + o.name + " is placed relative to unknown or later object " +
                         t.relative_to->anchor);
    }
  }
  for (const auto& [name, range] : randomization) {
    if (!names.count(name)) throw CatalogError("task " + id + ": randomization for unknown object " + name);
    const bool inside = range.x[0] <= range.x[1] && range.y[0] <= range.y[1] && range.yaw[0] <= range.yaw[1] &&
                        range.x[0] >= kWorkspace.x_min && range.x[1] <= kWorkspace.x_max &&
                        range.y[0] >= kWorkspace.y_min && range.y[1] <= kWorkspace.y_max;
    if (!inside) throw CatalogError("task " + id + ": randomization range of " + name + " leaves the workspace");
  }
  if (checker.empty()) throw CatalogError("task " + id + ": no checker");
}

// ---------------------------------------------------------------------------
// reset

SimState reset(const TaskScene& scene, std::uint64_t seed) {
  Rng rng(seed ^ fnv1a(scene.id));
  constexpr int kMaxAttempts = 1000;

  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    SimState state;
    std::map<std::string, std::string> anchor_of;
    for (const auto& tmpl : scene.objects) {
      SceneObject obj = tmpl.object;
      if (tmpl.relative_to) {
        const auto& rel = *tmpl.relative_to;
        const SceneObject* anchor = state.find(rel.anchor);
        const Vec2 xy = anchor->pose.position().xy() + rotate(rel.offset.position().xy(), anchor->pose.yaw);
        double base = 0.0;
        switch (rel.support) {
          case RelativePlacement::Support::Top: base = anchor->top(); break;
          case RelativePlacement::Support::Inside: base = anchor->bottom() + anchor->floor_thickness; break;
          case RelativePlacement::Support::Table: base = 0.0; break;
        }
        obj.pose = {xy.x, xy.y, base + obj.height() / 2.0 + rel.offset.z, wrap_angle(anchor->pose.yaw + rel.offset.yaw)};
        anchor_of[obj.name] = rel.anchor;
      } else {
        if (auto it = scene.randomization.find(obj.name); it != scene.randomization.end()) {
          const auto& r = it->second;
          obj.pose.x = rng.uniform(r.x[0], r.x[1]);
          obj.pose.y = rng.uniform(r.y[0], r.y[1]);
          obj.pose.yaw = wrap_angle(rng.uniform(r.yaw[0], r.yaw[1]));
        }
        obj.pose.z = obj.height() / 2.0;
      }
      state.objects.push_back(std::move(obj));
    }

    bool clear = true;
    for (std::size_t i = 0; i < state.objects.size() && clear; ++i) {
      for (std::size_t j = i + 1; j < state.objects.size() && clear; ++j) {
        const auto& a = state.objects[i];
        const auto& b = state.objects[j];
        const auto related = [&](const std::string& x, const std::string& y) {
          auto it = anchor_of.find(x);
          return it != anchor_of.end() && it->second == y;
        };
        if (related(a.name, b.name) || related(b.name, a.name)) continue;
        if (polygons_overlap(a.footprint(), b.footprint(), 1e-9)) clear = false;
      }
    }
    if (clear) return state;
  }
  throw PlacementInfeasible("task " + scene.id + ": no collision-free placement after 1000 samples");
}

// ---------------------------------------------------------------------------
// Motion

namespace {

struct Solid {
  std::string name;
  Polygon footprint;
  double z_lo = 0.0;
  double z_hi = 0.0;
};

double opening(const SimState& s) {
  if (s.gripper_open) return gripper::kStroke;
  return s.attached ? s.attached->grip_width : 0.0;
}

std::vector<Solid> finger_solids(const SimState& s) {
  const Pose& g = s.gripper;
  const double offset = opening(s) / 2.0 + gripper::kFingerThickness / 2.0;
  std::vector<Solid> out;
  for (double side : {-1.0, 1.0}) {
    const Vec2 c = g.position().xy() + rotate({side * offset, 0.0}, g.yaw);
    out.push_back({"gripper", rectangle(c, g.yaw, gripper::kFingerThickness, gripper::kFingerDepth), g.z,
                   g.z + gripper::kFingerHeight});
  }
  return out;
}

std::vector<Solid> obstacle_solids(const SceneObject& o) {
  std::vector<Solid> out;
  if (o.container && !o.parts.empty()) {
    for (const auto& part : o.parts) {
      const BBox3D b = o.part_box(part);
      out.push_back({o.name, rectangle(b.position.xy(), b.orientation, b.dimensions.x, b.dimensions.y),
                     b.position.z - b.dimensions.z / 2.0, b.position.z + b.dimensions.z / 2.0});
    }
    // Floor slab.
    out.push_back({o.name, o.footprint(), o.bottom(), o.bottom() + o.floor_thickness});
  } else {
    out.push_back({o.name, o.footprint(), o.bottom(), o.top()});
  }
  return out;
}

void update_attached(SimState& s) {
  if (!s.attached) return;
  SceneObject* obj = s.find(s.attached->object);
  const Pose& rel = s.attached->relative;
  const Vec3 p = local_to_world(s.gripper, rel.position());
  obj->pose = {p.x, p.y, p.z, wrap_angle(s.gripper.yaw + rel.yaw)};
}

void record_collision(SimState& s, const std::string& mover, const std::string& other, double depth, bool pushed) {
  for (auto& c : s.collisions) {
    if (c.tick == s.tick && c.mover == mover && c.other == other) {
      c.depth = std::max(c.depth, depth);
      c.pushed = c.pushed || pushed;
      return;
    }
  }
  s.collisions.push_back({s.tick, mover, other, depth, pushed});
}

void sweep(SimState& s, const Pose& from, const Pose& to) {
  s.gripper = to;
  update_attached(s);

  const Vec2 delta = to.position().xy() - from.position().xy();
  const double len = norm(delta);
  const Vec2 dir = len > 1e-12 ? (1.0 / len) * delta : Vec2{};

  std::vector<Solid> movers = finger_solids(s);
  if (s.attached) {
    const SceneObject* carried = s.find(s.attached->object);
    movers.push_back({carried->name, carried->footprint(), carried->bottom(), carried->top()});
    if (carried->bottom() < -kContactTolerance) record_collision(s, carried->name, "table", -carried->bottom(), false);
  }

  for (auto& obj : s.objects) {
    if (s.attached && obj.name == s.attached->object) continue;
    double push = 0.0;
    for (const Solid& m : movers) {
      for (const Solid& o : obstacle_solids(obj)) {
        if (std::min(m.z_hi, o.z_hi) - std::max(m.z_lo, o.z_lo) <= kContactTolerance) continue;
        const double depth = penetration_depth(m.footprint, o.footprint);
        if (depth <= kContactTolerance) continue;
        const bool can_push = obj.movable && len > 1e-12;
        if (can_push) push = std::max(push, separation_along(m.footprint, o.footprint, dir));
        record_collision(s, m.name, obj.name, depth, can_push);
      }
    }
    if (push > 0.0) {
      push = std::min(push, len);
      obj.pose.x += push * dir.x;
      obj.pose.y += push * dir.y;
    }
  }
}

}  // namespace

SimState step_to(SimState s, const Pose& requested) {
  Pose target = requested;
  target.yaw = wrap_angle(target.yaw);
  if (!kWorkspace.contains(target)) {
    const Pose clamped = kWorkspace.clamp(target);
    s.violations.push_back({s.tick, requested, clamped});
    target = clamped;
  }
  const auto path = interpolate_linear(s.gripper, target, kSubstep, kSubstepYaw);
  for (std::size_t i = 1; i < path.size(); ++i) sweep(s, path[i - 1], path[i]);
  s.gripper = target;
  update_attached(s);
  ++s.tick;
  return s;
}

namespace {

void settle(SimState& s, SceneObject& obj) {
  const Vec2 c = obj.pose.position().xy();
  double support = 0.0;
  for (const auto& other : s.objects) {
    if (other.name == obj.name) continue;
    if (!polygon_contains(other.footprint(), c)) continue;
    const double h = other.support_height();
    if (h <= obj.bottom() + 1e-9) support = std::max(support, h);
  }
  obj.pose.z = support + obj.height() / 2.0;
}

}  // namespace

SimState set_gripper(SimState s, bool open) {
  if (open) {
    if (s.attached) {
      SceneObject* obj = s.find(s.attached->object);
      s.attached.reset();
      s.gripper_open = true;
      settle(s, *obj);
    }
    s.gripper_open = true;
  } else if (s.gripper_open) {
    const Pose& g = s.gripper;
    const Vec2 axis = rotate({1.0, 0.0}, g.yaw);
    const SceneObject* best = nullptr;
    double best_dist = std::numeric_limits<double>::infinity();
    double best_width = 0.0;

    const auto consider = [&](const SceneObject& obj, Vec3 point, double width) {
      const double dxy = norm(point.xy() - g.position().xy());
      if (dxy > gripper::kGraspToleranceXY + 1e-12) return;
      if (std::abs(point.z - g.z) > gripper::kGraspToleranceZ + 1e-12) return;
      if (width > gripper::kStroke + 1e-12) return;
      if (dxy < best_dist) {
        best = &obj;
        best_dist = dxy;
        best_width = width;
      }
    };
    for (const auto& obj : s.objects) {
      if (!obj.graspable) continue;
      consider(obj, obj.pose.position(), obj.width_along(axis));
      for (const auto& part : obj.parts) {
        const BBox3D b = obj.part_box(part);
        consider(obj, b.position, box_width_along(b.orientation, b.dimensions.x, b.dimensions.y, axis));
      }
    }
    s.gripper_open = false;
    if (best != nullptr) {
      const Vec2 rel_xy = rotate(best->pose.position().xy() - g.position().xy(), -g.yaw);
      s.attached = Attachment{best->name,
                              {rel_xy.x, rel_xy.y, best->pose.z - g.z, wrap_angle(best->pose.yaw - g.yaw)},
                              best_width};
    }
  }
  ++s.tick;
  return s;
}

// ---------------------------------------------------------------------------
// Detection

namespace {

std::vector<std::string> tokenize(std::string_view text) {
  static const std::set<std::string> kStopwords = {"the", "a",    "an",   "of",  "on",   "in",  "to",  "at",
                                                   "with", "which", "is", "that", "from", "and", "for", "its"};
  std::vector<std::string> out;
  std::string cur;
  const auto flush = [&] {
    if (!cur.empty() && !kStopwords.count(cur)) out.push_back(cur);
    cur.clear();
  };
  for (char ch : text) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

}  // namespace

Detection detect_object(const SimState& state, std::string_view query, double noise_sigma, Rng& rng) {
  const auto q = tokenize(query);
  const std::set<std::string> qset(q.begin(), q.end());

  struct Candidate {
    const SceneObject* obj;
    const ObjectPart* part;
    std::size_t overlap;
    std::size_t size;
  };
  std::optional<Candidate> best;
  const auto score = [&](const SceneObject& obj, const ObjectPart* part) {
    auto tokens = tokenize(obj.name);
    if (part != nullptr) {
      auto extra = tokenize(part->name);
      tokens.insert(tokens.end(), extra.begin(), extra.end());
    }
    const std::set<std::string> tset(tokens.begin(), tokens.end());
    std::size_t overlap = 0;
    for (const auto& t : tset) overlap += qset.count(t);
    if (overlap == 0) return;
    const Candidate c{&obj, part, overlap, tset.size()};
    if (!best || c.overlap > best->overlap || (c.overlap == best->overlap && c.size < best->size)) best = c;
  };
  for (const auto& obj : state.objects) {
    score(obj, nullptr);
    for (const auto& part : obj.parts) score(obj, &part);
  }
  if (!best) throw ObjectNotFound("object not found: " + std::string(query));

  Detection d{best->obj->name, std::nullopt, best->obj->bbox()};
  if (best->part != nullptr) {
    d.part = best->part->name;
    d.box = best->obj->part_box(*best->part);
  }
  if (noise_sigma > 0.0) {
    BBox3D& b = d.box;
    b.position = b.position + Vec3{noise_sigma * rng.normal(), noise_sigma * rng.normal(), noise_sigma * rng.normal()};
    const auto noisy = [&](double v) { return std::max(0.001, v + noise_sigma * rng.normal()); };
    const double w = noisy(b.dimensions.x);
    const double l = noisy(b.dimensions.y);
    const double h = noisy(b.dimensions.z);
    b = canonical_box(b.position, b.orientation, w, l, h);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Tracks

TickRecord snapshot(const SimState& state) {
  TickRecord r{state.tick, state.gripper, state.gripper_open, {}};
  for (const auto& obj : state.objects) r.objects.emplace(obj.name, obj.bbox());
  return r;
}

std::vector<std::size_t> downsample_indices(std::size_t n, std::size_t cap) {
  std::vector<std::size_t> idx;
  if (n <= std::max<std::size_t>(cap, 2)) {
    for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    return idx;
  }
  if (cap < 2) return {0, n - 1};
  for (std::size_t i = 0; i < cap; ++i) {
    const double t = static_cast<double>(i) * static_cast<double>(n - 1) / static_cast<double>(cap - 1);
    idx.push_back(static_cast<std::size_t>(std::llround(t)));
  }
  return idx;
}

ObjectTracks tracks(std::span<const TickRecord> history, const std::set<std::string>& detected, std::size_t cap) {
  ObjectTracks out;
  const auto idx = downsample_indices(history.size(), cap);
  for (std::size_t i : idx) {
    const TickRecord& rec = history[i];
    out.gripper.push_back({rec.tick, rec.gripper, rec.gripper_open});
    for (const auto& name : detected) {
      if (auto it = rec.objects.find(name); it != rec.objects.end()) out.objects[name].emplace_back(rec.tick, it->second);
    }
  }
  return out;
}

}  // namespace trajgen
