#include "trajgen/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "trajgen/errors.hpp"

#ifndef TRAJGEN_TASKS_DIR
#define TRAJGEN_TASKS_DIR "tasks"
#endif

namespace trajgen {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Height band that counts as resting on the table.
constexpr double kOnTable = 0.005;

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw CatalogError(where + ": missing or malformed field '" + key + "'");
  }
}

template <typename T>
T field_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  return field<T>(j, key, where);
}

Vec3 vec3_field(const json& j, const char* key, const std::string& where) {
  const auto v = field<std::vector<double>>(j, key, where);
  if (v.size() != 3) throw CatalogError(where + ": '" + key + "' needs 3 values");
  return {v[0], v[1], v[2]};
}

std::array<double, 2> range_field(const json& j, const char* key, const std::string& where) {
  const auto v = field<std::vector<double>>(j, key, where);
  if (v.size() != 2) throw CatalogError(where + ": '" + key + "' needs [min, max]");
  return {v[0], v[1]};
}

RelativePlacement::Support support_from_name(const std::string& s, const std::string& where) {
  if (s == "top") return RelativePlacement::Support::Top;
  if (s == "inside") return RelativePlacement::Support::Inside;
  if (s == "table") return RelativePlacement::Support::Table;
  throw CatalogError(where + ": unknown support '" + s + "'");
}

std::string support_name(RelativePlacement::Support s) {
  switch (s) {
    case RelativePlacement::Support::Top: return "top";
    case RelativePlacement::Support::Inside: return "inside";
    case RelativePlacement::Support::Table: return "table";
  }
  return "top";
}

ObjectTemplate object_from_json(const json& j, const std::string& task) {
  ObjectTemplate t;
  SceneObject& o = t.object;
  o.name = field<std::string>(j, "name", "task " + task);
  const std::string where = "task " + task + ", object " + o.name;
  const auto shape = field_or<std::string>(j, "shape", "box", where);
  if (shape == "box") {
    o.shape = Shape::Box;
  } else if (shape == "cylinder") {
    o.shape = Shape::Cylinder;
  } else {
    throw CatalogError(where + ": unknown shape '" + shape + "'");
  }
  o.size = vec3_field(j, "size", where);
  if (o.shape == Shape::Cylinder && o.size.x != o.size.y) {
    throw CatalogError(where + ": cylinder size must be [d, d, h]");
  }
  const auto pose = field_or<std::vector<double>>(j, "pose", {0.0, 0.3, 0.0}, where);
  if (pose.size() != 3) throw CatalogError(where + ": 'pose' needs [x, y, yaw]");
  o.pose = {pose[0], pose[1], o.size.z / 2.0, pose[2]};
  o.graspable = field_or(j, "graspable", true, where);
  o.movable = field_or(j, "movable", true, where);
  o.container = field_or(j, "container", false, where);
  o.floor_thickness = field_or(j, "floor_thickness", 0.0, where);
  for (const auto& p : j.value("parts", json::array())) {
    ObjectPart part;
    part.name = field<std::string>(p, "name", where);
    part.offset = vec3_field(p, "offset", where + ", part " + part.name);
    part.yaw = field_or(p, "yaw", 0.0, where);
    part.size = vec3_field(p, "size", where + ", part " + part.name);
    o.parts.push_back(std::move(part));
  }
  if (j.contains("relative_to")) {
    const json& r = j.at("relative_to");
    RelativePlacement rel;
    rel.anchor = field<std::string>(r, "anchor", where);
    const auto off = field_or<std::vector<double>>(r, "offset", {0.0, 0.0, 0.0, 0.0}, where);
    if (off.size() != 4) throw CatalogError(where + ": relative offset needs [x, y, z, yaw]");
    rel.offset = {off[0], off[1], off[2], off[3]};
    rel.support = support_from_name(field_or<std::string>(r, "support", "top", where), where);
    t.relative_to = rel;
  }
  return t;
}

json object_to_json(const ObjectTemplate& t) {
  const SceneObject& o = t.object;
  json j = {{"name", o.name},
            {"shape", o.shape == Shape::Box ? "box" : "cylinder"},
            {"size", {o.size.x, o.size.y, o.size.z}},
            {"pose", {o.pose.x, o.pose.y, o.pose.yaw}},
            {"graspable", o.graspable},
            {"movable", o.movable}};
  if (o.container) {
    j["container"] = true;
    j["floor_thickness"] = o.floor_thickness;
  }
  if (!o.parts.empty()) {
    json parts = json::array();
    for (const auto& p : o.parts) {
      parts.push_back({{"name", p.name},
                       {"offset", {p.offset.x, p.offset.y, p.offset.z}},
                       {"yaw", p.yaw},
                       {"size", {p.size.x, p.size.y, p.size.z}}});
    }
    j["parts"] = std::move(parts);
  }
  if (t.relative_to) {
    const auto& r = *t.relative_to;
    j["relative_to"] = {{"anchor", r.anchor},
                        {"offset", {r.offset.x, r.offset.y, r.offset.z, r.offset.yaw}},
                        {"support", support_name(r.support)}};
  }
  return j;
}

}  // namespace

TaskScene scene_from_json(const json& j) {
  TaskScene s;
  s.id = field<std::string>(j, "id", "task");
  const std::string where = "task " + s.id;
  s.instruction = field<std::string>(j, "instruction", where);
  for (const auto& o : field<json>(j, "objects", where)) s.objects.push_back(object_from_json(o, s.id));
  const json randomization = j.value("randomization", json::object());
  for (const auto& [name, r] : randomization.items()) {
    const std::string w = where + ", randomization of " + name;
    PlacementRange range;
    range.x = range_field(r, "x", w);
    range.y = range_field(r, "y", w);
    range.yaw = r.contains("yaw") ? range_field(r, "yaw", w) : std::array<double, 2>{0.0, 0.0};
    s.randomization[name] = range;
  }
  s.checker = field<std::string>(j, "checker", where);
  s.checker_params = j.value("checker_params", json::object());
  s.proxy_notes = j.value("proxy_notes", "");
  return s;
}

json scene_to_json(const TaskScene& s) {
  json objects = json::array();
  for (const auto& o : s.objects) objects.push_back(object_to_json(o));
  json randomization = json::object();
  for (const auto& [name, r] : s.randomization) {
    randomization[name] = {{"x", r.x}, {"y", r.y}, {"yaw", r.yaw}};
  }
  return {{"id", s.id},
          {"instruction", s.instruction},
          {"objects", std::move(objects)},
          {"randomization", std::move(randomization)},
          {"checker", s.checker},
          {"checker_params", s.checker_params},
          {"proxy_notes", s.proxy_notes}};
}

TaskCatalog TaskCatalog::load(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw CatalogError("task directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  TaskCatalog catalog;
  for (const auto& path : files) {
    std::ifstream in(path, std::ios::binary);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw CatalogError(path.string() + ": " + e.what());
    }
    TaskScene scene = scene_from_json(j);
    if (scene.id != path.stem().string()) {
      throw CatalogError(path.string() + ": id '" + scene.id + "' does not match the file name");
    }
    catalog.add(std::move(scene));
  }
  return catalog;
}

void TaskCatalog::add(TaskScene scene) {
  scene.validate();
  if (!has_checker(scene.checker)) {
    throw CatalogError("task " + scene.id + ": unknown checker '" + scene.checker + "'");
  }
  const std::string id = scene.id;
  if (!tasks_.emplace(id, std::move(scene)).second) throw CatalogError("duplicate task id " + id);
}

const TaskScene& TaskCatalog::get(std::string_view id) const {
  const auto it = tasks_.find(id);
  if (it == tasks_.end()) throw UnknownTask("unknown task: " + std::string(id));
  return it->second;
}

bool TaskCatalog::contains(std::string_view id) const { return tasks_.find(id) != tasks_.end(); }

std::vector<std::string> TaskCatalog::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : tasks_) out.push_back(id);
  return out;
}

fs::path default_tasks_dir() {
  std::error_code ec;
  if (fs::is_directory("tasks", ec)) return "tasks";
  return TRAJGEN_TASKS_DIR;
}

const std::vector<std::string>& ablation_task_ids() {
  static const std::vector<std::string> ids = {"pick_chip_bag_right_of_can", "place_apple_in_bowl",
                                               "shake_mustard_bottle", "open_bottle_cap", "move_pan_left"};
  return ids;
}

// ---------------------------------------------------------------------------
// Geometry over boxes

namespace {

Polygon fp(const BBox3D& b) {
  const auto c = footprint(b);
  return {c.begin(), c.end()};
}

double bottom(const BBox3D& b) { return b.position.z - b.dimensions.z / 2.0; }
double top(const BBox3D& b) { return b.position.z + b.dimensions.z / 2.0; }
Vec2 center(const BBox3D& b) { return b.position.xy(); }

bool square(const BBox3D& b) { return std::abs(b.dimensions.x - b.dimensions.y) <= 1e-9; }

double reduce(double a, double period) { return a - period * std::floor(a / period + 0.5); }

bool inside_footprint(const BBox3D& container, Vec2 p) { return polygon_contains(fp(container), p); }

}  // namespace

double edge_gap(const BBox3D& a, const BBox3D& b) { return polygon_distance(fp(a), fp(b)); }

double accumulated_rotation(std::span<const BBox3D> boxes) {
  double total = 0.0;
  for (std::size_t i = 1; i < boxes.size(); ++i) {
    const double period = square(boxes[i]) ? kPi / 2.0 : kPi;
    total += reduce(boxes[i].orientation - boxes[i - 1].orientation, period);
  }
  return total;
}

int count_reversals(std::span<const double> values, double amplitude) {
  if (values.empty()) return 0;
  int n = 0;
  int dir = 0;
  const double start = values.front();
  double ext = start;
  for (double v : values) {
    if (dir == 0) {
      if (v - start >= amplitude) {
        dir = 1;
        ext = v;
      } else if (start - v >= amplitude) {
        dir = -1;
        ext = v;
      }
    } else if (dir > 0) {
      if (v > ext) {
        ext = v;
      } else if (ext - v >= amplitude) {
        ++n;
        dir = -1;
        ext = v;
      }
    } else {
      if (v < ext) {
        ext = v;
      } else if (v - ext >= amplitude) {
        ++n;
        dir = 1;
        ext = v;
      }
    }
  }
  return n;
}

int count_direction_changes(std::span<const Vec2> path) {
  int n = 0;
  std::optional<Vec2> ref;
  for (std::size_t i = 1; i < path.size(); ++i) {
    const Vec2 d = path[i] - path[i - 1];
    if (norm(d) < 1e-6) continue;
    if (!ref) {
      ref = d;
    } else if (dot(*ref, d) < 0.0) {
      ++n;
      ref = d;
    }
  }
  return n;
}

double path_length(std::span<const Vec2> path) {
  double total = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) total += norm(path[i] - path[i - 1]);
  return total;
}

// ---------------------------------------------------------------------------
// Checkers

namespace {

struct Params {
  const json& j;
  std::string checker;

  template <typename T>
  T get(const char* key) const {
    try {
      return j.at(key).get<T>();
    } catch (const json::exception&) {
      throw CatalogError("checker " + checker + ": missing or malformed parameter '" + key + "'");
    }
  }
  template <typename T>
  T get(const char* key, T fallback) const {
    return j.contains(key) ? get<T>(key) : fallback;
  }
  Vec2 unit(const char* key, std::optional<Vec2> fallback) const {
    Vec2 v;
    if (!j.contains(key) && fallback) {
      v = *fallback;
    } else {
      const auto d = get<std::vector<double>>(key);
      if (d.size() != 2) throw CatalogError("checker " + checker + ": '" + key + "' needs 2 values");
      v = {d[0], d[1]};
    }
    if (!(norm(v) > 0.0)) throw CatalogError("checker " + checker + ": '" + key + "' must be non-zero");
    return (1.0 / norm(v)) * v;
  }
  double positive(const char* key, double fallback) const {
    const double v = get<double>(key, fallback);
    if (!(v > 0.0)) throw CatalogError("checker " + checker + ": parameter '" + key + "' must be positive");
    return v;
  }
};

std::vector<BBox3D> series(std::span<const TickRecord> ticks, const std::string& name) {
  std::vector<BBox3D> out;
  out.reserve(ticks.size());
  for (const auto& t : ticks) {
    const auto it = t.objects.find(name);
    if (it == t.objects.end()) throw CatalogError("object '" + name + "' missing from the episode log");
    out.push_back(it->second);
  }
  return out;
}

bool released(std::span<const TickRecord> ticks) { return ticks.back().gripper_open; }

// Longest run of consecutive indices where pred holds.
template <typename Pred>
std::pair<std::size_t, std::size_t> longest_run(std::size_t n, Pred pred) {
  std::size_t best_begin = 0, best_len = 0, begin = 0, len = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (pred(i)) {
      if (len == 0) begin = i;
      ++len;
      if (len > best_len) {
        best_len = len;
        best_begin = begin;
      }
    } else {
      len = 0;
    }
  }
  return {best_begin, best_begin + best_len};
}

bool lift(std::span<const TickRecord> ticks, const Params& p) {
  const auto s = series(ticks, p.get<std::string>("target"));
  const double min_gain = p.positive("min_gain", 0.10);
  const double z0 = bottom(s.front());
  return std::any_of(s.begin(), s.end(), [&](const BBox3D& b) { return bottom(b) - z0 >= min_gain - 1e-12; });
}

bool proximity(std::span<const TickRecord> ticks, const Params& p) {
  const auto target = series(ticks, p.get<std::string>("target")).back();
  const auto reference = series(ticks, p.get<std::string>("reference")).back();
  const double max_gap = p.positive("max_gap", 0.05);
  return released(ticks) && bottom(target) <= kOnTable && edge_gap(target, reference) <= max_gap + 1e-12;
}

bool proximity_any(std::span<const TickRecord> ticks, const Params& p) {
  const auto target = series(ticks, p.get<std::string>("target")).back();
  const double max_gap = p.positive("max_gap", 0.05);
  if (!released(ticks) || bottom(target) > kOnTable) return false;
  for (const auto& ref : p.get<std::vector<std::string>>("references")) {
    if (edge_gap(target, series(ticks, ref).back()) <= max_gap + 1e-12) return true;
  }
  return false;
}

bool stays_on_table(const std::vector<BBox3D>& s) {
  return std::all_of(s.begin(), s.end(), [](const BBox3D& b) { return std::abs(bottom(b)) <= kOnTable; });
}

bool push(std::span<const TickRecord> ticks, const Params& p) {
  const auto s = series(ticks, p.get<std::string>("target"));
  if (!stays_on_table(s)) return false;
  const Vec2 moved = center(s.back()) - center(s.front());
  if (p.j.contains("reference")) {
    const auto reference = series(ticks, p.get<std::string>("reference")).back();
    const double max_gap = p.positive("max_gap", 0.05);
    const double min_displacement = p.positive("min_displacement", 0.01);
    return norm(moved) >= min_displacement && edge_gap(s.back(), reference) <= max_gap + 1e-12;
  }
  const Vec2 u = p.unit("direction", {});
  return dot(moved, u) >= p.positive("min_distance", 0.10) - 1e-12;
}

bool displacement(std::span<const TickRecord> ticks, const Params& p) {
  const auto s = series(ticks, p.get<std::string>("target"));
  const Vec2 u = p.unit("direction", {});
  return dot(center(s.back()) - center(s.front()), u) >= p.positive("min_distance", 0.10) - 1e-12;
}

bool edge_proximity(std::span<const TickRecord> ticks, const Params& p) {
  const auto target = series(ticks, p.get<std::string>("target")).back();
  const double edge_y = p.get<double>("edge_y", kWorkspace.y_min);
  const double max_distance = p.positive("max_distance", 0.10);
  return released(ticks) && bottom(target) <= kOnTable && target.position.y - edge_y <= max_distance + 1e-12;
}

bool contact(std::span<const TickRecord> ticks, const Params& p) {
  const auto a = series(ticks, p.get<std::string>("target"));
  const auto b = series(ticks, p.get<std::string>("other"));
  const double max_gap = p.positive("max_gap", 0.005);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double z_overlap = std::min(top(a[i]), top(b[i])) - std::max(bottom(a[i]), bottom(b[i]));
    if (z_overlap >= -max_gap && edge_gap(a[i], b[i]) <= max_gap) return true;
  }
  return false;
}

bool containment(std::span<const TickRecord> ticks, const Params& p) {
  const auto target = series(ticks, p.get<std::string>("target")).back();
  const auto box = series(ticks, p.get<std::string>("container")).back();
  return released(ticks) && inside_footprint(box, center(target)) && bottom(target) < top(box);
}

bool outside_container(std::span<const TickRecord> ticks, const Params& p) {
  const auto target = series(ticks, p.get<std::string>("target")).back();
  const auto box = series(ticks, p.get<std::string>("container")).back();
  return released(ticks) && !inside_footprint(box, center(target)) && bottom(target) <= kOnTable;
}

bool removed_from(std::span<const TickRecord> ticks, const Params& p) {
  const auto target = series(ticks, p.get<std::string>("target")).back();
  const auto box = series(ticks, p.get<std::string>("container")).back();
  return edge_gap(target, box) > 0.0 || bottom(target) >= top(box);
}

bool rest_on(std::span<const TickRecord> ticks, const Params& p) {
  const auto target = series(ticks, p.get<std::string>("target")).back();
  const auto support = series(ticks, p.get<std::string>("support")).back();
  const double tol = p.positive("tolerance", 0.01);
  return released(ticks) && inside_footprint(support, center(target)) &&
         std::abs(bottom(target) - top(support)) <= tol && bottom(target) > kOnTable;
}

bool wipe(std::span<const TickRecord> ticks, const Params& p) {
  const auto s = series(ticks, p.get<std::string>("target"));
  const std::string surface = p.get<std::string>("surface");
  const double band = p.positive("band", 0.01);
  const double min_path = p.positive("min_path", 0.15);
  const int min_changes = p.get<int>("min_changes", 2);
  std::vector<BBox3D> surf;
  if (surface != "table") surf = series(ticks, surface);

  const auto touching = [&](std::size_t i) {
    if (surface == "table") return bottom(s[i]) <= band && bottom(s[i]) >= -band;
    const double gap = bottom(s[i]) - top(surf[i]);
    return gap <= band && gap >= -band && inside_footprint(surf[i], center(s[i]));
  };
  if (p.j.contains("avoid")) {
    const auto avoid = series(ticks, p.get<std::string>("avoid"));
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (bottom(s[i]) < top(avoid[i]) + kContactTolerance && edge_gap(s[i], avoid[i]) <= kContactTolerance) return false;
    }
  }
  const auto [b, e] = longest_run(s.size(), touching);
  std::vector<Vec2> path;
  for (std::size_t i = b; i < e; ++i) path.push_back(center(s[i]));
  return path_length(path) >= min_path - 1e-12 && count_direction_changes(path) >= min_changes;
}

bool shake(std::span<const TickRecord> ticks, const Params& p) {
  const auto s = series(ticks, p.get<std::string>("target"));
  const double amplitude = p.positive("amplitude", 0.03);
  const int min_reversals = p.get<int>("min_reversals", 2);
  std::array<std::vector<double>, 3> axes;
  for (const auto& b : s) {
    axes[0].push_back(b.position.x);
    axes[1].push_back(b.position.y);
    axes[2].push_back(b.position.z);
  }
  return std::any_of(axes.begin(), axes.end(),
                     [&](const std::vector<double>& v) { return count_reversals(v, amplitude) >= min_reversals; });
}

bool stir(std::span<const TickRecord> ticks, const Params& p) {
  const auto s = series(ticks, p.get<std::string>("target"));
  const auto mug = series(ticks, p.get<std::string>("container"));
  const double min_angle = p.positive("min_angle", 1.5 * kPi);
  const double min_radius = p.positive("min_radius", 0.005);
  const auto inside = [&](std::size_t i) {
    return inside_footprint(mug[i], center(s[i])) && bottom(s[i]) < top(mug[i]);
  };
  const auto [b, e] = longest_run(s.size(), inside);
  double total = 0.0;
  std::optional<double> last;
  for (std::size_t i = b; i < e; ++i) {
    const Vec2 r = center(s[i]) - center(mug[i]);
    if (norm(r) < min_radius) continue;
    const double a = std::atan2(r.y, r.x);
    if (last) total += wrap_angle(a - *last);
    last = a;
  }
  return std::abs(total) >= min_angle;
}

// Outer vertices of a regular five-pointed star, then the inner ones where
// its strokes cross.
std::array<Vec2, 10> star_vertices(Vec2 c, double radius, double theta) {
  const double inner = radius * std::sin(kPi / 10.0) / std::sin(7.0 * kPi / 10.0);
  std::array<Vec2, 10> v{};
  for (int k = 0; k < 5; ++k) {
    const double a = theta + 2.0 * kPi * k / 5.0;
    v[k] = c + Vec2{radius * std::cos(a), radius * std::sin(a)};
    v[5 + k] = c + Vec2{inner * std::cos(a + kPi / 5.0), inner * std::sin(a + kPi / 5.0)};
  }
  return v;
}

double star_miss(const std::vector<Vec2>& path, Vec2 c, double radius, double theta) {
  double worst = 0.0;
  for (const Vec2 v : star_vertices(c, radius, theta)) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec2 q : path) best = std::min(best, norm(q - v));
    worst = std::max(worst, best);
  }
  return worst;
}

bool star(std::span<const TickRecord> ticks, const Params& p) {
  const auto s = series(ticks, p.get<std::string>("target"));
  const double radius = p.positive("radius", 0.05);
  const double tol = p.positive("tolerance", 0.015);
  const double band = p.positive("band", 0.01);
  std::vector<Vec2> path;
  for (const auto& b : s) {
    if (bottom(b) > band) continue;
    if (!path.empty() && norm(path.back() - center(b)) < 1e-6) continue;
    path.push_back(center(b));
  }
  if (path.size() < 5) return false;
  if (path.size() > 200) {
    std::vector<Vec2> thin;
    for (std::size_t i : downsample_indices(path.size(), 200)) thin.push_back(path[i]);
    path = std::move(thin);
  }
  Vec2 c0{};
  for (const Vec2 q : path) c0 = c0 + q;
  c0 = (1.0 / static_cast<double>(path.size())) * c0;

  // Coarse search over rotation and center, then a finer pass around the best.
  double best = std::numeric_limits<double>::infinity();
  Vec2 best_c = c0;
  double best_t = 0.0;
  const double period = 2.0 * kPi / 5.0;
  for (int ti = 0; ti < 72; ++ti) {
    const double t = period * ti / 72.0;
    for (int ix = -5; ix <= 5; ++ix) {
      for (int iy = -5; iy <= 5; ++iy) {
        const Vec2 c = c0 + Vec2{0.002 * ix, 0.002 * iy};
        const double m = star_miss(path, c, radius, t);
        if (m < best) {
          best = m;
          best_c = c;
          best_t = t;
        }
      }
    }
  }
  const Vec2 c1 = best_c;
  const double t1 = best_t;
  for (int ti = -10; ti <= 10; ++ti) {
    const double t = t1 + period / 72.0 * ti / 10.0;
    for (int ix = -4; ix <= 4; ++ix) {
      for (int iy = -4; iy <= 4; ++iy) {
        const double m = star_miss(path, c1 + Vec2{0.0005 * ix, 0.0005 * iy}, radius, t);
        best = std::min(best, m);
      }
    }
  }
  return best <= tol;
}

bool circle(std::span<const TickRecord> ticks, const Params& p) {
  const auto c = p.get<std::vector<double>>("center");
  if (c.size() < 2) throw CatalogError("checker circle: 'center' needs [x, y] or [x, y, z]");
  const Vec2 ctr{c[0], c[1]};
  const double radius = p.positive("radius", 0.05);
  const double tol = p.positive("tolerance", 0.015);
  const double max_z = p.positive("max_z", 0.01);
  const double coverage = p.positive("min_coverage", 1.8 * kPi);
  const auto drawing = [&](std::size_t i) { return !ticks[i].gripper_open && ticks[i].gripper.z <= max_z + 1e-12; };
  const auto [b, e] = longest_run(ticks.size(), drawing);
  if (e - b < 3) return false;
  double swept = 0.0;
  std::optional<double> last;
  for (std::size_t i = b; i < e; ++i) {
    const Vec2 r = ticks[i].gripper.position().xy() - ctr;
    if (std::abs(norm(r) - radius) > tol + 1e-12) return false;
    const double a = std::atan2(r.y, r.x);
    if (last) swept += wrap_angle(a - *last);
    last = a;
  }
  return std::abs(swept) >= coverage - 1e-9;
}

bool align_axis(std::span<const TickRecord> ticks, const Params& p) {
  const auto target = series(ticks, p.get<std::string>("target")).back();
  const Vec2 u = p.unit("axis", {{0.0, 1.0}});
  const double tol = p.positive("tolerance", 10.0 * kPi / 180.0);
  const Vec2 length_dir = rotate({0.0, 1.0}, target.orientation);
  const double angle = std::acos(std::min(1.0, std::abs(dot(length_dir, u))));
  return released(ticks) && bottom(target) <= kOnTable && angle <= tol + 1e-12;
}

bool rotate_in_place(std::span<const TickRecord> ticks, const Params& p) {
  const auto s = series(ticks, p.get<std::string>("target"));
  const double min_angle = p.positive("min_angle", kPi / 2.0);
  const double max_lift = p.positive("max_lift", 0.01);
  const auto direction = p.get<std::string>("direction", "any");
  const double z0 = bottom(s.front());
  for (const auto& b : s) {
    if (bottom(b) - z0 > max_lift + 1e-12) return false;
  }
  const double rot = accumulated_rotation(s);
  if (direction == "ccw") return rot >= min_angle - 1e-9;
  if (direction == "cw") return -rot >= min_angle - 1e-9;
  if (direction == "any") return std::abs(rot) >= min_angle - 1e-9;
  throw CatalogError("checker rotate: unknown direction '" + direction + "'");
}

bool topple(std::span<const TickRecord> ticks, const Params& p) {
  const auto s = series(ticks, p.get<std::string>("target"));
  const double min_displacement = p.positive("min_displacement", 0.05);
  if (!stays_on_table(s)) return false;
  if (norm(center(s.back()) - center(s.front())) < min_displacement - 1e-12) return false;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (norm(center(s[i]) - center(s[i - 1])) > 1e-9) return ticks[i].gripper.z >= s[i - 1].position.z;
  }
  return false;
}

using Fn = bool (*)(std::span<const TickRecord>, const Params&);

}  // namespace

const std::map<std::string, CheckerFn, std::less<>>& checker_registry() {
  static const auto registry = [] {
    const std::vector<std::pair<std::string, Fn>> fns = {
        {"lift", lift},
        {"proximity", proximity},
        {"proximity_any", proximity_any},
        {"push", push},
        {"displacement", displacement},
        {"edge_proximity", edge_proximity},
        {"contact", contact},
        {"containment", containment},
        {"outside_container", outside_container},
        {"removed_from", removed_from},
        {"rest_on", rest_on},
        {"wipe", wipe},
        {"shake", shake},
        {"stir", stir},
        {"star", star},
        {"circle", circle},
        {"align_axis", align_axis},
        {"rotate", rotate_in_place},
        {"topple", topple},
    };
    std::map<std::string, CheckerFn, std::less<>> m;
    for (const auto& [name, fn] : fns) {
      m.emplace(name, [name = name, fn = fn](std::span<const TickRecord> ticks, const json& params) {
        if (ticks.empty()) return false;
        return fn(ticks, Params{params, name});
      });
    }
    return m;
  }();
  return registry;
}

bool has_checker(std::string_view name) { return checker_registry().count(name) > 0; }

bool run_checker(const TaskScene& task, std::span<const TickRecord> ticks) {
  const auto& reg = checker_registry();
  const auto it = reg.find(task.checker);
  if (it == reg.end()) throw CatalogError("task " + task.id + ": unknown checker '" + task.checker + "'");
  return it->second(ticks, task.checker_params);
}

Checker catalog_checker() {
  return [](const TaskScene& task, std::span<const TickRecord> ticks) { return run_checker(task, ticks); };
}

bool check_success(const TaskCatalog& catalog, std::string_view task_id, std::string_view episode_log) {
  const TaskScene& task = catalog.get(task_id);
  const auto attempts = attempts_from_log(episode_log);
  if (attempts.empty()) throw IoError("episode log has no attempts");
  return run_checker(task, attempts.back());
}

// ---------------------------------------------------------------------------
// Tables

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

template <typename Fn>
std::optional<double> mean_of(const std::vector<BenchRow>& rows, std::string_view variant, Fn fn) {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : rows) {
    if (r.variant != variant) continue;
    sum += fn(r);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

}  // namespace

std::vector<std::string> BenchTable::variants() const {
  std::vector<std::string> out;
  for (const auto& r : rows) {
    if (std::find(out.begin(), out.end(), r.variant) == out.end()) out.push_back(r.variant);
  }
  return out;
}

std::vector<std::string> BenchTable::tasks() const {
  std::vector<std::string> out;
  for (const auto& r : rows) {
    if (std::find(out.begin(), out.end(), r.task) == out.end()) out.push_back(r.task);
  }
  return out;
}

std::optional<double> BenchTable::mean_rate(std::string_view variant) const {
  return mean_of(rows, variant, [](const BenchRow& r) { return r.rate; });
}

std::optional<double> BenchTable::mean_executable(std::string_view variant) const {
  return mean_of(rows, variant, [](const BenchRow& r) { return r.executable_pct; });
}

const BenchRow* BenchTable::find(std::string_view task, std::string_view variant) const {
  for (const auto& r : rows) {
    if (r.task == task && r.variant == variant) return &r;
  }
  return nullptr;
}

std::string BenchTable::to_csv() const {
  std::ostringstream out;
  out << "task,variant,trials,successes,rate,executable_pct\n";
  for (const auto& r : rows) {
    out << r.task << ',' << r.variant << ',' << r.trials << ',' << r.successes << ',' << fmt("%.4f", r.rate) << ','
        << fmt("%.1f", r.executable_pct) << '\n';
  }
  for (const auto& v : variants()) {
    int trials = 0, successes = 0;
    for (const auto& r : rows) {
      if (r.variant != v) continue;
      trials += r.trials;
      successes += r.successes;
    }
    out << "mean," << v << ',' << trials << ',' << successes << ',' << fmt("%.4f", *mean_rate(v)) << ','
        << fmt("%.1f", *mean_executable(v)) << '\n';
  }
  return out.str();
}

BenchTable BenchTable::from_csv(std::string_view text) {
  BenchTable t;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || split(line, ',') != std::vector<std::string>{"task", "variant", "trials", "successes",
                                                                              "rate", "executable_pct"}) {
    throw IoError("results table: unexpected header");
  }
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split(line, ',');
    if (f.size() != 6) throw IoError("results table: malformed row: " + line);
    if (f[0] == "mean") continue;
    try {
      t.rows.push_back({f[0], f[1], std::stoi(f[2]), std::stoi(f[3]), std::stod(f[4]), std::stod(f[5])});
    } catch (const std::exception&) {
      throw IoError("results table: malformed row: " + line);
    }
  }
  return t;
}

std::string BenchTable::report() const {
  const auto vs = variants();
  const auto ts = tasks();
  std::size_t first = std::string_view("executable %").size();
  for (const auto& t : ts) first = std::max(first, t.size());
  std::vector<std::size_t> widths;
  for (const auto& v : vs) widths.push_back(std::max<std::size_t>(v.size(), 6));

  std::ostringstream out;
  const auto cell = [&](std::size_t w, const std::string& s) { out << "  " << std::setw(static_cast<int>(w)) << s; };
  out << std::left << std::setw(static_cast<int>(first)) << "task" << std::right;
  for (std::size_t i = 0; i < vs.size(); ++i) cell(widths[i], vs[i]);
  out << '\n';
  for (const auto& t : ts) {
    out << std::left << std::setw(static_cast<int>(first)) << t << std::right;
    for (std::size_t i = 0; i < vs.size(); ++i) {
      const BenchRow* r = find(t, vs[i]);
      cell(widths[i], r ? fmt("%.2f", r->rate) : "-");
    }
    out << '\n';
  }
  out << std::left << std::setw(static_cast<int>(first)) << "mean" << std::right;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    const auto m = mean_rate(vs[i]);
    cell(widths[i], m ? fmt("%.2f", *m) : "n/a");
  }
  out << '\n' << std::left << std::setw(static_cast<int>(first)) << "executable %" << std::right;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    const auto m = mean_executable(vs[i]);
    cell(widths[i], m ? fmt("%.1f", *m) : "n/a");
  }
  out << '\n';
  if (vs.empty()) out << "mean: n/a (no tasks)\n";
  out << "\nReference: " << fmt("%.1f", 100.0 * kReferenceFullPromptMean)
      << "% mean success for the full prompt with GPT-4 on a real robot; not reproducible with "
         "this simulator.\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Runs

BenchTable run_benchmark(const TaskCatalog& catalog, const std::vector<std::string>& task_ids,
                         const Variant& variant, TrialsContext& context, int trials, std::uint64_t base_seed,
                         std::vector<TrialsResult>* details) {
  if (trials < 1) throw ConfigError("trials must be at least 1");
  BenchTable table;
  TrialsContext ctx = context;
  if (variant.backends) ctx.backends = variant.backends;
  if (!ctx.checker) ctx.checker = catalog_checker();
  for (const auto& id : task_ids) {
    const TaskScene& task = catalog.get(id);
    TrialsResult r = run_trials(task, trials, base_seed, variant.options, ctx);
    table.rows.push_back({id, variant.name, trials, r.successes, r.rate, r.executable_pct});
    if (details) details->push_back(std::move(r));
  }
  return table;
}

std::optional<PromptFlag> ablated_flag(const PromptConfig& base, const PromptConfig& variant) {
  if (base == variant) return std::nullopt;
  for (auto f : kAllPromptFlags) {
    if (base.enabled(f) && base.without(f) == variant) return f;
  }
  throw ConfigError("variant prompt must remove exactly one component from the base prompt");
}

namespace {

std::vector<std::string> differences(const Variant& base, const Variant& v) {
  std::vector<std::string> out;
  const PromptConfig& a = base.options.prompt;
  const PromptConfig& b = v.options.prompt;
  if (a.flags != b.flags) {
    bool one = false;
    for (auto f : kAllPromptFlags) one = one || (a.enabled(f) && a.without(f).flags == b.flags);
    out.push_back(one ? "prompt flag" : "several prompt flags");
  }
  if (a.output_mode != b.output_mode) out.push_back("output mode");
  if (a.gripper_mode != b.gripper_mode) out.push_back("gripper mode");
  if (a.placement != b.placement) out.push_back("prompt placement");
  const EpisodeOptions& x = base.options;
  const EpisodeOptions& y = v.options;
  if (x.max_replans != y.max_replans || x.correction_limit != y.correction_limit || x.noise_sigma != y.noise_sigma ||
      x.pos_step != y.pos_step || x.yaw_step != y.yaw_step) {
    out.push_back("episode options");
  }
  if (v.backends && v.backend_label != base.backend_label) out.push_back("backend");
  return out;
}

}  // namespace

BenchTable run_ablation(const TaskCatalog& catalog, const std::vector<std::string>& task_ids, const Variant& base,
                        const std::vector<Variant>& variants, TrialsContext& context, int trials,
                        std::uint64_t base_seed) {
  std::set<std::string> names{base.name};
  for (const auto& v : variants) {
    if (!names.insert(v.name).second) throw ConfigError("duplicate variant name: " + v.name);
    const auto diff = differences(base, v);
    if (diff.empty()) throw ConfigError("variant " + v.name + " is identical to the base");
    if (diff.size() > 1 || diff.front() == "several prompt flags") {
      std::string what;
      for (const auto& d : diff) what += (what.empty() ? "" : ", ") + d;
      throw ConfigError("variant " + v.name + " must differ from the base in exactly one setting; differs in: " + what);
    }
  }
  BenchTable table = run_benchmark(catalog, task_ids, base, context, trials, base_seed);
  for (const auto& v : variants) {
    BenchTable t = run_benchmark(catalog, task_ids, v, context, trials, base_seed);
    table.rows.insert(table.rows.end(), t.rows.begin(), t.rows.end());
  }
  return table;
}

Variant flag_off_variant(const Variant& base, PromptFlag flag) {
  Variant v = base;
  v.name = "no_" + std::string(flag_name(flag));
  v.options.prompt = base.options.prompt.without(flag);
  v.backends = nullptr;
  v.backend_label = base.backend_label;
  return v;
}

}  // namespace trajgen
