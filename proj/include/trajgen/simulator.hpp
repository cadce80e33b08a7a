#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "trajgen/geometry.hpp"

namespace trajgen {

/// Reachable gripper region in the robot-base frame (meters).
struct Workspace {
  double x_min = -0.4, x_max = 0.4;
  double y_min = 0.1, y_max = 0.7;
  double z_min = 0.0, z_max = 0.5;

  bool contains(const Pose& p, double tol = 1e-12) const;
  Pose clamp(const Pose& p) const;
};

inline constexpr Workspace kWorkspace{};
inline constexpr Pose kHomePose{0.0, 0.3, 0.4, 0.0};

// Parallel-jaw gripper model (Robotiq 2F-85 stroke) and grasp tolerances.
namespace gripper {
inline constexpr double kStroke = 0.085;
inline constexpr double kFingerThickness = 0.01;  // along the closing axis
inline constexpr double kFingerDepth = 0.02;      // across the closing axis
inline constexpr double kFingerHeight = 0.05;     // above the fingertip point
inline constexpr double kGraspToleranceXY = 0.02;
inline constexpr double kGraspToleranceZ = 0.04;
}  // namespace gripper

/// Interpenetration below this depth is treated as touching.
inline constexpr double kContactTolerance = 0.001;

/// Deterministic, platform-independent generator (splitmix64).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller.
  double normal();

 private:
  std::uint64_t state_;
};

std::uint64_t fnv1a(std::string_view text);

enum class Shape { Box, Cylinder };

/// Named sub-box in the object frame (e.g. a rim wall or a handle).
struct ObjectPart {
  std::string name;
  Vec3 offset{};
  double yaw = 0.0;
  Vec3 size{};  // (w, l, h)
};

struct SceneObject {
  std::string name;
  Shape shape = Shape::Box;
  Vec3 size{};  // (w, l, h); cylinders store (2r, 2r, h)
  Pose pose{};  // pose.z is the center height
  bool graspable = true;
  bool movable = true;
  /// Containers collide through their parts (walls) and hold objects on their floor.
  bool container = false;
  double floor_thickness = 0.0;
  std::vector<ObjectPart> parts;

  double height() const { return size.z; }
  double bottom() const { return pose.z - size.z / 2.0; }
  double top() const { return pose.z + size.z / 2.0; }
  /// Height at which something dropped onto this object comes to rest.
  double support_height() const { return container ? bottom() + floor_thickness : top(); }

  BBox3D bbox() const;
  BBox3D part_box(const ObjectPart& part) const;
  Polygon footprint() const;
  /// Extent of the body along a horizontal unit axis.
  double width_along(Vec2 axis) const;
};

/// Placement of an object relative to a previously placed one.
struct RelativePlacement {
  enum class Support { Top, Inside, Table };

  std::string anchor;
  Pose offset{};  // in the anchor frame; offset.z is added above the support
  Support support = Support::Top;
};

struct ObjectTemplate {
  SceneObject object;
  std::optional<RelativePlacement> relative_to;
};

struct PlacementRange {
  std::array<double, 2> x{0.0, 0.0};
  std::array<double, 2> y{0.0, 0.0};
  std::array<double, 2> yaw{0.0, 0.0};
};

/// One benchmark task: instruction, objects, randomization, success checker.
struct TaskScene {
  std::string id;
  std::string instruction;
  std::vector<ObjectTemplate> objects;
  std::map<std::string, PlacementRange> randomization;
  std::string checker;
  nlohmann::json checker_params = nlohmann::json::object();
  std::string proxy_notes;

  /// Throws CatalogError when an invariant is broken.
  void validate() const;
};

struct Attachment {
  std::string object;
  Pose relative{};  // object pose in the gripper frame
  double grip_width = 0.0;
};

struct CollisionEvent {
  std::uint64_t tick = 0;
  std::string mover;
  std::string other;
  double depth = 0.0;
  bool pushed = false;
};

struct WorkspaceViolation {
  std::uint64_t tick = 0;
  Pose requested{};
  Pose clamped{};
};

struct SimState {
  std::vector<SceneObject> objects;
  Pose gripper = kHomePose;
  bool gripper_open = true;
  std::optional<Attachment> attached;
  std::uint64_t tick = 0;
  std::vector<CollisionEvent> collisions;
  std::vector<WorkspaceViolation> violations;

  const SceneObject* find(std::string_view name) const;
  SceneObject* find(std::string_view name);
};

/// Places the scene's objects by rejection sampling; deterministic in (scene, seed).
/// Throws PlacementInfeasible after 1000 failed placements.
SimState reset(const TaskScene& scene, std::uint64_t seed);

/// Moves the gripper to `target` (clamped to the workspace), carrying any
/// attached object and pushing movable objects in the way. Advances one tick.
SimState step_to(SimState state, const Pose& target);

/// Opens (detach and settle) or closes (attach the nearest graspable object
/// or part within tolerance). Advances one tick.
SimState set_gripper(SimState state, bool open);

struct Detection {
  std::string object;
  std::optional<std::string> part;
  BBox3D box;
};

/// Matches `query` against object names and "object part" phrases by token
/// overlap and returns the matched box, with Gaussian noise of `noise_sigma`
/// on position and dimensions. Throws ObjectNotFound.
Detection detect_object(const SimState& state, std::string_view query, double noise_sigma, Rng& rng);

/// Ground-truth state of one tick, as written to episode logs.
struct TickRecord {
  std::uint64_t tick = 0;
  Pose gripper{};
  bool gripper_open = true;
  std::map<std::string, BBox3D> objects;

  friend bool operator==(const TickRecord&, const TickRecord&) = default;
};

TickRecord snapshot(const SimState& state);

struct GripperSample {
  std::uint64_t tick = 0;
  Pose pose{};
  bool open = true;
};

struct ObjectTracks {
  std::map<std::string, std::vector<std::pair<std::uint64_t, BBox3D>>> objects;
  std::vector<GripperSample> gripper;

  bool empty() const { return objects.empty() && gripper.empty(); }
};

inline constexpr std::size_t kTrackSampleCap = 20;

/// Per-object box series for every detected object, uniformly downsampled to
/// at most `cap` samples with both endpoints kept.
ObjectTracks tracks(std::span<const TickRecord> history, const std::set<std::string>& detected,
                    std::size_t cap = kTrackSampleCap);

/// Indices of a uniform downsample of `n` items to at most `cap`, endpoints kept.
std::vector<std::size_t> downsample_indices(std::size_t n, std::size_t cap);

}  // namespace trajgen
