#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "trajgen/geometry.hpp"
#include "trajgen/simulator.hpp"

namespace trajgen {

enum class ApiMethod { DetectObject, ExecuteTrajectory, OpenGripper, CloseGripper, TaskCompleted };

std::string_view api_method_name(ApiMethod method);
std::optional<ApiMethod> api_method_from_name(std::string_view name);

struct ApiRequest {
  std::int64_t id = 0;
  ApiMethod method = ApiMethod::TaskCompleted;
  nlohmann::json params = nlohmann::json::object();

  nlohmann::json to_json() const;
  friend bool operator==(const ApiRequest&, const ApiRequest&) = default;
};

struct ApiResponse {
  std::int64_t id = 0;
  nlohmann::json result;  // set unless error is
  std::optional<std::string> error;

  bool ok() const { return !error.has_value(); }
  /// {"id":N,"result":{...}} or {"id":N,"error":{"message":"..."}}
  nlohmann::json to_json() const;
};

enum class RunOutcome { Completed, Exception, Timeout, ProtocolError };

std::string_view run_outcome_name(RunOutcome outcome);

struct RunResult {
  RunOutcome outcome = RunOutcome::Completed;
  std::string traceback;  // Exception
  std::string detail;     // ProtocolError / Timeout
  std::vector<ApiRequest> api_calls;
  std::string stderr_text;
  bool isolated = false;
};

struct RunLimits {
  double wall_clock_seconds = 120.0;
  std::size_t output_cap = std::size_t{1} << 20;
};

enum class Isolation {
  Off,         // temp-dir working directory only
  BestEffort,  // namespaces when the kernel allows them
  Required,    // SpawnError when namespaces are unavailable
};

struct RunnerConfig {
  /// Executable followed by its arguments, e.g. {"/usr/bin/python3", "runner.py"}.
  std::vector<std::string> command;
  /// Extra host paths made visible (read-only, same path) inside the jail.
  /// The executable's directory and each existing argument path are added.
  std::vector<std::filesystem::path> expose;
  Isolation isolation = Isolation::BestEffort;
};

/// Splits a --runner value on whitespace into a command.
RunnerConfig runner_from_flag(std::string_view flag, Isolation isolation = Isolation::BestEffort);

/// Answers one request; a trajgen::Error (or std::exception) thrown here is
/// sent back as an error reply carrying its message.
using ApiHandler = std::function<nlohmann::json(const ApiRequest&)>;

/// Spawns runner processes for generated programs and serves their robot-API
/// requests one at a time over newline-delimited JSON on stdin/stdout.
class SandboxGateway {
 public:
  explicit SandboxGateway(RunnerConfig config);

  /// Throws SpawnError when the runner cannot be started.
  RunResult run(const std::string& code, const ApiHandler& handler, const RunLimits& limits = {});

  std::size_t spawns() const { return spawns_; }
  const RunnerConfig& config() const { return config_; }

 private:
  RunnerConfig config_;
  std::size_t spawns_ = 0;
};

/// One-shot convenience over SandboxGateway.
RunResult run_program(const std::string& code, const ApiHandler& handler, const RunLimits& limits,
                      const RunnerConfig& runner);

/// Robot-side state of one attempt: the simulator, the per-tick history, and
/// which objects have been detected (the ones whose tracks are reported).
class RobotSession {
 public:
  RobotSession(SimState initial, double noise_sigma = 0.0, std::uint64_t noise_seed = 0,
               double pos_step = kDefaultPosStep, double yaw_step = kDefaultYawStep);

  const SimState& state() const { return state_; }
  const std::vector<TickRecord>& history() const { return history_; }
  const std::set<std::string>& detected() const { return detected_; }
  bool task_completed() const { return task_completed_; }

  /// Throws ObjectNotFound.
  Detection detect(std::string_view query);
  /// Densifies and steps through `t`; returns the number of ticks advanced.
  std::uint64_t execute(const Trajectory& t);
  void set_gripper(bool open);
  void mark_task_completed() { task_completed_ = true; }

  ObjectTracks tracks(std::size_t cap = kTrackSampleCap) const;

 private:
  void record();

  SimState state_;
  std::vector<TickRecord> history_;
  std::set<std::string> detected_;
  double noise_sigma_;
  Rng rng_;
  double pos_step_;
  double yaw_step_;
  bool task_completed_ = false;
};

/// Wire form of a detection: {"position":[x,y,z],"orientation":yaw,"dimensions":[w,l,h]}.
nlohmann::json detection_to_json(const BBox3D& box);

/// Poses (and, for 5-value rows, gripper changes) from an execute_trajectory
/// payload, starting from the given gripper state. Throws ProtocolError on
/// malformed rows.
Trajectory trajectory_from_rows(const nlohmann::json& rows, bool gripper_open = true);

/// Serves one request against the session. Failures (unknown object, invalid
/// trajectory) become error replies.
ApiResponse serve_call(const ApiRequest& req, RobotSession& session);

}  // namespace trajgen
