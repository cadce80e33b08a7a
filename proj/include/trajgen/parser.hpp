#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "trajgen/chat.hpp"
#include "trajgen/geometry.hpp"
#include "trajgen/simulator.hpp"

namespace trajgen {

enum class OutputMode { Code, Numeric };
enum class GripperMode { Explicit, Binary };

std::string_view output_mode_name(OutputMode mode);
std::string_view gripper_mode_name(GripperMode mode);
/// Throws ConfigError on an unknown name.
OutputMode output_mode_from_name(std::string_view name);
GripperMode gripper_mode_from_name(std::string_view name);

inline constexpr std::string_view kTrajectoryOpenTag = "<trajectory>";
inline constexpr std::string_view kTrajectoryCloseTag = "</trajectory>";
inline constexpr std::string_view kOpenGripperToken = "open_gripper";
inline constexpr std::string_view kCloseGripperToken = "close_gripper";

struct CodeBlocks {
  std::vector<std::string> blocks;
  friend bool operator==(const CodeBlocks&, const CodeBlocks&) = default;
};

struct NumericTrajectory {
  Trajectory trajectory;
  friend bool operator==(const NumericTrajectory&, const NumericTrajectory&) = default;
};

struct Invalid {
  std::string reason;
  /// Follow-up message for the model; empty means correction_message(reason).
  std::string feedback;
  friend bool operator==(const Invalid&, const Invalid&) = default;
};

using ParsedOutput = std::variant<CodeBlocks, NumericTrajectory, Invalid>;

/// Contents of every fenced block tagged `language`, in order, fence lines
/// excluded. Throws UnterminatedFence.
std::vector<std::string> extract_code_blocks(std::string_view text, std::string_view language = "python");

/// Parses the list between the trajectory tags. Explicit mode takes 4-value
/// rows optionally interleaved with open_gripper / close_gripper; binary mode
/// takes 5-value rows whose last value (0 open, 1 closed) becomes a gripper
/// command whenever it changes. Exact consecutive duplicate poses collapse.
/// Throws MissingTags, BadArity, ForbiddenCode, BadNumber, MalformedTrajectory.
Trajectory parse_numeric_trajectory(std::string_view text, GripperMode mode = GripperMode::Explicit);

/// Tagged text that parse_numeric_trajectory reads back to the same trajectory.
/// Binary mode needs a pose before any gripper command (std::invalid_argument).
std::string serialize_trajectory(const Trajectory& t, GripperMode mode = GripperMode::Explicit);

/// Shortest decimal text that reads back to exactly `v`.
std::string format_double(double v);

/// Code mode: CodeBlocks or Invalid; numeric mode: NumericTrajectory or Invalid.
ParsedOutput parse_output(std::string_view text, OutputMode output, GripperMode gripper);

/// User message asking the model to fix output that failed with `reason`.
std::string correction_message(std::string_view reason);

/// Follow-up turns allowed per model output (parse errors, runtime errors and
/// detection replies all draw from it).
struct CorrectionBudget {
  int limit = 3;
  int used = 0;

  bool exhausted() const { return used >= limit; }
  int remaining() const { return limit - used; }
};

using OutputParser = std::function<ParsedOutput(std::string_view)>;

/// Parses the assistant message ending `history`; while the result is Invalid
/// and budget remains, sends the feedback, appends the reply and parses again.
/// Backend errors propagate.
ParsedOutput correction_loop(ChatBackend& llm, const OutputParser& parse, ChatHistory& history,
                             CorrectionBudget& budget, const ChatParams& params = {});

enum class ViolationKind { WorkspaceViolation, StepTooLarge, Empty };

struct TrajectoryViolation {
  ViolationKind kind;
  std::size_t pose_index = 0;
  std::string detail;
};

inline constexpr double kMaxWaypointGap = 0.25;

/// Out-of-workspace poses, waypoint gaps above kMaxWaypointGap, and emptiness.
std::vector<TrajectoryViolation> validate_trajectory(const Trajectory& t, const Workspace& bounds = kWorkspace,
                                                     double max_gap = kMaxWaypointGap);

}  // namespace trajgen
