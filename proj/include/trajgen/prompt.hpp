#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trajgen/parser.hpp"
#include "trajgen/simulator.hpp"

namespace trajgen {

/// Removable components of the main prompt, in the order they appear.
enum class PromptFlag {
  StepByStepPlan,
  GripperContactStep,
  FunctionDocumentation,
  ReusableFunctions,
  NumberedStepVariables,
  CollisionAvoidance,
  ClearObjectsPhrase,
  TrajectoryShapeDescription,
  ObjectPartDescription,
};

inline constexpr std::array<PromptFlag, 9> kAllPromptFlags{
    PromptFlag::StepByStepPlan,        PromptFlag::GripperContactStep,         PromptFlag::FunctionDocumentation,
    PromptFlag::ReusableFunctions,     PromptFlag::NumberedStepVariables,      PromptFlag::CollisionAvoidance,
    PromptFlag::ClearObjectsPhrase,    PromptFlag::TrajectoryShapeDescription, PromptFlag::ObjectPartDescription,
};

std::string_view flag_name(PromptFlag flag);
/// Throws ConfigError on an unknown name.
PromptFlag flag_from_name(std::string_view name);

/// Where the main prompt goes in the chat: one user message (default) or a
/// system message followed by the instruction as the user message.
enum class PromptPlacement { User, System };

struct PromptConfig {
  std::array<bool, kAllPromptFlags.size()> flags{true, true, true, true, true, true, true, true, true};
  OutputMode output_mode = OutputMode::Code;
  GripperMode gripper_mode = GripperMode::Explicit;
  PromptPlacement placement = PromptPlacement::User;

  bool enabled(PromptFlag f) const { return flags[static_cast<std::size_t>(f)]; }
  void set(PromptFlag f, bool on) { flags[static_cast<std::size_t>(f)] = on; }
  /// Copy with `f` off. Turning collision_avoidance off also drops the
  /// clear-objects phrase nested inside it.
  PromptConfig without(PromptFlag f) const;
  /// Throws ConfigError when clear_objects_phrase is on without collision_avoidance.
  void validate() const;

  /// Names of the flags that are off, in prompt order.
  std::vector<std::string> disabled_names() const;

  friend bool operator==(const PromptConfig&, const PromptConfig&) = default;
};

/// Component texts keyed by file stem, loaded from a prompts directory.
class PromptLibrary {
 public:
  /// Reads every *.txt under `dir`. Throws ConfigError when a required
  /// component is missing.
  static PromptLibrary load(const std::filesystem::path& dir);

  const std::string& text(std::string_view key) const;
  bool has(std::string_view key) const;

 private:
  std::map<std::string, std::string, std::less<>> texts_;
};

/// Directory used when none is given: ./prompts if present, else the copy in
/// the source tree.
std::filesystem::path default_prompts_dir();

/// Delimiters wrapped around every section of the main prompt.
std::string section_begin(std::string_view name);
std::string section_end(std::string_view name);

/// Main prompt for `cfg`: frame, workspace, API, output format and gripper
/// contract, then one delimited section per enabled flag. Never depends on
/// the task. Throws ConfigError for an invalid configuration.
std::string build_main_prompt(const PromptLibrary& lib, const PromptConfig& cfg);

/// `text` with the delimited section `name` and its separator removed;
/// std::nullopt when the section is absent.
std::optional<std::string> remove_section(std::string_view text, std::string_view name);

/// Names of all delimited sections in `text`, in order of appearance.
std::vector<std::string> section_names(std::string_view text);

/// Fixed 4-decimal rendering; negative zero prints as 0.0000.
std::string fixed4(double v);

/// Object blocks in name order, then the gripper block.
std::string render_tracks(const ObjectTracks& tracks);

std::string build_success_prompt(const PromptLibrary& lib, std::string_view instruction, const ObjectTracks& tracks);
std::string build_summary_request(const PromptLibrary& lib, std::string_view instruction, const ObjectTracks& tracks);

inline constexpr std::string_view kVerdictTrue = "TASK COMPLETED: TRUE";
inline constexpr std::string_view kVerdictFalse = "TASK COMPLETED: FALSE";

std::string_view render_verdict(bool completed);

/// Last "TASK COMPLETED: TRUE|FALSE" in `text`, case-insensitive. Throws
/// VerdictUnparseable when there is none.
bool parse_success_verdict(std::string_view text);

/// Follow-up sent once when a verdict cannot be parsed.
std::string verdict_reminder();

inline constexpr std::size_t kSummaryWordCap = 150;
inline constexpr std::string_view kSummaryPlaceholder = "previous attempt failed";

/// First `cap` whitespace-separated words of `text`, single-spaced.
std::string cap_words(std::string_view text, std::size_t cap = kSummaryWordCap);

/// p, l and an optional re-planning summary.
struct PromptBundle {
  std::string main_prompt;
  std::string instruction;
  std::optional<std::string> summary;

  /// p ⊕ l ⊕ summary as one text; the summary section comes last.
  std::string render() const;
  /// "Task instruction: ..." plus the summary section, without p.
  std::string render_instruction() const;
};

/// Whole-word, case-insensitive occurrences of any of `phrases` in `text`.
std::vector<std::string> find_phrases(std::string_view text, const std::vector<std::string>& phrases);

}  // namespace trajgen
