#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trajgen/chat.hpp"
#include "trajgen/gateway.hpp"
#include "trajgen/parser.hpp"
#include "trajgen/prompt.hpp"
#include "trajgen/simulator.hpp"

namespace trajgen {

/// Ground-truth success predicate over one attempt's tick records.
using Checker = std::function<bool(const TaskScene&, std::span<const TickRecord>)>;

struct EpisodeOptions {
  PromptConfig prompt;
  int max_replans = 2;
  int correction_limit = 3;
  ChatParams chat;
  double noise_sigma = 0.0;
  RunLimits limits;
  double pos_step = kDefaultPosStep;
  double yaw_step = kDefaultYawStep;
};

struct EpisodeContext {
  const PromptLibrary& prompts;
  ChatBackend& llm;
  /// Needed in code mode only.
  SandboxGateway* gateway = nullptr;
  Checker checker;
};

enum class AttemptStatus {
  Executed,       // trajectory ran (program completed, or numeric trajectory stepped)
  Invalid,        // no usable output within the correction budget
  BackendFailure  // the chat backend failed
};

std::string_view attempt_status_name(AttemptStatus status);

struct QueryCounts {
  int generation = 0;  // first output plus follow-ups
  int verdict = 0;
  int summary = 0;
};

struct AttemptRecord {
  int index = 1;
  AttemptStatus status = AttemptStatus::Executed;
  std::string failure;
  int corrections = 0;
  QueryCounts queries;
  ChatHistory conversation;  // generation exchange
  std::optional<RunResult> run;
  std::optional<Trajectory> trajectory;  // numeric mode
  std::vector<TickRecord> history;
  ObjectTracks tracks;
  bool llm_verdict = false;
  bool checker_verdict = false;
  std::optional<std::string> summary;
};

struct EpisodeResult {
  std::string task_id;
  std::uint64_t seed = 0;
  std::vector<AttemptRecord> attempts;
  bool task_completed = false;
  int replans_used = 0;
  std::optional<std::string> manual_error_label;
  std::string termination;  // "verdict_true", "replans_exhausted", "invalid_output", "backend_error"
  std::size_t sandbox_spawns = 0;

  /// Every attempt's output parsed and ran within the correction budget.
  bool executable() const;
  int total_corrections() const;
  bool checker_verdict() const { return !attempts.empty() && attempts.back().checker_verdict; }
};

/// The re-planning loop: prompt, generate, correct, execute, judge, and on a
/// negative verdict reset with the same seed and retry with a failure summary.
/// Never throws for model or runner failures; they end up in the result.
EpisodeResult run_episode(const TaskScene& task, std::uint64_t seed, const EpisodeOptions& options,
                          EpisodeContext& context);

struct VerdictOutcome {
  bool completed = false;
  bool parsed = false;
  int queries = 0;
};

/// Asks for a verdict in a fresh conversation; one reminder when the reply
/// cannot be parsed, then FALSE.
VerdictOutcome request_verdict(ChatBackend& llm, const PromptLibrary& prompts, std::string_view instruction,
                               const ObjectTracks& tracks, const ChatParams& params = {});

struct SummaryOutcome {
  std::string summary;
  int queries = 0;
};

/// Asks for a failure summary in a fresh conversation; one retry when the
/// reply is empty, then the placeholder. Capped at kSummaryWordCap words.
SummaryOutcome request_summary(ChatBackend& llm, const PromptLibrary& prompts, std::string_view instruction,
                               const ObjectTracks& tracks, const ChatParams& params = {});

/// Opening messages of an attempt for the configured placement.
ChatHistory opening_messages(const PromptBundle& bundle, PromptPlacement placement);

/// detect_object("...") calls in a numeric-mode reply without trajectory tags.
std::vector<std::string> requested_detections(std::string_view text);

/// Reply to numeric-mode detection requests.
std::string detection_feedback(RobotSession& session, const std::vector<std::string>& queries);

// Episode log: one JSON document per line.

nlohmann::json tick_to_json(const TickRecord& t);
TickRecord tick_from_json(const nlohmann::json& j);

void write_episode_log(const EpisodeResult& result, std::ostream& out);
std::string episode_log_text(const EpisodeResult& result);
/// Writes runs/<task>/<seed>/episode.jsonl under `root`; returns the path.
std::filesystem::path save_episode_log(const EpisodeResult& result, const std::filesystem::path& root);

/// Tick records of each attempt, in order, parsed from log text.
std::vector<std::vector<TickRecord>> attempts_from_log(std::string_view log_text);

struct TrialsResult {
  std::string task_id;
  std::vector<EpisodeResult> episodes;
  int successes = 0;          // checker verdicts
  double rate = 0.0;
  double agreement = 0.0;     // llm verdict == checker verdict, final attempts
  double executable_pct = 0.0;
  double mean_corrections = 0.0;
};

/// Creates the chat backend of one trial.
using BackendFactory = std::function<std::unique_ptr<ChatBackend>(std::uint64_t seed)>;

struct TrialsContext {
  const PromptLibrary& prompts;
  BackendFactory backends;
  std::optional<RunnerConfig> runner;
  Checker checker;
  /// Trials run in parallel on up to this many threads; results stay in seed order.
  int jobs = 1;
};

/// Episodes for seeds base..base+n-1; success is the checker verdict.
TrialsResult run_trials(const TaskScene& task, int n, std::uint64_t base_seed, const EpisodeOptions& options,
                        TrialsContext& context);

}  // namespace trajgen
