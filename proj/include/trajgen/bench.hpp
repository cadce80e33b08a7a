#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "trajgen/orchestrator.hpp"
#include "trajgen/simulator.hpp"

namespace trajgen {

// ---------------------------------------------------------------------------
// Catalog

/// Throws CatalogError on missing or malformed fields.
TaskScene scene_from_json(const nlohmann::json& j);
nlohmann::json scene_to_json(const TaskScene& scene);

class TaskCatalog {
 public:
  /// Loads every <id>.json directly under `dir`; each task is validated and
  /// must name a known checker.
  static TaskCatalog load(const std::filesystem::path& dir);
  void add(TaskScene scene);

  /// Throws UnknownTask.
  const TaskScene& get(std::string_view id) const;
  bool contains(std::string_view id) const;
  std::vector<std::string> ids() const;
  std::size_t size() const { return tasks_.size(); }

 private:
  std::map<std::string, TaskScene, std::less<>> tasks_;
};

/// tasks/ next to the working directory if present, else the source tree copy.
std::filesystem::path default_tasks_dir();

/// Instructions used in the prompt and model ablations.
const std::vector<std::string>& ablation_task_ids();

// ---------------------------------------------------------------------------
// Checkers

/// Predicate over the tick records of one attempt; parameters come from the
/// task's checker_params.
using CheckerFn = std::function<bool(std::span<const TickRecord>, const nlohmann::json& params)>;

const std::map<std::string, CheckerFn, std::less<>>& checker_registry();
bool has_checker(std::string_view name);

/// Runs the task's checker. Throws CatalogError for an unknown checker or
/// missing parameters.
bool run_checker(const TaskScene& task, std::span<const TickRecord> ticks);

/// Checker callback for the orchestrator.
Checker catalog_checker();

/// Verdict for the final attempt of an episode log. Throws UnknownTask.
bool check_success(const TaskCatalog& catalog, std::string_view task_id, std::string_view episode_log);

// Geometric helpers shared by the checkers.

/// Distance between two footprints; 0 when they overlap.
double edge_gap(const BBox3D& a, const BBox3D& b);
/// Cumulative yaw change of a box series, unwrapped over the box symmetry.
double accumulated_rotation(std::span<const BBox3D> boxes);
/// Direction reversals of a scalar series that retreat at least `amplitude`
/// from the running extreme.
int count_reversals(std::span<const double> values, double amplitude);
/// Heading changes of more than 90 degrees along an XY path.
int count_direction_changes(std::span<const Vec2> path);
double path_length(std::span<const Vec2> path);

// ---------------------------------------------------------------------------
// Benchmark tables

struct BenchRow {
  std::string task;
  std::string variant;
  int trials = 0;
  int successes = 0;
  double rate = 0.0;
  double executable_pct = 0.0;
};

inline constexpr double kReferenceFullPromptMean = 0.573;

struct BenchTable {
  std::vector<BenchRow> rows;

  /// Variant names in order of first appearance.
  std::vector<std::string> variants() const;
  std::vector<std::string> tasks() const;
  /// Mean of the per-task rates; std::nullopt when the variant has no rows.
  std::optional<double> mean_rate(std::string_view variant) const;
  std::optional<double> mean_executable(std::string_view variant) const;
  const BenchRow* find(std::string_view task, std::string_view variant) const;

  /// Header task,variant,trials,successes,rate,executable_pct, one row per
  /// (task, variant), then one "mean" row per variant.
  std::string to_csv() const;
  /// Reads to_csv() output back; mean rows are skipped.
  static BenchTable from_csv(std::string_view text);
  /// Aligned text: one row per task, one rate column per variant, means, and
  /// the reference footer.
  std::string report() const;
};

/// One arm of an ablation: its prompt/episode options and, for model
/// comparisons, its own backend factory.
struct Variant {
  std::string name;
  EpisodeOptions options;
  BackendFactory backends;  // empty: use the context's
  std::string backend_label;
};

/// Per-task success over `trials` seeds from `base_seed`; success is the
/// checker verdict. Trials of a task run through run_trials.
BenchTable run_benchmark(const TaskCatalog& catalog, const std::vector<std::string>& task_ids,
                         const Variant& variant, TrialsContext& context, int trials, std::uint64_t base_seed = 0,
                         std::vector<TrialsResult>* details = nullptr);

/// The flag whose removal turns `base` into `variant`; std::nullopt when the
/// prompt configurations are equal. Throws ConfigError when they differ in
/// anything else.
std::optional<PromptFlag> ablated_flag(const PromptConfig& base, const PromptConfig& variant);

/// Base plus each variant over the same tasks and seeds. Every variant must
/// remove exactly one prompt flag or swap exactly the backend; anything
/// identical to the base throws ConfigError.
BenchTable run_ablation(const TaskCatalog& catalog, const std::vector<std::string>& task_ids, const Variant& base,
                        const std::vector<Variant>& variants, TrialsContext& context, int trials,
                        std::uint64_t base_seed = 0);

/// Variant named "no_<flag>" with that flag (and its dependents) removed.
Variant flag_off_variant(const Variant& base, PromptFlag flag);

}  // namespace trajgen
