// trajgen: run episodes, benchmarks and prompt ablations from the command line.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "support/agents.hpp"
#include "trajgen/bench.hpp"
#include "trajgen/errors.hpp"

namespace fs = std::filesystem;
using namespace trajgen;

namespace {

struct Common {
  std::string tasks_dir;
  std::string prompts_dir;
  std::string backend = "live";
  std::string transcript;
  std::string output_mode = "code";
  std::string gripper_mode = "explicit";
  int max_replans = 2;
  double noise_sigma = 0.0;
  std::string runner;
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-4";
  std::uint64_t seed = 0;
  int jobs = 1;
  std::vector<std::string> flags_off;
};

void add_common(CLI::App* cmd, Common& c, bool with_flags_off = true) {
  cmd->add_option("--tasks-dir", c.tasks_dir, "Task catalog directory");
  cmd->add_option("--prompts-dir", c.prompts_dir, "Prompt component directory");
  cmd->add_option("--backend", c.backend, "Chat backend")->check(CLI::IsMember({"live", "replay", "scripted"}));
  cmd->add_option("--transcript", c.transcript, "Transcript to replay (--backend replay)");
  cmd->add_option("--output-mode", c.output_mode)->check(CLI::IsMember({"code", "numeric"}));
  cmd->add_option("--gripper-mode", c.gripper_mode)->check(CLI::IsMember({"explicit", "binary"}));
  cmd->add_option("--max-replans", c.max_replans)->check(CLI::NonNegativeNumber);
  cmd->add_option("--noise-sigma", c.noise_sigma, "Detection noise, metres")->check(CLI::NonNegativeNumber);
  cmd->add_option("--runner", c.runner, "Runner command for code mode, e.g. \"python3 runner.py\"");
  cmd->add_option("--llm-base-url", c.base_url);
  cmd->add_option("--llm-model", c.model);
  cmd->add_option("--seed", c.seed, "First seed");
  cmd->add_option("--jobs", c.jobs, "Parallel trials")->check(CLI::PositiveNumber);
  if (with_flags_off) cmd->add_option("--flag-off", c.flags_off, "Prompt component to drop (repeatable)");
}

TaskCatalog load_catalog(const Common& c) {
  return TaskCatalog::load(c.tasks_dir.empty() ? default_tasks_dir() : fs::path(c.tasks_dir));
}

PromptLibrary load_prompts(const Common& c) {
  return PromptLibrary::load(c.prompts_dir.empty() ? default_prompts_dir() : fs::path(c.prompts_dir));
}

EpisodeOptions episode_options(const Common& c) {
  EpisodeOptions o;
  o.prompt.output_mode = output_mode_from_name(c.output_mode);
  o.prompt.gripper_mode = gripper_mode_from_name(c.gripper_mode);
  for (const auto& name : c.flags_off) o.prompt = o.prompt.without(flag_from_name(name));
  o.prompt.validate();
  o.max_replans = c.max_replans;
  o.noise_sigma = c.noise_sigma;
  return o;
}

std::optional<RunnerConfig> runner(const Common& c) {
  if (c.runner.empty()) return std::nullopt;
  return runner_from_flag(c.runner);
}

// One backend per trial. The scripted backend answers with the task's
// reference plan in numeric form.
BackendFactory backend_factory(const Common& c, const std::string& task_id) {
  if (c.backend == "replay") {
    if (c.transcript.empty()) throw ConfigError("--backend replay needs --transcript");
    auto t = std::make_shared<Transcript>(Transcript::load(c.transcript));
    return [t](std::uint64_t) { return std::make_unique<ReplayBackend>(*t); };
  }
  if (c.backend == "scripted") {
    return [task_id](std::uint64_t) {
      return agents::agent_backend({{agents::calibration_plan(task_id, agents::Outcome::Pass)}});
    };
  }
  LiveConfig cfg;
  cfg.base_url = c.base_url;
  cfg.model = c.model;
  if (const char* key = std::getenv("LLM_API_KEY")) cfg.api_key = key;
  return [cfg](std::uint64_t) { return std::make_unique<LiveBackend>(cfg); };
}

std::string episode_line(const EpisodeResult& r) {
  std::ostringstream out;
  out << r.task_id << " seed " << r.seed << ": attempts=" << r.attempts.size()
      << " llm=" << (r.task_completed ? "true" : "false") << " checker=" << (r.checker_verdict() ? "true" : "false")
      << " corrections=" << r.total_corrections() << " termination=" << r.termination;
  const auto& last = r.attempts.back();
  if (!last.failure.empty()) out << " (" << last.failure.substr(0, last.failure.find('\n')) << ")";
  return out.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + p.string());
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> split_tasks(const std::vector<std::string>& raw, const TaskCatalog& catalog) {
  std::vector<std::string> out;
  for (const auto& item : raw) {
    std::stringstream s(item);
    for (std::string id; std::getline(s, id, ',');) {
      if (id.empty()) continue;
      catalog.get(id);
      out.push_back(id);
    }
  }
  return out.empty() ? catalog.ids() : out;
}

int cmd_run(const Common& c, const std::string& task_id, int trials, bool record, const std::string& out_dir) {
  const auto catalog = load_catalog(c);
  const auto prompts = load_prompts(c);
  const TaskScene& task = catalog.get(task_id);
  const auto options = episode_options(c);
  const auto factory = backend_factory(c, task_id);
  const auto cfg = runner(c);
  int successes = 0;
  for (int i = 0; i < trials; ++i) {
    const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(i);
    auto inner = factory(seed);
    RecordingBackend rec(*inner, task.id);
    std::optional<SandboxGateway> gw;
    if (cfg) gw.emplace(*cfg);
    EpisodeContext ctx{prompts, rec, gw ? &*gw : nullptr, catalog_checker()};
    const EpisodeResult r = run_episode(task, seed, options, ctx);
    const fs::path log = save_episode_log(r, out_dir);
    if (record) rec.transcript().save(log.parent_path() / "transcript.json");
    successes += r.checker_verdict() ? 1 : 0;
    std::cout << episode_line(r) << "\n  log: " << log.string() << "\n";
  }
  std::cout << task.id << ": " << successes << "/" << trials << " checker successes\n";
  return 0;
}

Variant base_variant(const Common& c) { return {"full", episode_options(c), nullptr, c.backend}; }

TrialsContext trials_context(const Common& c, const PromptLibrary& prompts) {
  return {prompts, nullptr, runner(c), catalog_checker(), c.jobs};
}

// Runs each task with its own backend factory (the scripted backend is per task).
BenchTable bench_tasks(const Common& c, const TaskCatalog& catalog, const PromptLibrary& prompts,
                       const std::vector<std::string>& ids, const Variant& variant, int trials) {
  BenchTable table;
  for (const auto& id : ids) {
    TrialsContext ctx = trials_context(c, prompts);
    ctx.backends = backend_factory(c, id);
    const BenchTable t = run_benchmark(catalog, {id}, variant, ctx, trials, c.seed);
    table.rows.insert(table.rows.end(), t.rows.begin(), t.rows.end());
    std::cerr << id << " [" << variant.name << "]: " << t.rows.front().successes << "/" << trials << "\n";
  }
  return table;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chat-model trajectory planning in a tabletop simulator"};
  app.require_subcommand(1);

  Common run_opts;
  std::string run_task, out_dir = ".";
  int run_trials_n = 1;
  bool record = false;
  auto* run = app.add_subcommand("run", "Run episodes of one task");
  add_common(run, run_opts);
  run->add_option("--task", run_task, "Task id")->required();
  run->add_option("--trials", run_trials_n)->check(CLI::PositiveNumber);
  run->add_flag("--record", record, "Save the chat transcript next to each episode log");
  run->add_option("--out-dir", out_dir, "Root for runs/<task>/<seed>/");

  Common bench_opts;
  std::vector<std::string> bench_tasks_raw;
  int bench_trials = 5;
  std::string bench_out = "results.csv";
  auto* bench = app.add_subcommand("bench", "Success rates over the task catalog");
  add_common(bench, bench_opts);
  bench->add_option("--task", bench_tasks_raw, "Task ids (repeatable or comma-separated; default all)");
  bench->add_option("--trials", bench_trials)->check(CLI::PositiveNumber);
  bench->add_option("--out", bench_out, "Results table");

  Common ablate_opts;
  std::vector<std::string> ablate_tasks_raw;
  int ablate_trials = 5;
  std::string ablate_out = "ablation.csv";
  auto* ablate = app.add_subcommand("ablate", "Base prompt against variants with one component dropped");
  add_common(ablate, ablate_opts, false);
  ablate->add_option("--flag-off", ablate_opts.flags_off, "Component to drop, one variant each (default all)");
  ablate->add_option("--task", ablate_tasks_raw, "Task ids (default: the ablation subset)");
  ablate->add_option("--trials", ablate_trials)->check(CLI::PositiveNumber);
  ablate->add_option("--out", ablate_out, "Results table");

  std::string report_in;
  auto* report = app.add_subcommand("report", "Print a results table");
  report->add_option("input", report_in, "CSV written by bench or ablate")->required();

  Common check_opts;
  std::string check_task, check_log;
  auto* check = app.add_subcommand("check", "Ground-truth verdict for an episode log (exit 0 on success)");
  check->add_option("--tasks-dir", check_opts.tasks_dir);
  check->add_option("--task", check_task)->required();
  check->add_option("log", check_log)->required();

  Common prompt_opts;
  std::string prompt_task;
  auto* prompt = app.add_subcommand("prompt", "Print the opening prompt");
  prompt->add_option("--prompts-dir", prompt_opts.prompts_dir);
  prompt->add_option("--tasks-dir", prompt_opts.tasks_dir);
  prompt->add_option("--output-mode", prompt_opts.output_mode)->check(CLI::IsMember({"code", "numeric"}));
  prompt->add_option("--gripper-mode", prompt_opts.gripper_mode)->check(CLI::IsMember({"explicit", "binary"}));
  prompt->add_option("--flag-off", prompt_opts.flags_off);
  prompt->add_option("--task", prompt_task, "Append this task's instruction");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_opts, run_task, run_trials_n, record, out_dir);

    if (*bench) {
      const auto catalog = load_catalog(bench_opts);
      const auto prompts = load_prompts(bench_opts);
      const auto ids = split_tasks(bench_tasks_raw, catalog);
      const BenchTable t = bench_tasks(bench_opts, catalog, prompts, ids, base_variant(bench_opts), bench_trials);
      write_text(bench_out, t.to_csv());
      std::cout << t.report();
      return 0;
    }

    if (*ablate) {
      const auto catalog = load_catalog(ablate_opts);
      const auto prompts = load_prompts(ablate_opts);
      const auto ids = ablate_tasks_raw.empty() ? ablation_task_ids() : split_tasks(ablate_tasks_raw, catalog);
      Common base_opts = ablate_opts;
      base_opts.flags_off.clear();
      const Variant base = base_variant(base_opts);
      std::vector<Variant> variants;
      if (ablate_opts.flags_off.empty()) {
        for (auto f : kAllPromptFlags) variants.push_back(flag_off_variant(base, f));
      } else {
        for (const auto& name : ablate_opts.flags_off) variants.push_back(flag_off_variant(base, flag_from_name(name)));
      }
      // Validates the single-difference rule before anything runs.
      for (const auto& v : variants) {
        if (!ablated_flag(base.options.prompt, v.options.prompt)) throw ConfigError(v.name + " is identical to the base");
      }
      BenchTable t = bench_tasks(base_opts, catalog, prompts, ids, base, ablate_trials);
      for (const auto& v : variants) {
        const BenchTable vt = bench_tasks(base_opts, catalog, prompts, ids, v, ablate_trials);
        t.rows.insert(t.rows.end(), vt.rows.begin(), vt.rows.end());
      }
      write_text(ablate_out, t.to_csv());
      std::cout << t.report();
      return 0;
    }

    if (*report) {
      std::cout << BenchTable::from_csv(read_text(report_in)).report();
      return 0;
    }

    if (*check) {
      const auto catalog = load_catalog(check_opts);
      const bool ok = check_success(catalog, check_task, read_text(check_log));
      std::cout << (ok ? "success" : "failure") << "\n";
      return ok ? 0 : 1;
    }

    if (*prompt) {
      const auto prompts = load_prompts(prompt_opts);
      PromptConfig cfg = episode_options(prompt_opts).prompt;
      std::string instruction;
      if (!prompt_task.empty()) instruction = load_catalog(prompt_opts).get(prompt_task).instruction;
      const PromptBundle b{build_main_prompt(prompts, cfg), instruction, std::nullopt};
      std::cout << (instruction.empty() ? b.main_prompt : b.render()) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
