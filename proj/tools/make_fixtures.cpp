// Regenerates the calibration logs under tasks/calibration/ and the recorded
// episodes under tests/fixtures/ from the scripted agents.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "support/agents.hpp"
#include "trajgen/bench.hpp"
#include "trajgen/errors.hpp"

namespace fs = std::filesystem;
using namespace trajgen;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

EpisodeResult run_scripted(const TaskScene& task, std::uint64_t seed, const EpisodeOptions& options,
                           ChatBackend& llm, const PromptLibrary& prompts, SandboxGateway* gateway) {
  EpisodeContext ctx{prompts, llm, gateway, catalog_checker()};
  return run_episode(task, seed, options, ctx);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regenerate calibration logs and recorded fixtures"};
  std::string root = TRAJGEN_SOURCE_DIR;
  std::string runner;
  bool calibration_only = false;
  bool dry_run = false;
  int seeds = 1;
  app.add_option("--root", root, "Repository root");
  app.add_option("--runner", runner, "Runner command for the code-mode fixture");
  app.add_flag("--calibration-only", calibration_only);
  app.add_flag("--dry-run", dry_run, "Report checker verdicts without writing");
  app.add_option("--seeds", seeds, "Seeds to check per calibration plan (logs are written for seed 0)")
      ->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  try {
    const auto prompts = PromptLibrary::load(fs::path(root) / "prompts");
    const auto catalog = TaskCatalog::load(fs::path(root) / "tasks");
    int mismatches = 0;

    for (const auto& id : catalog.ids()) {
      const auto& task = catalog.get(id);
      for (int seed = 0; seed < seeds; ++seed) {
        for (const auto outcome : {agents::Outcome::Pass, agents::Outcome::Fail}) {
          const bool pass = outcome == agents::Outcome::Pass;
          agents::AgentScript script{{agents::calibration_plan(id, outcome)}};
          script.verdicts = {pass};
          ScriptedBackend llm(agents::make_agent(script));
          const auto result = run_scripted(task, static_cast<std::uint64_t>(seed), agents::numeric_options(), llm,
                                           prompts, nullptr);
          const bool verdict = result.checker_verdict();
          if (verdict != pass || !result.executable()) ++mismatches;
          std::cout << id << " seed " << seed << (pass ? " pass" : " fail") << ": checker=" << (verdict ? "true" : "false")
                    << " status=" << attempt_status_name(result.attempts.back().status)
                    << (result.attempts.back().failure.empty() ? "" : " (" + result.attempts.back().failure + ")")
                    << "\n";
          if (!dry_run && seed == 0) {
            write_text(fs::path(root) / "tasks" / "calibration" / (id + (pass ? ".pass.jsonl" : ".fail.jsonl")),
                       episode_log_text(result));
          }
        }
      }
    }
    if (calibration_only) return mismatches == 0 ? 0 : 1;

    for (const auto& spec : agents::golden_fixtures()) {
      std::optional<SandboxGateway> gateway;
      if (spec.code()) {
        if (runner.empty()) {
          std::cerr << "skipping " << spec.name << ": --runner not given\n";
          continue;
        }
        gateway.emplace(runner_from_flag(runner));
      }
      ScriptedBackend agent(agents::make_agent(spec.script));
      RecordingBackend rec(agent, spec.task, std::string(agents::kFixtureCreated));
      const auto result = run_scripted(catalog.get(spec.task), spec.seed, spec.options, rec, prompts,
                                       gateway ? &*gateway : nullptr);
      std::cout << "fixture " << spec.name << ": attempts=" << result.attempts.size()
                << " termination=" << result.termination << " checker=" << result.checker_verdict() << "\n";
      if (!dry_run) {
        const fs::path dir = fs::path(root) / "tests" / "fixtures" / spec.name;
        fs::create_directories(dir);
        rec.transcript().save(dir / "transcript.json");
        write_text(dir / "episode.jsonl", episode_log_text(result));
      }
    }
    return mismatches == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
