// Acceptance run: one PASS/FAIL line per headline criterion. Exit status is
// the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "support/agents.hpp"
#include "support/oracles.hpp"
#include "trajgen/bench.hpp"
#include "trajgen/geometry.hpp"
#include "trajgen/orchestrator.hpp"

using namespace trajgen;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

const fs::path kRoot = TRAJGEN_SOURCE_DIR;

struct Outcome {
  bool ok = true;
  std::string detail;
  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

const PromptLibrary& prompts() {
  static const PromptLibrary l = PromptLibrary::load(kRoot / "prompts");
  return l;
}

const TaskCatalog& catalog() {
  static const TaskCatalog c = TaskCatalog::load(kRoot / "tasks");
  return c;
}

EpisodeResult run(const std::string& task, std::uint64_t seed, const EpisodeOptions& o, ChatBackend& llm,
                  SandboxGateway* gw = nullptr) {
  EpisodeContext ctx{prompts(), llm, gw, catalog_checker()};
  return run_episode(catalog().get(task), seed, o, ctx);
}

Outcome geometry_oracle() {
  Outcome r;
  const auto start = Clock::now();
  double worst = 0.0;
  for (unsigned s = 0; s < 200; ++s) {
    const auto pts = oracles::random_cloud(s);
    const BBox3D b = fit_bbox3(pts);
    const double err = std::abs(b.dimensions.x * b.dimensions.y - oracles::min_rect_area(pts));
    worst = std::max(worst, err);
    r.require(err <= 1e-6, "cloud " + std::to_string(s) + " area error " + std::to_string(err));
    r.require(oracles::box_contains(b, pts), "cloud " + std::to_string(s) + " not contained");
  }
  const double t = seconds_since(start);
  r.require(t < 5.0, "took " + std::to_string(t) + " s");
  char buf[96];
  std::snprintf(buf, sizeof buf, "200 clouds, worst area error %.2e m^2, %.2f s", worst, t);
  if (r.ok) r.detail = buf;
  return r;
}

Outcome projection_round_trip() {
  Outcome r;
  CameraModel cam;
  cam.extrinsic = RigidTransform::top_down({0.05, 0.4, 1.2});
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> x(-0.4, 0.4), y(0.1, 0.7), z(0.0, 0.5);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 p{x(gen), y(gen), z(gen)};
    const Pixel px = cam.project(p);
    worst = std::max(worst, norm(cam.deproject(px.u, px.v, px.depth) - p));
  }
  r.require(worst < 1e-9, "worst error " + std::to_string(worst));
  if (r.ok) r.detail = "10000 points, worst error below 1e-9 m";
  return r;
}

Outcome densify_contract() {
  Outcome r;
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> x(-0.4, 0.4), y(0.1, 0.7), z(0.0, 0.5), yaw(-kPi, kPi), step(0.002, 0.05);
  for (int i = 0; i < 1000 && r.ok; ++i) {
    const Pose a{x(gen), y(gen), z(gen), yaw(gen)}, b{x(gen), y(gen), z(gen), yaw(gen)};
    const double s = step(gen);
    const auto poses = densify(Trajectory{{a, b}}, s).poses();
    r.require(poses.front() == a && poses.back() == b, "endpoints moved in pair " + std::to_string(i));
    for (std::size_t k = 1; k < poses.size(); ++k) {
      r.require(position_gap(poses[k - 1], poses[k]) <= s + 1e-12, "gap above step in pair " + std::to_string(i));
    }
  }
  if (r.ok) r.detail = "1000 pairs, gaps within step, endpoints exact";
  return r;
}

// Garbage for the first `bad` generation turns, then a fixed trajectory.
ScriptedBackend::Responder flaky(int bad) {
  auto left = std::make_shared<int>(bad);
  return [left](const ChatHistory& h) -> std::string {
    if (h.back().content.find(kVerdictTrue) != std::string::npos) return std::string(render_verdict(true));
    if ((*left)-- > 0) return "I would move the arm.";
    return serialize_trajectory(agents::Moves().to(0.1, 0.35, 0.3).trajectory());
  };
}

Outcome correction_budget() {
  Outcome r;
  for (int bad = 0; bad <= 3; ++bad) {
    ScriptedBackend llm(flaky(bad));
    const auto e = run("pick_rightmost_can", 0, agents::numeric_options(), llm);
    r.require(e.executable() && e.attempts[0].corrections == bad && e.task_completed,
              "failed after " + std::to_string(bad) + " corrections");
  }
  ScriptedBackend llm(flaky(4));
  const auto e = run("pick_rightmost_can", 0, agents::numeric_options(), llm);
  r.require(e.attempts.size() == 1 && e.attempts[0].status == AttemptStatus::Invalid && !e.task_completed,
            "4 bad outputs did not end invalid");
  r.require(e.attempts[0].corrections == 3 && llm.calls() == 4, "expected 3 correction queries");
  if (r.ok) r.detail = "0-3 corrections succeed, 4 bad outputs end invalid after 3 correction queries";
  return r;
}

Outcome golden_replay() {
  Outcome r;
  const auto start = Clock::now();
  int n = 0;
  for (const auto& spec : agents::golden_fixtures()) {
    const fs::path dir = kRoot / "tests" / "fixtures" / spec.name;
    ReplayBackend replay(Transcript::load(dir / "transcript.json"), true);
    std::optional<SandboxGateway> gw;
    if (spec.code()) gw.emplace(RunnerConfig{{FAKE_RUNNER_PATH}, {}, Isolation::BestEffort});
    try {
      const auto e = run(spec.task, spec.seed, spec.options, replay, gw ? &*gw : nullptr);
      r.require(episode_log_text(e) == read_file(dir / "episode.jsonl"), spec.name + ": log bytes differ");
      r.require(e.checker_verdict() && e.task_completed, spec.name + ": verdicts changed");
      if (spec.name == "circle") {
        r.require(run_checker(catalog().get("draw_circle"), e.attempts.back().history), "circle residual check");
      }
      ++n;
    } catch (const std::exception& x) {
      r.require(false, spec.name + ": " + x.what());
    }
  }
  const double t = seconds_since(start);
  r.require(n >= 6, "only " + std::to_string(n) + " fixtures");
  r.require(t < 60.0, "took " + std::to_string(t) + " s");
  if (r.ok) r.detail = std::to_string(n) + " fixtures bit-identical in " + std::to_string(t) + " s";
  return r;
}

Outcome replan_recovery() {
  Outcome r;
  const fs::path dir = kRoot / "tests" / "fixtures" / "bowl_replan";
  ReplayBackend replay(Transcript::load(dir / "transcript.json"), true);
  const auto e = run("pick_up_bowl", 0, agents::numeric_options(2), replay);
  r.require(e.attempts.size() == 3, "expected 3 attempts");
  if (!r.ok) return r;
  const auto& first = e.attempts[0].history;
  const double z0 = first.front().objects.at("bowl").position.z;
  double peak = z0;
  for (const auto& t : first) peak = std::max(peak, t.objects.at("bowl").position.z);
  r.require(peak - z0 < 1e-9, "bowl moved on the centroid grasp");
  r.require(!e.attempts[0].llm_verdict, "attempt 1 verdict was TRUE");
  r.require(e.attempts[2].llm_verdict && e.checker_verdict(), "attempt 3 did not succeed");
  r.require(e.replans_used == 2, "replans_used " + std::to_string(e.replans_used));
  if (r.ok) r.detail = "centroid grasp fails, rim grasp succeeds on attempt 3, replans_used 2";
  return r;
}

Outcome checker_calibration() {
  Outcome r;
  int pairs = 0;
  for (const auto& id : catalog().ids()) {
    const fs::path base = kRoot / "tasks" / "calibration" / id;
    r.require(check_success(catalog(), id, read_file(base.string() + ".pass.jsonl")), id + ": pass log rejected");
    r.require(!check_success(catalog(), id, read_file(base.string() + ".fail.jsonl")), id + ": fail log accepted");
    ++pairs;
  }
  const auto param = [](const char* task, const char* key) {
    return catalog().get(task).checker_params.at(key);
  };
  r.require(param("pick_up_bowl", "min_gain") == 0.10, "lift threshold");
  r.require(param("move_banana_near_pear", "max_gap") == 0.05, "proximity threshold");
  r.require(param("push_can_right", "min_distance") == 0.10, "push threshold");
  r.require(param("move_pan_left", "min_distance") == 0.10, "left threshold");
  r.require(param("draw_circle", "radius") == 0.05, "circle radius");
  r.require(param("draw_circle", "center")[0] == 0.0 && param("draw_circle", "center")[1] == 0.3, "circle center");
  if (r.ok) r.detail = std::to_string(pairs) + " pass/fail pairs separated, thresholds as catalogued";
  return r;
}

Outcome mode_parity() {
  Outcome r;
  SandboxGateway gw(RunnerConfig{{FAKE_RUNNER_PATH}, {}, Isolation::BestEffort});
  agents::AgentScript code_script;
  code_script.programs = {agents::pick_program("rightmost soda can", 0.15)};
  ScriptedBackend code_llm(agents::make_agent(code_script));
  EpisodeOptions code;
  code.max_replans = 0;
  const auto c = run("pick_rightmost_can", 0, code, code_llm, &gw);

  SandboxGateway unused(RunnerConfig{{FAKE_RUNNER_PATH}, {}, Isolation::BestEffort});
  ScriptedBackend num_llm(agents::make_agent({{agents::pick_plan("rightmost soda can", 0.15)}}));
  const auto n = run("pick_rightmost_can", 0, agents::numeric_options(), num_llm, &unused);

  r.require(c.checker_verdict() && n.checker_verdict(), "pick failed in one mode");
  r.require(n.sandbox_spawns == 0 && unused.spawns() == 0, "numeric mode spawned a runner");
  double worst = 0.0;
  const auto& a = c.attempts.back().history.back().objects;
  const auto& b = n.attempts.back().history.back().objects;
  r.require(a.size() == b.size(), "object sets differ");
  for (const auto& [name, box] : a) {
    const BBox3D& o = b.at(name);
    worst = std::max({worst, norm(box.position - o.position), std::abs(box.orientation - o.orientation)});
  }
  r.require(worst <= 1e-9, "final poses differ by " + std::to_string(worst));
  if (r.ok) r.detail = "both modes succeed, final poses equal, numeric mode spawned nothing";
  return r;
}

Outcome ablation_plumbing() {
  Outcome r;
  const PromptConfig base_cfg = agents::numeric_options().prompt;
  const std::string base = build_main_prompt(prompts(), base_cfg);
  for (auto f : kAllPromptFlags) {
    const std::string name(flag_name(f));
    const std::string variant = build_main_prompt(prompts(), base_cfg.without(f));
    const auto span = oracles::removed_span(base, variant);
    r.require(span.has_value(), name + ": not a single contiguous removal");
    if (!span) continue;
    // One delimited section plus the separator in front of it.
    const auto b = base.find(section_begin(name));
    const auto e = base.find(section_end(name));
    r.require(b != std::string::npos && e != std::string::npos, name + ": section missing from base");
    if (b == std::string::npos || e == std::string::npos) continue;
    const std::size_t sep = base.compare(b - 2, 2, "\n\n") == 0 ? 2 : 1;
    r.require(span->size() == e + section_end(name).size() - b + sep, name + ": removed bytes are not its section");
    r.require(remove_section(base, name) == variant, name + ": variant is not base minus the section");
  }

  TrialsContext ctx{prompts(),
                    [](std::uint64_t) {
                      return std::make_unique<ScriptedBackend>([](const ChatHistory& h) -> std::string {
                        if (h.back().content.find(kVerdictTrue) != std::string::npos) return "TASK COMPLETED: TRUE";
                        return serialize_trajectory(agents::Moves().to(0.0, 0.3, 0.3).trajectory());
                      });
                    },
                    std::nullopt, catalog_checker()};
  const Variant full{"full", agents::numeric_options(), nullptr, "scripted"};
  std::vector<Variant> variants;
  for (auto f : kAllPromptFlags) variants.push_back(flag_off_variant(full, f));
  const BenchTable t = run_ablation(catalog(), {"pick_up_bowl"}, full, variants, ctx, 1);
  r.require(t.variants().size() == 10, "expected 10 columns, got " + std::to_string(t.variants().size()));
  const std::string report = t.report();
  for (const auto& v : variants) r.require(report.find(v.name) != std::string::npos, v.name + " missing from report");
  if (r.ok) r.detail = "9 flags each remove one section; table has base plus 9 variant columns";
  return r;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"geometry oracle equivalence", geometry_oracle},
      {"projection round trip", projection_round_trip},
      {"densify contract", densify_contract},
      {"correction budget", correction_budget},
      {"golden replay episodes", golden_replay},
      {"replan recovery", replan_recovery},
      {"checker calibration", checker_calibration},
      {"numeric vs code parity", mode_parity},
      {"ablation plumbing", ablation_plumbing},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += o.ok ? 0 : 1;
    std::cout << (o.ok ? "PASS " : "FAIL ") << "[PRIMARY] " << name << ": " << o.detail << std::endl;
  }
  std::cout << (9 - failures) << "/9 primary criteria pass" << std::endl;
  return failures;
}
