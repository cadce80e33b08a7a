#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "support/agents.hpp"
#include "trajgen/bench.hpp"
#include "trajgen/errors.hpp"

using namespace trajgen;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const PromptLibrary& prompts() {
  static const PromptLibrary l = PromptLibrary::load(fs::path(TRAJGEN_SOURCE_DIR) / "prompts");
  return l;
}

const TaskCatalog& catalog() {
  static const TaskCatalog c = TaskCatalog::load(fs::path(TRAJGEN_SOURCE_DIR) / "tasks");
  return c;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path calibration(const std::string& id, bool pass) {
  return fs::path(TRAJGEN_SOURCE_DIR) / "tasks" / "calibration" / (id + (pass ? ".pass.jsonl" : ".fail.jsonl"));
}

// 0.1 m cube resting on the table at (x, y), bottom at z.
BBox3D cube(double x, double y, double z = 0.0) { return {{x, y, z + 0.05}, 0.0, {0.1, 0.1, 0.1}}; }

TickRecord tick(std::uint64_t i, std::map<std::string, BBox3D> objects, bool open = true, Pose g = kHomePose) {
  return {i, g, open, std::move(objects)};
}

bool check(const std::string& checker, const std::vector<TickRecord>& ticks, const json& params) {
  return checker_registry().at(checker)(ticks, params);
}

std::vector<TickRecord> shifted(std::vector<TickRecord> ticks, double dx, double dy) {
  for (auto& t : ticks) {
    t.gripper.x += dx;
    t.gripper.y += dy;
    for (auto& [name, b] : t.objects) {
      b.position.x += dx;
      b.position.y += dy;
    }
  }
  return ticks;
}

std::vector<TickRecord> circle_ticks(Vec2 c, double r, double z = 0.005) {
  std::vector<TickRecord> out;
  for (int i = 0; i <= 100; ++i) {
    const double a = 2 * kPi * i / 100;
    out.push_back(tick(i, {{"pen", cube(0, 0.5)}}, false, {c.x + r * std::cos(a), c.y + r * std::sin(a), z, 0.0}));
  }
  return out;
}

ScriptedBackend::Responder fixed_reply() {
  return [](const ChatHistory& h) -> std::string {
    if (h.back().content.find(kVerdictTrue) != std::string::npos) return std::string(render_verdict(true));
    if (h.size() == 1) return "no summary";
    return serialize_trajectory(agents::Moves().to(0.0, 0.3, 0.3).trajectory());
  };
}

}  // namespace

TEST(Catalog, LoadsThirtyTasksWithKnownCheckers) {
  EXPECT_EQ(catalog().size(), 30u);
  for (const auto& id : catalog().ids()) {
    const auto& t = catalog().get(id);
    EXPECT_EQ(t.id, id);
    EXPECT_TRUE(has_checker(t.checker)) << id;
    EXPECT_FALSE(t.instruction.empty()) << id;
  }
  EXPECT_THROW(catalog().get("juggle"), UnknownTask);
  EXPECT_FALSE(catalog().contains("juggle"));
  for (const auto& id : ablation_task_ids()) EXPECT_TRUE(catalog().contains(id)) << id;
}

TEST(Catalog, SceneJsonRoundTrip) {
  for (const auto& id : catalog().ids()) {
    const json j = scene_to_json(catalog().get(id));
    EXPECT_EQ(scene_to_json(scene_from_json(j)), j) << id;
  }
  json broken = scene_to_json(catalog().get("pick_up_bowl"));
  broken.erase("instruction");
  EXPECT_THROW(scene_from_json(broken), CatalogError);
  json unknown = scene_to_json(catalog().get("pick_up_bowl"));
  unknown["checker"] = "vibes";
  TaskCatalog c;
  EXPECT_THROW(c.add(scene_from_json(unknown)), CatalogError);
  EXPECT_THROW(TaskCatalog::load(fs::path(TRAJGEN_SOURCE_DIR) / "absent"), CatalogError);
}

TEST(Calibration, LogsAreFullySeparated) {
  int pairs = 0;
  for (const auto& id : catalog().ids()) {
    EXPECT_TRUE(check_success(catalog(), id, read_file(calibration(id, true)))) << id;
    EXPECT_FALSE(check_success(catalog(), id, read_file(calibration(id, false)))) << id;
    ++pairs;
  }
  EXPECT_EQ(pairs, 30);
  EXPECT_THROW(check_success(catalog(), "juggle", read_file(calibration("pick_up_bowl", true))), UnknownTask);
  EXPECT_THROW(check_success(catalog(), "pick_up_bowl", ""), IoError);
}

TEST(Calibration, LogsRegenerateFromPlans) {
  for (const auto& id : catalog().ids()) {
    for (bool pass : {true, false}) {
      agents::AgentScript script{{agents::calibration_plan(id, pass ? agents::Outcome::Pass : agents::Outcome::Fail)}};
      script.verdicts = {pass};
      ScriptedBackend llm(agents::make_agent(script));
      EpisodeContext ctx{prompts(), llm, nullptr, catalog_checker()};
      const auto r = run_episode(catalog().get(id), 0, agents::numeric_options(), ctx);
      EXPECT_EQ(episode_log_text(r), read_file(calibration(id, pass))) << id << (pass ? " pass" : " fail");
    }
  }
}

TEST(Calibration, PassPlansHoldAcrossSeeds) {
  // Plans read detections, so other layouts of the same task should separate too.
  for (const auto& id : catalog().ids()) {
    for (std::uint64_t seed : {1u, 2u}) {
      for (bool pass : {true, false}) {
        agents::AgentScript script{{agents::calibration_plan(id, pass ? agents::Outcome::Pass : agents::Outcome::Fail)}};
        ScriptedBackend llm(agents::make_agent(script));
        EpisodeContext ctx{prompts(), llm, nullptr, catalog_checker()};
        const auto r = run_episode(catalog().get(id), seed, agents::numeric_options(), ctx);
        EXPECT_EQ(r.checker_verdict(), pass) << id << " seed " << seed;
      }
    }
  }
}

TEST(Checkers, LiftThreshold) {
  const json p = {{"target", "box"}, {"min_gain", 0.10}};
  const auto run = [&](double gain) {
    return check("lift", {tick(0, {{"box", cube(0, 0.4)}}), tick(1, {{"box", cube(0, 0.4, gain)}}, false)}, p);
  };
  EXPECT_TRUE(run(0.10));
  EXPECT_TRUE(run(0.2));
  EXPECT_FALSE(run(0.0999));
  // Peak height counts even when the object is put back.
  EXPECT_TRUE(check("lift",
                    {tick(0, {{"box", cube(0, 0.4)}}), tick(1, {{"box", cube(0, 0.4, 0.12)}}),
                     tick(2, {{"box", cube(0, 0.4)}})},
                    p));
}

TEST(Checkers, ProximityThreshold) {
  const json p = {{"target", "a"}, {"reference", "b"}, {"max_gap", 0.05}};
  const auto at = [&](double dx, bool open = true) {
    return check("proximity", {tick(0, {{"a", cube(dx, 0.4)}, {"b", cube(0, 0.4)}}, open)}, p);
  };
  EXPECT_TRUE(at(0.15));
  EXPECT_FALSE(at(0.1501));
  EXPECT_TRUE(at(0.12));
  EXPECT_FALSE(at(0.12, false));  // still held
  EXPECT_DOUBLE_EQ(edge_gap(cube(0.15, 0.4), cube(0, 0.4)), 0.05);
  EXPECT_DOUBLE_EQ(edge_gap(cube(0.05, 0.4), cube(0, 0.4)), 0.0);
  // Corner to corner.
  EXPECT_NEAR(edge_gap(cube(0.13, 0.53), cube(0, 0.4)), std::hypot(0.03, 0.03), 1e-12);
}

TEST(Checkers, PushAndLeftThresholds) {
  const json push = {{"target", "can"}, {"direction", {1.0, 0.0}}, {"min_distance", 0.10}};
  const auto moved = [&](double dx, double dy, double lift = 0.0) {
    return check("push", {tick(0, {{"can", cube(0, 0.4)}}), tick(1, {{"can", cube(dx, 0.4 + dy, lift)}})}, push);
  };
  EXPECT_TRUE(moved(0.10, 0.0));
  EXPECT_FALSE(moved(0.0999, 0.0));
  EXPECT_FALSE(moved(0.0, 0.2));
  EXPECT_FALSE(moved(-0.2, 0.0));
  EXPECT_FALSE(moved(0.2, 0.0, 0.1));  // carried, not pushed

  const json left = {{"target", "pan"}, {"direction", {-1.0, 0.0}}, {"min_distance", 0.10}};
  const auto shifted_by = [&](double dx) {
    return check("displacement", {tick(0, {{"pan", cube(0, 0.4)}}), tick(1, {{"pan", cube(dx, 0.4)}})}, left);
  };
  EXPECT_TRUE(shifted_by(-0.10));
  EXPECT_FALSE(shifted_by(-0.0999));
  EXPECT_FALSE(shifted_by(0.2));
}

TEST(Checkers, CircleThreshold) {
  const json& p = catalog().get("draw_circle").checker_params;
  EXPECT_TRUE(check("circle", circle_ticks({0.0, 0.3}, 0.05), p));
  EXPECT_TRUE(check("circle", circle_ticks({0.0, 0.3}, 0.064), p));
  EXPECT_FALSE(check("circle", circle_ticks({0.0, 0.3}, 0.066), p));
  EXPECT_FALSE(check("circle", circle_ticks({0.0, 0.3}, 0.05, 0.02), p));  // pen in the air
  EXPECT_FALSE(check("circle", circle_ticks({0.1, 0.3}, 0.05), p));
  auto half = circle_ticks({0.0, 0.3}, 0.05);
  half.resize(51);
  EXPECT_FALSE(check("circle", half, p));
}

TEST(Checkers, TranslationInvariance) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> d(-0.05, 0.05);
  for (const char* id : {"move_banana_near_pear", "move_right_fruit_to_bottle", "pick_rightmost_can", "pick_up_bowl",
                         "push_can_right", "move_pan_left"}) {
    const TaskScene& task = catalog().get(id);
    for (bool pass : {true, false}) {
      const auto ticks = attempts_from_log(read_file(calibration(id, pass))).back();
      for (int i = 0; i < 5; ++i) {
        EXPECT_EQ(run_checker(task, shifted(ticks, d(rng), d(rng))), pass) << id;
      }
    }
  }
  // The circle is anchored to the workspace.
  const auto circle = attempts_from_log(read_file(calibration("draw_circle", true))).back();
  EXPECT_TRUE(run_checker(catalog().get("draw_circle"), circle));
  EXPECT_FALSE(run_checker(catalog().get("draw_circle"), shifted(circle, 0.05, 0.0)));
}

TEST(Checkers, PureAndDeterministic) {
  for (const auto& id : catalog().ids()) {
    const auto ticks = attempts_from_log(read_file(calibration(id, true))).back();
    const auto copy = ticks;
    const bool a = run_checker(catalog().get(id), ticks);
    EXPECT_EQ(run_checker(catalog().get(id), ticks), a) << id;
    EXPECT_EQ(ticks, copy) << id;
  }
  TaskScene t = catalog().get("pick_up_bowl");
  t.checker_params.erase("target");
  EXPECT_THROW(run_checker(t, attempts_from_log(read_file(calibration("pick_up_bowl", true))).back()), CatalogError);
}

TEST(Checkers, Helpers) {
  std::vector<double> zig{0, 0.05, 0.0, 0.05, 0.0, 0.01};
  EXPECT_EQ(count_reversals(zig, 0.03), 3);  // the first rise only sets the direction
  EXPECT_EQ(count_reversals(zig, 0.06), 0);
  EXPECT_DOUBLE_EQ(path_length(std::vector<Vec2>{{0, 0}, {0.3, 0.4}, {0.3, 0.0}}), 0.9);
  EXPECT_EQ(count_direction_changes(std::vector<Vec2>{{0, 0}, {0.1, 0}, {0, 0}, {0.1, 0}}), 2);
  std::vector<BBox3D> spin;
  for (int i = 0; i <= 12; ++i) spin.push_back({{0, 0.4, 0.05}, wrap_angle(0.25 * i), {0.05, 0.1, 0.1}});
  EXPECT_NEAR(accumulated_rotation(spin), 3.0, 1e-9);
}

TEST(Tables, CsvRoundTripAndMeans) {
  BenchTable t;
  t.rows = {{"pick_up_bowl", "full", 5, 3, 0.6, 100.0},
            {"stir_mug", "full", 5, 1, 0.2, 80.0},
            {"pick_up_bowl", "no_step_by_step_plan", 5, 0, 0.0, 60.0}};
  EXPECT_EQ(t.variants(), (std::vector<std::string>{"full", "no_step_by_step_plan"}));
  EXPECT_DOUBLE_EQ(*t.mean_rate("full"), 0.4);
  EXPECT_DOUBLE_EQ(*t.mean_executable("full"), 90.0);
  EXPECT_FALSE(t.mean_rate("absent"));
  const std::string csv = t.to_csv();
  EXPECT_NE(csv.find("mean,full,10,4,0.4000,90.0"), std::string::npos);
  const BenchTable back = BenchTable::from_csv(csv);
  ASSERT_EQ(back.rows.size(), 3u);
  EXPECT_EQ(back.to_csv(), csv);
  EXPECT_EQ(back.find("stir_mug", "full")->successes, 1);
  EXPECT_EQ(back.find("stir_mug", "no_step_by_step_plan"), nullptr);
  EXPECT_THROW(BenchTable::from_csv("a,b\n"), IoError);
  EXPECT_THROW(BenchTable::from_csv("task,variant,trials,successes,rate,executable_pct\nx,y,z,1,0,0\n"), IoError);

  const std::string r = t.report();
  EXPECT_NE(r.find("no_step_by_step_plan"), std::string::npos);
  EXPECT_NE(r.find("57.3%"), std::string::npos);
  const std::string empty = BenchTable{}.report();
  EXPECT_NE(empty.find("n/a"), std::string::npos);
}

TEST(Ablation, FlagOfVariant) {
  const PromptConfig base;
  for (auto f : kAllPromptFlags) EXPECT_EQ(ablated_flag(base, base.without(f)), f);
  EXPECT_FALSE(ablated_flag(base, base));
  PromptConfig two = base.without(PromptFlag::StepByStepPlan).without(PromptFlag::ReusableFunctions);
  EXPECT_THROW(ablated_flag(base, two), ConfigError);
  PromptConfig mode = base.without(PromptFlag::StepByStepPlan);
  mode.output_mode = OutputMode::Numeric;
  EXPECT_THROW(ablated_flag(base, mode), ConfigError);

  const Variant full{"full", agents::numeric_options(), nullptr, "scripted"};
  const Variant v = flag_off_variant(full, PromptFlag::CollisionAvoidance);
  EXPECT_EQ(v.name, "no_collision_avoidance");
  EXPECT_FALSE(v.options.prompt.enabled(PromptFlag::ClearObjectsPhrase));
  EXPECT_EQ(ablated_flag(full.options.prompt, v.options.prompt), PromptFlag::CollisionAvoidance);
}

TEST(Ablation, OneColumnPerVariantAndPromptsDiffer) {
  auto openings = std::make_shared<std::vector<std::string>>();
  TrialsContext ctx{prompts(),
                    [openings](std::uint64_t) {
                      auto inner = fixed_reply();
                      return std::make_unique<ScriptedBackend>([openings, inner](const ChatHistory& h) {
                        if (h.back().content.find("Task instruction:") != std::string::npos) {
                          openings->push_back(h.back().content);
                        }
                        return inner(h);
                      });
                    },
                    std::nullopt, catalog_checker()};
  const Variant full{"full", agents::numeric_options(), nullptr, "scripted"};
  std::vector<Variant> variants;
  for (auto f : kAllPromptFlags) variants.push_back(flag_off_variant(full, f));
  const BenchTable t = run_ablation(catalog(), {"pick_up_bowl", "stir_mug"}, full, variants, ctx, 2, 0);
  EXPECT_EQ(t.variants().size(), 10u);
  EXPECT_EQ(t.rows.size(), 20u);
  EXPECT_EQ(t.tasks(), (std::vector<std::string>{"pick_up_bowl", "stir_mug"}));
  for (const auto& r : t.rows) EXPECT_EQ(r.trials, 2);

  // Runs go base first, then each variant, two tasks x two trials each.
  ASSERT_EQ(openings->size(), 40u);
  EXPECT_NE((*openings)[0].find(section_begin("step_by_step_plan")), std::string::npos);
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const std::string& p = (*openings)[4 * (i + 1)];
    const std::string name(flag_name(kAllPromptFlags[i]));
    EXPECT_EQ(p.find(section_begin(name)), std::string::npos) << name;
    EXPECT_EQ(p, remove_section((*openings)[0], name)) << name;
  }
}

TEST(Ablation, RejectsConfoundedVariants) {
  TrialsContext ctx{prompts(), [](std::uint64_t) { return std::make_unique<ScriptedBackend>(fixed_reply()); },
                    std::nullopt, catalog_checker()};
  const Variant full{"full", agents::numeric_options(), nullptr, "scripted"};
  const auto reject = [&](const Variant& v) {
    EXPECT_THROW(run_ablation(catalog(), {"pick_up_bowl"}, full, {v}, ctx, 1), ConfigError) << v.name;
  };
  Variant same = full;
  same.name = "same";
  reject(same);
  Variant two = flag_off_variant(full, PromptFlag::StepByStepPlan);
  two.options.prompt = two.options.prompt.without(PromptFlag::ReusableFunctions);
  reject(two);
  Variant both = flag_off_variant(full, PromptFlag::StepByStepPlan);
  both.options.max_replans = 5;
  reject(both);
  const Variant once = flag_off_variant(full, PromptFlag::StepByStepPlan);
  EXPECT_THROW(run_ablation(catalog(), {"pick_up_bowl"}, full, {once, once}, ctx, 1), ConfigError);

  // Swapping only the model is a valid arm.
  Variant model = full;
  model.name = "other_model";
  model.backend_label = "other";
  model.backends = [](std::uint64_t) { return std::make_unique<ScriptedBackend>(fixed_reply(), "other"); };
  EXPECT_EQ(run_ablation(catalog(), {"pick_up_bowl"}, full, {model}, ctx, 1).rows.size(), 2u);
  model.options.prompt = model.options.prompt.without(PromptFlag::StepByStepPlan);
  reject(model);
}
