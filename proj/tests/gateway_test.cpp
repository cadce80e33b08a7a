#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "trajgen/errors.hpp"
#include "trajgen/gateway.hpp"

using namespace trajgen;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

RunnerConfig fake_runner(Isolation iso = Isolation::Required) { return {{FAKE_RUNNER_PATH}, {}, iso}; }

json done(const ApiRequest&) { return {{"status", "done"}}; }

SceneObject cylinder(std::string name, Vec2 xy, double d, double h) {
  SceneObject o;
  o.name = std::move(name);
  o.shape = Shape::Cylinder;
  o.size = {d, d, h};
  o.pose = {xy.x, xy.y, h / 2, 0.0};
  return o;
}

SimState scene_state() {
  TaskScene sc;
  sc.id = "gateway_test";
  sc.instruction = "pick up the apple";
  sc.checker = "lift";
  sc.objects.push_back({cylinder("apple", {-0.1, 0.45}, 0.07, 0.07), std::nullopt});
  SceneObject bowl = cylinder("bowl", {0.10, 0.40}, 0.15, 0.06);
  bowl.container = true;
  bowl.floor_thickness = 0.008;
  sc.objects.push_back({bowl, std::nullopt});
  return reset(sc, 0);
}

/// Runner processes still alive (zombies excluded).
int live_runners() {
  int n = 0;
  const std::string exe = fs::path(FAKE_RUNNER_PATH).filename();
  for (const auto& entry : fs::directory_iterator("/proc")) {
    std::ifstream stat(entry.path() / "stat");
    std::string pid, comm, state;
    if (!(stat >> pid >> comm >> state)) continue;
    if (comm == "(" + exe + ")" && state != "Z") ++n;
  }
  return n;
}

/// Loopback TCP listener; accepts nothing, the kernel completes handshakes.
class Listener {
 public:
  Listener() {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in a{};
    a.sin_family = AF_INET;
    a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ::bind(fd_, reinterpret_cast<sockaddr*>(&a), sizeof a);
    ::listen(fd_, 8);
    socklen_t len = sizeof a;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&a), &len);
    port_ = ntohs(a.sin_port);
  }
  ~Listener() { ::close(fd_); }
  int port() const { return port_; }

 private:
  int fd_ = -1;
  int port_ = 0;
};

std::string circle_program(int points) {
  std::ostringstream code;
  code << "import math\n"
       << "execute_trajectory([[0.05, 0.3, 0.2, 0.0], [0.05, 0.3, 0.01, 0.0]])\n"
       << "execute_trajectory([";
  for (int i = 0; i <= points; ++i) {
    code << (i ? ", " : "") << "[0.05 * math.cos(2 * math.pi * " << i << " / " << points << "), 0.3 + 0.05 * math.sin(2 * math.pi * "
         << i << " / " << points << "), 0.01, 0.0]";
  }
  code << "])\n"
       << "execute_trajectory([[0.05, 0.3, 0.2, 0.0]])\n"
       << "task_completed()\n";
  return code.str();
}

}  // namespace

TEST(Runner, SingleCall) {
  std::vector<std::string> seen;
  auto r = run_program("open_gripper()\n", [&](const ApiRequest& q) {
    seen.emplace_back(api_method_name(q.method));
    return done(q);
  }, {}, fake_runner());
  EXPECT_EQ(r.outcome, RunOutcome::Completed) << r.detail << r.stderr_text;
  EXPECT_TRUE(r.isolated);
  EXPECT_EQ(seen, std::vector<std::string>{"open_gripper"});
  ASSERT_EQ(r.api_calls.size(), 1u);
  EXPECT_EQ(r.api_calls[0].method, ApiMethod::OpenGripper);
}

TEST(Runner, ExceptionCarriesTraceback) {
  auto r = run_program("x = 1\ny = x / 0\n", done, {}, fake_runner());
  EXPECT_EQ(r.outcome, RunOutcome::Exception);
  EXPECT_NE(r.traceback.find("ZeroDivisionError"), std::string::npos) << r.traceback;
  EXPECT_NE(r.traceback.find("line 2"), std::string::npos);
}

TEST(Runner, ErrorRepliesSurfaceInTheProgram) {
  auto r = run_program("pos, orn, dim = detect_object(\"sandwich\")\n", [](const ApiRequest&) -> json {
    throw ObjectNotFound("object not found: sandwich");
  }, {}, fake_runner());
  EXPECT_EQ(r.outcome, RunOutcome::Exception);
  EXPECT_NE(r.traceback.find("object not found: sandwich"), std::string::npos);
}

TEST(Runner, TimeoutKillsChild) {
  const int before = live_runners();
  const auto start = std::chrono::steady_clock::now();
  auto r = run_program("while True:\n  pass\n", done, {2.0, 1 << 20}, fake_runner());
  const double took = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_EQ(r.outcome, RunOutcome::Timeout);
  EXPECT_GE(took, 2.0);
  EXPECT_LT(took, 6.0);
  EXPECT_EQ(live_runners(), before);
}

TEST(Runner, IdsIncreaseAndRepliesPair) {
  std::vector<std::int64_t> ids;
  auto r = run_program("open_gripper()\nclose_gripper()\nopen_gripper()\ntask_completed()\n", [&](const ApiRequest& q) {
    ids.push_back(q.id);
    return done(q);
  }, {}, fake_runner());
  ASSERT_EQ(r.outcome, RunOutcome::Completed);
  EXPECT_EQ(ids, (std::vector<std::int64_t>{1, 2, 3, 4}));
  ASSERT_EQ(r.api_calls.size(), 4u);
  for (std::size_t i = 0; i < ids.size(); ++i) EXPECT_EQ(r.api_calls[i].id, ids[i]);
}

TEST(Runner, ProtocolViolations) {
  const auto run = [](const std::string& code, RunLimits limits = {5.0, 1 << 20}) {
    return run_program(code, done, limits, fake_runner());
  };
  const auto garbage = run("__garbage__()\n");
  EXPECT_EQ(garbage.outcome, RunOutcome::ProtocolError);
  EXPECT_NE(garbage.detail.find("malformed"), std::string::npos);
  const auto twice = run("__double_request__()\n");
  EXPECT_EQ(twice.outcome, RunOutcome::ProtocolError);
  EXPECT_EQ(twice.api_calls.size(), 0u);
  const auto flood = run("__flood__()\n");
  EXPECT_EQ(flood.outcome, RunOutcome::ProtocolError);
  EXPECT_NE(flood.detail.find("exceeded"), std::string::npos);
  const auto quit = run("__exit__()\n");
  EXPECT_EQ(quit.outcome, RunOutcome::ProtocolError);
  EXPECT_NE(quit.detail.find("exit status 4"), std::string::npos) << quit.detail;
}

TEST(Runner, SpawnFailure) {
  RunnerConfig cfg{{"/nonexistent/runner"}, {}, Isolation::Off};
  EXPECT_THROW(run_program("open_gripper()\n", done, {}, cfg), SpawnError);
  EXPECT_THROW(run_program("x", done, {}, RunnerConfig{}), SpawnError);
  SandboxGateway gw(fake_runner());
  gw.run("open_gripper()\n", done);
  gw.run("open_gripper()\n", done);
  EXPECT_EQ(gw.spawns(), 2u);
}

TEST(Isolation, FileEscapesFail) {
  const fs::path secret = fs::temp_directory_path() / ("trajgen_secret_" + std::to_string(::getpid()));
  std::ofstream(secret) << "secret";
  const auto read = run_program("__probe_read__(\"" + secret.string() + "\")\n", done, {}, fake_runner());
  EXPECT_EQ(read.outcome, RunOutcome::Exception);
  EXPECT_NE(read.traceback.find("FileNotFoundError"), std::string::npos) << read.traceback;
  const auto write = run_program("__probe_write__(\"/usr/trajgen_probe\")\n", done, {}, fake_runner());
  EXPECT_EQ(write.outcome, RunOutcome::Exception);
  EXPECT_FALSE(fs::exists("/usr/trajgen_probe"));
  const auto own = run_program("__probe_write__(\"scratch.txt\")\n", done, {}, fake_runner());
  EXPECT_EQ(own.outcome, RunOutcome::Completed) << own.traceback;

  // Control: without isolation the same probe reaches the file.
  const auto open = run_program("__probe_read__(\"" + secret.string() + "\")\n", done, {}, fake_runner(Isolation::Off));
  EXPECT_EQ(open.outcome, RunOutcome::Completed);
  fs::remove(secret);
}

TEST(Isolation, NetworkEscapeFails) {
  Listener host;
  const std::string probe = "__probe_connect__(\"127.0.0.1\", " + std::to_string(host.port()) + ")\n";
  const auto jailed = run_program(probe, done, {}, fake_runner());
  EXPECT_EQ(jailed.outcome, RunOutcome::Exception);
  EXPECT_NE(jailed.traceback.find("OSError"), std::string::npos);
  const auto open = run_program(probe, done, {}, fake_runner(Isolation::Off));
  EXPECT_EQ(open.outcome, RunOutcome::Completed) << open.traceback;
}

TEST(Runner, FlagSplitsOnWhitespace) {
  const RunnerConfig cfg = runner_from_flag("  python3   runner.py --x ");
  EXPECT_EQ(cfg.command, (std::vector<std::string>{"python3", "runner.py", "--x"}));
  EXPECT_EQ(cfg.isolation, Isolation::BestEffort);
}

TEST(Wire, MessageShapes) {
  const ApiRequest req{3, ApiMethod::DetectObject, {{"object", "apple"}}};
  EXPECT_EQ(req.to_json().dump(), R"({"id":3,"method":"detect_object","params":{"object":"apple"}})");
  EXPECT_EQ((ApiResponse{3, {{"status", "done"}}, std::nullopt}).to_json().dump(), R"({"id":3,"result":{"status":"done"}})");
  EXPECT_EQ((ApiResponse{4, json::object(), "boom"}).to_json().dump(), R"({"error":{"message":"boom"},"id":4})");
  for (const char* name : {"detect_object", "execute_trajectory", "open_gripper", "close_gripper", "task_completed"}) {
    ASSERT_TRUE(api_method_from_name(name));
    EXPECT_EQ(api_method_name(*api_method_from_name(name)), name);
  }
  EXPECT_FALSE(api_method_from_name("exec"));
}

TEST(ServeCall, DetectBowl) {
  RobotSession session(scene_state());
  const auto r = serve_call({1, ApiMethod::DetectObject, {{"object", "bowl"}}}, session);
  ASSERT_TRUE(r.ok());
  const json want = json::parse(R"({"position":[0.10,0.40,0.03],"orientation":0.0,"dimensions":[0.15,0.15,0.06]})");
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(r.result["position"][i].get<double>(), want["position"][i].get<double>(), 1e-12);
    EXPECT_NEAR(r.result["dimensions"][i].get<double>(), want["dimensions"][i].get<double>(), 1e-12);
  }
  EXPECT_EQ(r.result["orientation"], 0.0);
  EXPECT_EQ(session.detected(), std::set<std::string>{"bowl"});
}

TEST(ServeCall, ExecuteCountsTicks) {
  RobotSession session(scene_state());
  const auto r = serve_call({1, ApiMethod::ExecuteTrajectory, {{"trajectory", {{0.0, 0.3, 0.2, 0.0}, {0.1, 0.3, 0.2, 0.0}}}}}, session);
  ASSERT_TRUE(r.ok()) << *r.error;
  EXPECT_EQ(r.result["status"], "done");
  EXPECT_EQ(r.result["ticks"], 11);
  EXPECT_EQ(session.history().size(), 12u);
}

TEST(ServeCall, ErrorsAndAcknowledgements) {
  RobotSession session(scene_state());
  const auto miss = serve_call({1, ApiMethod::DetectObject, {{"object", "sandwich"}}}, session);
  ASSERT_FALSE(miss.ok());
  EXPECT_EQ(*miss.error, "object not found: sandwich");
  EXPECT_EQ(miss.id, 1);
  const auto far = serve_call({2, ApiMethod::ExecuteTrajectory, {{"trajectory", {{0.0, 0.3, 0.9, 0.0}}}}}, session);
  EXPECT_FALSE(far.ok());
  const auto arity = serve_call({3, ApiMethod::ExecuteTrajectory, {{"trajectory", {{0.0, 0.3}}}}}, session);
  EXPECT_FALSE(arity.ok());
  const auto close = serve_call({4, ApiMethod::CloseGripper, json::object()}, session);
  EXPECT_EQ(close.result["status"], "done");
  EXPECT_FALSE(session.state().gripper_open);
  const auto fin = serve_call({5, ApiMethod::TaskCompleted, json::object()}, session);
  EXPECT_EQ(fin.result["acknowledged"], true);
  EXPECT_TRUE(session.task_completed());
}

TEST(ServeCall, BinaryRows) {
  const Trajectory t = trajectory_from_rows(json::parse("[[0,0.3,0.2,0,0],[0,0.3,0.1,0,1],[0,0.3,0.2,0,1]]"));
  ASSERT_EQ(t.elements.size(), 4u);
  EXPECT_EQ(std::get<GripperCommand>(t.elements[2]), GripperCommand::Close);
  EXPECT_THROW(trajectory_from_rows(json::parse("[[0,0.3,0.2,0,2]]")), ProtocolError);
  EXPECT_THROW(trajectory_from_rows(json::parse("{}")), ProtocolError);
}

// Program through the runner versus its recorded calls served directly.
TEST(Equivalence, CircleProgramReplaysWithoutRunner) {
  RobotSession live(scene_state());
  const auto r = run_program(circle_program(100), [&](const ApiRequest& q) {
    const ApiResponse resp = serve_call(q, live);
    if (!resp.ok()) throw Error(*resp.error);
    return resp.result;
  }, {}, fake_runner());
  ASSERT_EQ(r.outcome, RunOutcome::Completed) << r.traceback << r.detail;
  ASSERT_EQ(r.api_calls.size(), 4u);
  EXPECT_EQ(r.api_calls[1].params["trajectory"].size(), 101u);
  EXPECT_TRUE(live.task_completed());

  RobotSession replayed(scene_state());
  for (const auto& call : r.api_calls) ASSERT_TRUE(serve_call(call, replayed).ok());
  EXPECT_EQ(live.history(), replayed.history());
  EXPECT_GT(live.history().size(), 100u);
  for (const auto& tick : live.history()) {
    if (std::abs(tick.gripper.z - 0.01) > 1e-12) continue;
    EXPECT_NEAR(std::hypot(tick.gripper.x, tick.gripper.y - 0.3), 0.05, 0.015);
  }
}
