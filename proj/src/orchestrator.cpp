#include "trajgen/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <regex>
#include <sstream>
#include <thread>

#include "trajgen/errors.hpp"

namespace trajgen {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kNoiseSalt = 0x9e3779b97f4a7c15ULL;

bool backend_failure(const std::exception_ptr& e, std::string& message) {
  try {
    std::rethrow_exception(e);
  } catch (const BackendError& x) {
    message = x.what();
  } catch (const BackendTimeout& x) {
    message = x.what();
  } catch (const ReplayExhausted& x) {
    message = x.what();
  } catch (const ReplayDivergence& x) {
    message = x.what();
  } catch (...) {
    return false;
  }
  return true;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += sep;
    out += p;
  }
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string violations_reason(const std::vector<TrajectoryViolation>& violations) {
  std::string out = "the trajectory cannot be executed:";
  for (const auto& v : violations) out += "\n- " + v.detail;
  return out;
}

int assistant_turns(const ChatHistory& h) {
  return static_cast<int>(std::count_if(h.begin(), h.end(), [](const ChatMessage& m) { return m.role == Role::Assistant; }));
}

OutputParser numeric_parser(RobotSession& session, GripperMode gripper) {
  return [&session, gripper](std::string_view text) -> ParsedOutput {
    if (text.find(kTrajectoryOpenTag) == std::string_view::npos) {
      const auto queries = requested_detections(text);
      if (!queries.empty()) {
        return Invalid{"no trajectory between " + std::string(kTrajectoryOpenTag) + " and " +
                           std::string(kTrajectoryCloseTag) + " tags",
                       detection_feedback(session, queries)};
      }
    }
    ParsedOutput parsed = parse_output(text, OutputMode::Numeric, gripper);
    if (const auto* n = std::get_if<NumericTrajectory>(&parsed)) {
      const auto violations = validate_trajectory(n->trajectory);
      if (!violations.empty()) return Invalid{violations_reason(violations), {}};
    }
    return parsed;
  };
}

std::string run_failure(const RunResult& run) {
  switch (run.outcome) {
    case RunOutcome::Exception:
      return run.traceback.empty() ? std::string("the program raised an exception") : run.traceback;
    case RunOutcome::Timeout:
      return "the program did not finish in time: " + run.detail;
    case RunOutcome::ProtocolError:
      return "the program broke the robot API protocol: " + run.detail;
    case RunOutcome::Completed:
      break;
  }
  return {};
}

// Generation phase of one attempt: first output, corrections, execution.
void generate_and_execute(AttemptRecord& attempt, RobotSession& session, const EpisodeOptions& options,
                          EpisodeContext& context, const PromptBundle& bundle) {
  ChatBackend& llm = context.llm;
  ChatHistory& history = attempt.conversation;
  history = opening_messages(bundle, options.prompt.placement);
  history.push_back(llm.chat(history, options.chat));

  CorrectionBudget budget{options.correction_limit, 0};
  const bool code_mode = options.prompt.output_mode == OutputMode::Code;
  const OutputParser parser =
      code_mode ? OutputParser([gripper = options.prompt.gripper_mode](std::string_view text) {
        return parse_output(text, OutputMode::Code, gripper);
      })
                : numeric_parser(session, options.prompt.gripper_mode);

  const auto finish = [&](AttemptStatus status, std::string failure) {
    attempt.status = status;
    attempt.failure = std::move(failure);
    attempt.corrections = budget.used;
    attempt.queries.generation = assistant_turns(history);
  };

  for (;;) {
    ParsedOutput parsed = correction_loop(llm, parser, history, budget, options.chat);
    if (const auto* bad = std::get_if<Invalid>(&parsed)) {
      finish(AttemptStatus::Invalid, bad->reason);
      return;
    }
    if (const auto* n = std::get_if<NumericTrajectory>(&parsed)) {
      attempt.trajectory = n->trajectory;
      session.execute(n->trajectory);
      finish(AttemptStatus::Executed, {});
      return;
    }
    const auto& blocks = std::get<CodeBlocks>(parsed).blocks;
    const ApiHandler handler = [&session](const ApiRequest& req) -> json {
      ApiResponse r = serve_call(req, session);
      if (!r.ok()) throw Error(*r.error);
      return r.result;
    };
    attempt.run = context.gateway->run(join(blocks, "\n\n"), handler, options.limits);
    if (attempt.run->outcome == RunOutcome::Completed) {
      finish(AttemptStatus::Executed, {});
      return;
    }
    const std::string reason = run_failure(*attempt.run);
    if (budget.exhausted()) {
      finish(AttemptStatus::Invalid, reason);
      return;
    }
    ++budget.used;
    history.push_back({Role::User, correction_message(reason)});
    history.push_back(llm.chat(history, options.chat));
  }
}

}  // namespace

std::string_view attempt_status_name(AttemptStatus status) {
  switch (status) {
    case AttemptStatus::Executed: return "executed";
    case AttemptStatus::Invalid: return "invalid";
    case AttemptStatus::BackendFailure: return "backend_failure";
  }
  return "executed";
}

bool EpisodeResult::executable() const {
  return !attempts.empty() && std::all_of(attempts.begin(), attempts.end(), [](const AttemptRecord& a) {
    return a.status == AttemptStatus::Executed;
  });
}

int EpisodeResult::total_corrections() const {
  int n = 0;
  for (const auto& a : attempts) n += a.corrections;
  return n;
}

ChatHistory opening_messages(const PromptBundle& bundle, PromptPlacement placement) {
  if (placement == PromptPlacement::System) {
    return {{Role::System, bundle.main_prompt}, {Role::User, bundle.render_instruction()}};
  }
  return {{Role::User, bundle.render()}};
}

std::vector<std::string> requested_detections(std::string_view text) {
  static const std::regex re(R"re(detect_object\(\s*["']([^"'\n]+)["']\s*\))re");
  std::vector<std::string> out;
  const std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
    std::string q = (*it)[1].str();
    if (std::find(out.begin(), out.end(), q) == out.end()) out.push_back(std::move(q));
  }
  return out;
}

std::string detection_feedback(RobotSession& session, const std::vector<std::string>& queries) {
  std::string out = "Detection results:";
  for (const auto& q : queries) {
    out += "\ndetect_object(\"" + q + "\") -> ";
    try {
      out += detection_to_json(session.detect(q).box).dump();
    } catch (const ObjectNotFound& e) {
      out += std::string("error: ") + e.what();
    }
  }
  out += "\nNow reply with the complete trajectory between " + std::string(kTrajectoryOpenTag) + " and " +
         std::string(kTrajectoryCloseTag) + " tags.";
  return out;
}

VerdictOutcome request_verdict(ChatBackend& llm, const PromptLibrary& prompts, std::string_view instruction,
                               const ObjectTracks& tracks, const ChatParams& params) {
  VerdictOutcome out;
  ChatHistory h{{Role::User, build_success_prompt(prompts, instruction, tracks)}};
  for (int round = 0; round < 2; ++round) {
    h.push_back(llm.chat(h, params));
    ++out.queries;
    try {
      out.completed = parse_success_verdict(h.back().content);
      out.parsed = true;
      return out;
    } catch (const VerdictUnparseable&) {
      h.push_back({Role::User, verdict_reminder()});
    }
  }
  out.completed = false;
  return out;
}

SummaryOutcome request_summary(ChatBackend& llm, const PromptLibrary& prompts, std::string_view instruction,
                               const ObjectTracks& tracks, const ChatParams& params) {
  SummaryOutcome out;
  const ChatHistory h{{Role::User, build_summary_request(prompts, instruction, tracks)}};
  for (int round = 0; round < 2; ++round) {
    ++out.queries;
    const std::string text = trim(llm.chat(h, params).content);
    if (!text.empty()) {
      out.summary = cap_words(text);
      return out;
    }
  }
  out.summary = std::string(kSummaryPlaceholder);
  return out;
}

EpisodeResult run_episode(const TaskScene& task, std::uint64_t seed, const EpisodeOptions& options,
                          EpisodeContext& context) {
  options.prompt.validate();
  if (options.prompt.output_mode == OutputMode::Code && context.gateway == nullptr) {
    throw ConfigError("code output mode needs a runner");
  }
  if (options.max_replans < 0) throw ConfigError("max_replans must be non-negative");

  EpisodeResult result;
  result.task_id = task.id;
  result.seed = seed;
  const std::size_t spawns_before = context.gateway ? context.gateway->spawns() : 0;

  PromptBundle bundle{build_main_prompt(context.prompts, options.prompt), task.instruction, std::nullopt};

  for (int k = 0; k <= options.max_replans; ++k) {
    AttemptRecord& attempt = result.attempts.emplace_back();
    attempt.index = k + 1;
    RobotSession session(reset(task, seed), options.noise_sigma, seed ^ kNoiseSalt, options.pos_step,
                         options.yaw_step);
    std::string failure;
    bool backend_down = false;
    try {
      generate_and_execute(attempt, session, options, context, bundle);
    } catch (...) {
      if (!backend_failure(std::current_exception(), failure)) throw;
      backend_down = true;
    }
    attempt.history = session.history();
    attempt.tracks = session.tracks();
    if (context.checker) attempt.checker_verdict = context.checker(task, attempt.history);

    if (backend_down) {
      attempt.status = AttemptStatus::BackendFailure;
      attempt.failure = failure;
      attempt.queries.generation = assistant_turns(attempt.conversation);
      result.termination = "backend_error";
      break;
    }
    if (attempt.status == AttemptStatus::Invalid) {
      result.termination = "invalid_output";
      break;
    }

    try {
      const VerdictOutcome v =
          request_verdict(context.llm, context.prompts, task.instruction, attempt.tracks, options.chat);
      attempt.llm_verdict = v.completed;
      attempt.queries.verdict = v.queries;
      if (attempt.llm_verdict) {
        result.termination = "verdict_true";
        break;
      }
      if (k == options.max_replans) {
        result.termination = "replans_exhausted";
        break;
      }
      SummaryOutcome s = request_summary(context.llm, context.prompts, task.instruction, attempt.tracks, options.chat);
      attempt.queries.summary = s.queries;
      attempt.summary = s.summary;
      bundle.summary = std::move(s.summary);
    } catch (...) {
      if (!backend_failure(std::current_exception(), failure)) throw;
      attempt.llm_verdict = false;
      attempt.failure = failure;
      result.termination = "backend_error";
      break;
    }
  }

  result.replans_used = static_cast<int>(result.attempts.size()) - 1;
  result.task_completed = result.attempts.back().llm_verdict;
  result.sandbox_spawns = context.gateway ? context.gateway->spawns() - spawns_before : 0;
  return result;
}

// ---------------------------------------------------------------------------

json tick_to_json(const TickRecord& t) {
  json objects = json::object();
  for (const auto& [name, box] : t.objects) objects[name] = detection_to_json(box);
  return {{"tick", t.tick},
          {"gripper", {t.gripper.x, t.gripper.y, t.gripper.z, t.gripper.yaw}},
          {"gripper_open", t.gripper_open},
          {"objects", std::move(objects)}};
}

TickRecord tick_from_json(const json& j) {
  TickRecord t;
  t.tick = j.at("tick").get<std::uint64_t>();
  const auto& g = j.at("gripper");
  t.gripper = {g.at(0).get<double>(), g.at(1).get<double>(), g.at(2).get<double>(), g.at(3).get<double>()};
  t.gripper_open = j.at("gripper_open").get<bool>();
  for (const auto& [name, b] : j.at("objects").items()) {
    const auto& p = b.at("position");
    const auto& d = b.at("dimensions");
    t.objects[name] = BBox3D{{p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()},
                             b.at("orientation").get<double>(),
                             {d.at(0).get<double>(), d.at(1).get<double>(), d.at(2).get<double>()}};
  }
  return t;
}

void write_episode_log(const EpisodeResult& result, std::ostream& out) {
  for (const auto& a : result.attempts) {
    json attempt = {{"type", "attempt"},
                    {"task", result.task_id},
                    {"seed", result.seed},
                    {"attempt", a.index},
                    {"status", attempt_status_name(a.status)},
                    {"failure", a.failure},
                    {"corrections", a.corrections},
                    {"generation_queries", a.queries.generation},
                    {"run_outcome", a.run ? json(run_outcome_name(a.run->outcome)) : json(nullptr)},
                    {"api_calls", a.run ? a.run->api_calls.size() : 0}};
    out << attempt.dump() << '\n';
    for (const auto& t : a.history) {
      json tick = tick_to_json(t);
      tick["type"] = "tick";
      tick["attempt"] = a.index;
      out << tick.dump() << '\n';
    }
    json verdict = {{"type", "verdict"},
                    {"attempt", a.index},
                    {"llm_verdict", a.llm_verdict},
                    {"checker_verdict", a.checker_verdict},
                    {"verdict_queries", a.queries.verdict},
                    {"summary", a.summary ? json(*a.summary) : json(nullptr)},
                    {"summary_queries", a.queries.summary}};
    out << verdict.dump() << '\n';
  }
  json episode = {{"type", "episode"},
                  {"task", result.task_id},
                  {"seed", result.seed},
                  {"task_completed", result.task_completed},
                  {"checker_verdict", result.checker_verdict()},
                  {"replans_used", result.replans_used},
                  {"termination", result.termination},
                  {"executable", result.executable()},
                  {"corrections", result.total_corrections()},
                  {"manual_error_label",
                   result.manual_error_label ? json(*result.manual_error_label) : json(nullptr)}};
  out << episode.dump() << '\n';
}

std::string episode_log_text(const EpisodeResult& result) {
  std::ostringstream out;
  write_episode_log(result, out);
  return out.str();
}

fs::path save_episode_log(const EpisodeResult& result, const fs::path& root) {
  const fs::path dir = root / "runs" / result.task_id / std::to_string(result.seed);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const fs::path path = dir / "episode.jsonl";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  write_episode_log(result, out);
  out.flush();
  if (!out) throw IoError("cannot write " + path.string());
  return path;
}

std::vector<std::vector<TickRecord>> attempts_from_log(std::string_view log_text) {
  std::vector<std::vector<TickRecord>> out;
  std::istringstream in{std::string(log_text)};
  for (std::string line; std::getline(in, line);) {
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError(std::string("malformed episode log line: ") + e.what());
    }
    const std::string type = j.value("type", "");
    if (type == "attempt") {
      out.emplace_back();
    } else if (type == "tick") {
      if (out.empty()) throw IoError("episode log has a tick before any attempt");
      out.back().push_back(tick_from_json(j));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

TrialsResult run_trials(const TaskScene& task, int n, std::uint64_t base_seed, const EpisodeOptions& options,
                        TrialsContext& context) {
  if (n < 0) throw ConfigError("trial count must be non-negative");
  if (!context.backends) throw ConfigError("no backend factory");
  TrialsResult out;
  out.task_id = task.id;
  out.episodes.resize(static_cast<std::size_t>(n));

  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(i);
        auto backend = context.backends(seed);
        std::optional<SandboxGateway> gateway;
        if (context.runner) gateway.emplace(*context.runner);
        EpisodeContext ctx{context.prompts, *backend, gateway ? &*gateway : nullptr, context.checker};
        out.episodes[static_cast<std::size_t>(i)] = run_episode(task, seed, options, ctx);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int jobs = std::clamp(context.jobs, 1, std::max(n, 1));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int j = 0; j < jobs; ++j) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  int agree = 0, executable = 0, corrections = 0;
  for (const auto& e : out.episodes) {
    out.successes += e.checker_verdict() ? 1 : 0;
    agree += e.task_completed == e.checker_verdict() ? 1 : 0;
    executable += e.executable() ? 1 : 0;
    corrections += e.total_corrections();
  }
  if (n > 0) {
    out.rate = static_cast<double>(out.successes) / n;
    out.agreement = static_cast<double>(agree) / n;
    out.executable_pct = 100.0 * executable / n;
    out.mean_corrections = static_cast<double>(corrections) / n;
  }
  return out;
}

}  // namespace trajgen
