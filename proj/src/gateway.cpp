#include "trajgen/gateway.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/mount.h>
#include <sys/socket.h>
#include <sys/statvfs.h>
#include <sys/syscall.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <sstream>

#include "trajgen/errors.hpp"
#include "trajgen/parser.hpp"

namespace trajgen {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::pair<ApiMethod, std::string_view> kMethodNames[] = {
    {ApiMethod::DetectObject, "detect_object"},
    {ApiMethod::ExecuteTrajectory, "execute_trajectory"},
    {ApiMethod::OpenGripper, "open_gripper"},
    {ApiMethod::CloseGripper, "close_gripper"},
    {ApiMethod::TaskCompleted, "task_completed"},
};

}  // namespace

std::string_view api_method_name(ApiMethod method) {
  for (const auto& [m, name] : kMethodNames) {
    if (m == method) return name;
  }
  return "task_completed";
}

std::optional<ApiMethod> api_method_from_name(std::string_view name) {
  for (const auto& [m, n] : kMethodNames) {
    if (n == name) return m;
  }
  return std::nullopt;
}

json ApiRequest::to_json() const { return {{"id", id}, {"method", api_method_name(method)}, {"params", params}}; }

json ApiResponse::to_json() const {
  if (error) return {{"id", id}, {"error", {{"message", *error}}}};
  return {{"id", id}, {"result", result}};
}

std::string_view run_outcome_name(RunOutcome outcome) {
  switch (outcome) {
    case RunOutcome::Completed: return "completed";
    case RunOutcome::Exception: return "exception";
    case RunOutcome::Timeout: return "timeout";
    case RunOutcome::ProtocolError: return "protocol_error";
  }
  return "protocol_error";
}

RunnerConfig runner_from_flag(std::string_view flag, Isolation isolation) {
  RunnerConfig config;
  std::istringstream in{std::string(flag)};
  for (std::string word; in >> word;) config.command.push_back(word);
  config.isolation = isolation;
  return config;
}

// ---------------------------------------------------------------------------
// Process jail. Everything the child needs is computed before fork so the
// child only issues raw system calls.

namespace {

struct BindMount {
  std::string source;
  std::string target;  // absolute host path inside the jail root
  unsigned long remount_flags = 0;
  bool optional = false;
};

struct JailPlan {
  fs::path root;  // host directory that becomes "/"
  fs::path work;  // writable working directory (host path)
  std::vector<BindMount> binds;
  std::string uid_map;
  std::string gid_map;
  std::vector<std::string> argv;
  std::string exec_path;
};

unsigned long locked_flags(const fs::path& p) {
  struct statvfs st {};
  if (::statvfs(p.c_str(), &st) != 0) return 0;
  unsigned long flags = 0;
  if (st.f_flag & ST_NOSUID) flags |= MS_NOSUID;
  if (st.f_flag & ST_NODEV) flags |= MS_NODEV;
  if (st.f_flag & ST_NOEXEC) flags |= MS_NOEXEC;
  if (st.f_flag & ST_NOATIME) flags |= MS_NOATIME;
  if (st.f_flag & ST_NODIRATIME) flags |= MS_NODIRATIME;
  if (st.f_flag & ST_RELATIME) flags |= MS_RELATIME;
  return flags;
}

fs::path resolve_executable(const std::string& name) {
  if (name.find('/') != std::string::npos) return fs::absolute(name);
  for (const char* dir : {"/usr/local/bin", "/usr/bin", "/bin"}) {
    const fs::path candidate = fs::path(dir) / name;
    if (::access(candidate.c_str(), X_OK) == 0) return candidate;
  }
  return name;
}

/// Mirrors `source` inside the jail root: symlinks are recreated, files and
/// directories get an empty mount point and a bind mount.
void mirror(JailPlan& plan, const fs::path& source, bool optional) {
  std::error_code ec;
  const auto status = fs::symlink_status(source, ec);
  if (ec || !fs::exists(status)) return;
  const fs::path target = plan.root / source.relative_path();
  if (fs::exists(fs::symlink_status(target, ec))) return;
  fs::create_directories(target.parent_path(), ec);
  if (fs::is_symlink(status)) {
    fs::create_symlink(fs::read_symlink(source, ec), target, ec);
    return;
  }
  if (fs::is_directory(status)) {
    fs::create_directories(target, ec);
  } else {
    const int fd = ::open(target.c_str(), O_CREAT | O_WRONLY | O_CLOEXEC, 0644);
    if (fd >= 0) ::close(fd);
  }
  plan.binds.push_back({source.string(), target.string(), locked_flags(source), optional});
}

JailPlan plan_jail(const RunnerConfig& config, const fs::path& root) {
  JailPlan plan;
  plan.root = root;
  plan.work = root / "work";
  fs::create_directories(plan.work);
  fs::create_directories(root / "tmp");

  plan.exec_path = resolve_executable(config.command.front()).string();
  plan.argv = config.command;
  plan.argv.front() = plan.exec_path;

  for (const char* p : {"/usr", "/bin", "/sbin", "/lib", "/lib32", "/lib64", "/libx32", "/etc/ld.so.cache",
                        "/etc/alternatives"}) {
    mirror(plan, p, false);
  }
  for (const char* p : {"/dev/null", "/dev/zero", "/dev/urandom", "/dev/random"}) mirror(plan, p, true);

  std::vector<fs::path> exposed = config.expose;
  const auto add_path = [&](const fs::path& p) {
    std::error_code ec;
    if (!fs::exists(p, ec)) return;
    const fs::path abs = fs::weakly_canonical(fs::absolute(p), ec);
    exposed.push_back(fs::is_directory(abs, ec) ? abs : abs.parent_path());
  };
  add_path(plan.exec_path);
  for (std::size_t i = 1; i < config.command.size(); ++i) add_path(config.command[i]);
  std::sort(exposed.begin(), exposed.end());
  exposed.erase(std::unique(exposed.begin(), exposed.end()), exposed.end());
  for (const auto& p : exposed) mirror(plan, p, false);

  plan.uid_map = "0 " + std::to_string(::getuid()) + " 1\n";
  plan.gid_map = "0 " + std::to_string(::getgid()) + " 1\n";
  return plan;
}

std::vector<std::string> sandbox_env(const std::string& home) {
  return {"PATH=/usr/local/bin:/usr/bin:/bin",
          "HOME=" + home,
          "TMPDIR=" + home,
          "LANG=C.UTF-8",
          "PYTHONDONTWRITEBYTECODE=1",
          "PYTHONIOENCODING=utf-8",
          "TRAJGEN_SANDBOX=1"};
}

// --- child side: async-signal-safe helpers only ---

void write_all(int fd, const char* data, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::write(fd, data, n);
    if (w <= 0) {
      if (w < 0 && errno == EINTR) continue;
      return;
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

void write_cstr(int fd, const char* s) { write_all(fd, s, std::strlen(s)); }

/// Writes "<kind><stage>: errno N\n" to the status pipe.
void report(int fd, char kind, const char* stage, int err) {
  char digits[16];
  int n = 0;
  unsigned v = static_cast<unsigned>(err);
  do {
    digits[n++] = static_cast<char>('0' + v % 10);
    v /= 10;
  } while (v != 0 && n < 15);
  char line[256];
  std::size_t len = 0;
  line[len++] = kind;
  for (const char* p = stage; *p != '\0' && len < 200; ++p) line[len++] = *p;
  for (const char* p = ": errno "; *p != '\0'; ++p) line[len++] = *p;
  while (n > 0) line[len++] = digits[--n];
  line[len++] = '\n';
  write_all(fd, line, len);
}

bool write_file(const char* path, const std::string& content) {
  const int fd = ::open(path, O_WRONLY | O_CLOEXEC);
  if (fd < 0) return false;
  const ssize_t w = ::write(fd, content.data(), content.size());
  ::close(fd);
  return w == static_cast<ssize_t>(content.size());
}

bool enter_user_and_net(const JailPlan& plan, int extra_flags) {
  if (::unshare(CLONE_NEWUSER | CLONE_NEWNET | extra_flags) != 0) return false;
  return write_file("/proc/self/setgroups", "deny") && write_file("/proc/self/uid_map", plan.uid_map) &&
         write_file("/proc/self/gid_map", plan.gid_map);
}

/// Returns nullptr on success, else the failing stage. A privileged caller
/// builds the mounts with its own credentials before dropping into the user
/// namespace, so sources it can only reach through its privileges still bind.
const char* enter_jail(const JailPlan& plan) {
  const bool privileged = ::unshare(CLONE_NEWNS) == 0;
  if (!privileged && !enter_user_and_net(plan, CLONE_NEWNS)) return "unshare";
  if (::mount(nullptr, "/", nullptr, MS_REC | MS_PRIVATE, nullptr) != 0) return "make-private";
  for (const auto& b : plan.binds) {
    if (::mount(b.source.c_str(), b.target.c_str(), nullptr, MS_BIND | MS_REC, nullptr) != 0) {
      if (b.optional) continue;
      return b.target.c_str();
    }
    if (::mount(nullptr, b.target.c_str(), nullptr, MS_BIND | MS_REMOUNT | MS_RDONLY | b.remount_flags, nullptr) !=
        0) {
      return "remount-ro";
    }
  }
  if (privileged && !enter_user_and_net(plan, 0)) return "unshare";
  if (::chroot(plan.root.c_str()) != 0) return "chroot";
  if (::chdir("/work") != 0) return "chdir";
  return nullptr;
}

[[noreturn]] void child_main(const JailPlan& plan, Isolation isolation, int sock, int err_out, int status_fd,
                             char* const* argv, char* const* envp_jail, char* const* envp_host) {
  ::setpgid(0, 0);
  char* const* envp = envp_host;
  if (isolation != Isolation::Off) {
    if (const char* stage = enter_jail(plan)) {
      report(status_fd, isolation == Isolation::Required ? 'E' : 'W', stage, errno);
      if (isolation == Isolation::Required) ::_exit(127);
    } else {
      envp = envp_jail;
      write_cstr(status_fd, "I\n");
    }
  }
  if (envp == envp_host && ::chdir(plan.work.c_str()) != 0) {
    report(status_fd, 'E', "chdir", errno);
    ::_exit(127);
  }
  if (::dup2(sock, 0) < 0 || ::dup2(sock, 1) < 0 || ::dup2(err_out, 2) < 0) {
    report(status_fd, 'E', "dup2", errno);
    ::_exit(127);
  }
#ifdef SYS_close_range
  ::syscall(SYS_close_range, 3U, ~0U, 4U /* CLOSE_RANGE_CLOEXEC */);
#endif
  ::execve(plan.exec_path.c_str(), argv, envp);
  report(status_fd, 'E', "execve", errno);
  ::_exit(127);
}

std::vector<char*> c_strings(std::vector<std::string>& v) {
  std::vector<char*> out;
  for (auto& s : v) out.push_back(s.data());
  out.push_back(nullptr);
  return out;
}

class TempRoot {
 public:
  TempRoot() {
    std::string pattern = (fs::temp_directory_path() / "trajgen-sandbox-XXXXXX").string();
    if (::mkdtemp(pattern.data()) == nullptr) throw SpawnError("cannot create sandbox directory: " + pattern);
    path_ = pattern;
  }
  ~TempRoot() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempRoot(const TempRoot&) = delete;
  TempRoot& operator=(const TempRoot&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

using Clock = std::chrono::steady_clock;

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return left <= 0 ? 0 : static_cast<int>(std::min<long long>(left, 1 << 30));
}

/// Sends all of `data`; false when the peer is gone or the deadline passes.
bool send_all(int fd, std::string_view data, Clock::time_point deadline) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL | MSG_DONTWAIT);
    if (n > 0) {
      data.remove_prefix(static_cast<std::size_t>(n));
      continue;
    }
    if (n < 0 && errno == EINTR) continue;
    if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
      pollfd p{fd, POLLOUT, 0};
      const int ms = remaining_ms(deadline);
      if (ms == 0 || ::poll(&p, 1, ms) <= 0) return false;
      continue;
    }
    return false;
  }
  return true;
}

class ChildProcess {
 public:
  explicit ChildProcess(pid_t pid) : pid_(pid) {}
  ~ChildProcess() { kill_and_reap(); }
  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  /// Waits up to `ms` for a natural exit; returns the wait status if it exited.
  std::optional<int> wait_for(int ms) {
    if (reaped_) return status_;
    const auto until = Clock::now() + std::chrono::milliseconds(ms);
    while (true) {
      int status = 0;
      const pid_t r = ::waitpid(pid_, &status, WNOHANG);
      if (r == pid_) {
        reaped_ = true;
        status_ = status;
        return status;
      }
      if (r < 0 && errno != EINTR) return std::nullopt;
      if (Clock::now() >= until) return std::nullopt;
      ::usleep(5000);
    }
  }

  void kill_and_reap() {
    ::kill(-pid_, SIGKILL);
    if (reaped_) return;
    ::kill(pid_, SIGKILL);
    int status = 0;
    while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
    }
    reaped_ = true;
    status_ = status;
  }

 private:
  pid_t pid_;
  bool reaped_ = false;
  int status_ = 0;
};

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() { reset(); }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  int get() const { return fd_; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

std::string describe_exit(int status) {
  if (WIFEXITED(status)) return "exit status " + std::to_string(WEXITSTATUS(status));
  if (WIFSIGNALED(status)) return "signal " + std::to_string(WTERMSIG(status));
  return "unknown status";
}

std::string clip(std::string_view s, std::size_t n = 200) {
  return s.size() <= n ? std::string(s) : std::string(s.substr(0, n)) + "...";
}

}  // namespace

SandboxGateway::SandboxGateway(RunnerConfig config) : config_(std::move(config)) {}

RunResult SandboxGateway::run(const std::string& code, const ApiHandler& handler, const RunLimits& limits) {
  if (config_.command.empty()) throw SpawnError("no runner command configured");

  TempRoot root;
  JailPlan plan = plan_jail(config_, root.path());
  std::vector<std::string> env_jail = sandbox_env("/work");
  std::vector<std::string> env_host = sandbox_env(plan.work.string());
  auto argv = c_strings(plan.argv);
  auto envp_jail = c_strings(env_jail);
  auto envp_host = c_strings(env_host);

  int sv[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
    throw SpawnError(std::string("socketpair: ") + std::strerror(errno));
  }
  Fd sock(sv[0]), child_sock(sv[1]);
  int ep[2], sp[2];
  if (::pipe2(ep, O_CLOEXEC) != 0) throw SpawnError(std::string("pipe: ") + std::strerror(errno));
  Fd err_read(ep[0]), err_write(ep[1]);
  if (::pipe2(sp, O_CLOEXEC) != 0) throw SpawnError(std::string("pipe: ") + std::strerror(errno));
  Fd status_read(sp[0]), status_write(sp[1]);

  const pid_t pid = ::fork();
  if (pid < 0) throw SpawnError(std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    child_main(plan, config_.isolation, child_sock.get(), err_write.get(), status_write.get(), argv.data(),
               envp_jail.data(), envp_host.data());
  }
  ::setpgid(pid, pid);
  ChildProcess child(pid);
  ++spawns_;
  child_sock.reset();
  err_write.reset();
  status_write.reset();

  // The status pipe closes on a successful exec.
  std::string status_text;
  char sbuf[512];
  while (true) {
    const ssize_t n = ::read(status_read.get(), sbuf, sizeof sbuf);
    if (n > 0) {
      status_text.append(sbuf, static_cast<std::size_t>(n));
    } else if (n < 0 && errno == EINTR) {
      continue;
    } else {
      break;
    }
  }
  RunResult result;
  std::istringstream lines(status_text);
  for (std::string line; std::getline(lines, line);) {
    if (line.empty()) continue;
    if (line[0] == 'E') throw SpawnError("cannot start runner " + plan.exec_path + ": " + line.substr(1));
    if (line[0] == 'I') result.isolated = true;
  }

  const auto deadline =
      Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(limits.wall_clock_seconds));
  bool done = false;
  const auto finish_timeout = [&] {
    done = true;
    result.outcome = RunOutcome::Timeout;
    std::ostringstream msg;
    msg << "the program exceeded the wall-clock limit of " << limits.wall_clock_seconds << " s";
    result.detail = msg.str();
  };
  const auto protocol_error = [&](std::string detail) {
    done = true;
    result.outcome = RunOutcome::ProtocolError;
    result.detail = std::move(detail);
  };

  const json load = {{"id", 0}, {"method", "load_program"}, {"params", {{"code", code}}}};
  const bool loaded = send_all(sock.get(), load.dump() + "\n", deadline);

  std::string inbox;
  std::size_t received = 0;
  std::int64_t last_id = 0;
  bool sock_open = true;
  bool err_open = true;
  if (!loaded && remaining_ms(deadline) == 0) finish_timeout();

  const auto handle_line = [&](std::string_view line) {
    json msg;
    try {
      msg = json::parse(line);
    } catch (const json::exception&) {
      protocol_error("malformed message from runner: " + clip(line));
      return;
    }
    if (!msg.is_object() || !msg.contains("id") || !msg["id"].is_number_integer()) {
      protocol_error("message without an integer id: " + clip(line));
      return;
    }
    const auto id = msg["id"].get<std::int64_t>();
    if (msg.contains("event")) {
      const auto event = msg["event"].is_string() ? msg["event"].get<std::string>() : std::string();
      if (id != -1) {
        protocol_error("event messages must carry id -1: " + clip(line));
      } else if (event == "completed") {
        result.outcome = RunOutcome::Completed;
      } else if (event == "exception") {
        result.outcome = RunOutcome::Exception;
        result.traceback = msg.value("traceback", std::string());
      } else {
        protocol_error("unknown event: " + clip(line));
      }
      done = true;
      return;
    }
    if (id <= last_id) {
      protocol_error("request id " + std::to_string(id) + " does not increase past " + std::to_string(last_id));
      return;
    }
    const auto method = msg.contains("method") && msg["method"].is_string()
                            ? api_method_from_name(msg["method"].get<std::string>())
                            : std::nullopt;
    if (!method) {
      protocol_error("unknown method in request: " + clip(line));
      return;
    }
    ApiRequest req{id, *method, msg.value("params", json::object())};
    if (!req.params.is_object()) {
      protocol_error("request params must be an object: " + clip(line));
      return;
    }
    last_id = id;
    if (inbox.find('\n') != std::string::npos) {
      protocol_error("request " + std::to_string(id) + " was followed by another message before its reply");
      return;
    }
    result.api_calls.push_back(req);
    ApiResponse response{id, json::object(), std::nullopt};
    try {
      response.result = handler(req);
    } catch (const std::exception& e) {
      response.error = e.what();
    }
    send_all(sock.get(), response.to_json().dump() + "\n", deadline);
  };

  while (!done) {
    const int ms = remaining_ms(deadline);
    if (ms == 0) {
      finish_timeout();
      break;
    }
    pollfd fds[2];
    nfds_t count = 0;
    if (sock_open) fds[count++] = {sock.get(), POLLIN, 0};
    if (err_open) fds[count++] = {err_read.get(), POLLIN, 0};
    if (count == 0) break;
    const int ready = ::poll(fds, count, ms);
    if (ready < 0 && errno != EINTR) {
      protocol_error(std::string("poll: ") + std::strerror(errno));
      break;
    }
    if (ready <= 0) continue;
    char buf[65536];
    for (nfds_t i = 0; i < count && !done; ++i) {
      if ((fds[i].revents & (POLLIN | POLLHUP | POLLERR)) == 0) continue;
      const ssize_t n = ::read(fds[i].fd, buf, sizeof buf);
      if (n < 0 && errno == EINTR) continue;
      const bool is_sock = fds[i].fd == sock.get();
      if (n <= 0) {
        (is_sock ? sock_open : err_open) = false;
        continue;
      }
      received += static_cast<std::size_t>(n);
      if (received > limits.output_cap) {
        protocol_error("runner output exceeded " + std::to_string(limits.output_cap) + " bytes");
        break;
      }
      if (!is_sock) {
        result.stderr_text.append(buf, static_cast<std::size_t>(n));
        continue;
      }
      inbox.append(buf, static_cast<std::size_t>(n));
      std::size_t nl;
      while (!done && (nl = inbox.find('\n')) != std::string::npos) {
        const std::string line = inbox.substr(0, nl);
        inbox.erase(0, nl + 1);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        handle_line(line);
      }
    }
    if (!done && !sock_open) {
      // Stream closed without a final event.
      const auto status = child.wait_for(std::min(remaining_ms(deadline), 2000));
      protocol_error("runner closed its output without reporting completion (" +
                     (status ? describe_exit(*status) : std::string("still running")) + ")" +
                     (result.stderr_text.empty() ? "" : ": " + clip(result.stderr_text, 2000)));
    }
  }

  if (result.outcome == RunOutcome::Completed || result.outcome == RunOutcome::Exception) {
    child.wait_for(std::min(remaining_ms(deadline), 1000));
  }
  child.kill_and_reap();
  return result;
}

RunResult run_program(const std::string& code, const ApiHandler& handler, const RunLimits& limits,
                      const RunnerConfig& runner) {
  SandboxGateway gateway(runner);
  return gateway.run(code, handler, limits);
}

// ---------------------------------------------------------------------------
// Robot session

RobotSession::RobotSession(SimState initial, double noise_sigma, std::uint64_t noise_seed, double pos_step,
                           double yaw_step)
    : state_(std::move(initial)), noise_sigma_(noise_sigma), rng_(noise_seed), pos_step_(pos_step),
      yaw_step_(yaw_step) {
  record();
}

void RobotSession::record() { history_.push_back(snapshot(state_)); }

Detection RobotSession::detect(std::string_view query) {
  Detection d = detect_object(state_, query, noise_sigma_, rng_);
  detected_.insert(d.object);
  return d;
}

std::uint64_t RobotSession::execute(const Trajectory& t) {
  const std::uint64_t start = state_.tick;
  for (const auto& e : densify(t, pos_step_, yaw_step_).elements) {
    if (const auto* p = std::get_if<Pose>(&e)) {
      state_ = step_to(std::move(state_), *p);
    } else {
      state_ = trajgen::set_gripper(std::move(state_), std::get<GripperCommand>(e) == GripperCommand::Open);
    }
    record();
  }
  return state_.tick - start;
}

void RobotSession::set_gripper(bool open) {
  state_ = trajgen::set_gripper(std::move(state_), open);
  record();
}

ObjectTracks RobotSession::tracks(std::size_t cap) const { return trajgen::tracks(history_, detected_, cap); }

json detection_to_json(const BBox3D& box) {
  return {{"position", {box.position.x, box.position.y, box.position.z}},
          {"orientation", box.orientation},
          {"dimensions", {box.dimensions.x, box.dimensions.y, box.dimensions.z}}};
}

Trajectory trajectory_from_rows(const json& rows, bool gripper_open) {
  if (!rows.is_array()) throw ProtocolError("the trajectory must be a list of [x, y, z, yaw] rows");
  Trajectory t;
  bool open = gripper_open;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (!row.is_array() || (row.size() != 4 && row.size() != 5)) {
      throw ProtocolError("trajectory row " + std::to_string(i) + " must hold 4 values [x, y, z, yaw]" +
                          " (or 5 with a gripper state)");
    }
    double v[5] = {0, 0, 0, 0, 0};
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (!row[k].is_number()) throw ProtocolError("trajectory row " + std::to_string(i) + " holds a non-number");
      v[k] = row[k].get<double>();
      if (!std::isfinite(v[k])) throw ProtocolError("trajectory row " + std::to_string(i) + " holds a non-finite value");
    }
    t.elements.emplace_back(Pose{v[0], v[1], v[2], wrap_angle(v[3])});
    if (row.size() == 5) {
      if (v[4] != 0.0 && v[4] != 1.0) {
        throw ProtocolError("trajectory row " + std::to_string(i) + ": the gripper value must be 0 or 1");
      }
      const bool want_open = v[4] == 0.0;
      if (want_open != open) {
        t.elements.emplace_back(want_open ? GripperCommand::Open : GripperCommand::Close);
        open = want_open;
      }
    }
  }
  return t;
}

ApiResponse serve_call(const ApiRequest& req, RobotSession& session) {
  ApiResponse r{req.id, json::object(), std::nullopt};
  try {
    switch (req.method) {
      case ApiMethod::DetectObject: {
        const auto& p = req.params;
        const json& name = p.contains("object") ? p["object"] : p.value("name", json());
        if (!name.is_string()) throw ProtocolError("detect_object needs an object name string");
        r.result = detection_to_json(session.detect(name.get<std::string>()).box);
        break;
      }
      case ApiMethod::ExecuteTrajectory: {
        const Trajectory t = trajectory_from_rows(req.params.value("trajectory", json()), session.state().gripper_open);
        const auto violations = validate_trajectory(t);
        if (!violations.empty()) {
          std::string msg = "invalid trajectory:";
          for (const auto& v : violations) msg += " " + v.detail + ";";
          msg.pop_back();
          throw ProtocolError(msg);
        }
        r.result = {{"status", "done"}, {"ticks", session.execute(t)}};
        break;
      }
      case ApiMethod::OpenGripper:
      case ApiMethod::CloseGripper:
        session.set_gripper(req.method == ApiMethod::OpenGripper);
        r.result = {{"status", "done"}};
        break;
      case ApiMethod::TaskCompleted:
        session.mark_task_completed();
        r.result = {{"acknowledged", true}};
        break;
    }
  } catch (const Error& e) {
    r.result = json::object();
    r.error = e.what();
  } catch (const json::exception& e) {
    r.result = json::object();
    r.error = std::string("invalid parameters for ") + std::string(api_method_name(req.method)) + ": " + e.what();
  }
  return r;
}

}  // namespace trajgen
