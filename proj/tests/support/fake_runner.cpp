// Stand-in for the sandbox runner used by the C++ test suites. It speaks the
// gateway wire protocol and interprets a tiny straight-line subset of Python:
//
//   pos, orn, dim = detect_object("apple")
//   z = pos[2] + 0.1
//   execute_trajectory([[pos[0], pos[1], z, orn], [pos[0], pos[1], pos[2], orn]])
//   close_gripper() / open_gripper() / task_completed()
//   while True:            -> spins forever
//
// plus probe statements used by the isolation and protocol tests.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

using nlohmann::json;

namespace {

struct PyError {
  std::string type;
  std::string message;
};

struct Value;
using List = std::vector<Value>;
struct Value {
  std::variant<double, std::shared_ptr<List>> v;

  static Value number(double d) { return {d}; }
  static Value list(List items) { return {std::make_shared<List>(std::move(items))}; }
  bool is_number() const { return std::holds_alternative<double>(v); }
  double num() const {
    if (!is_number()) throw PyError{"TypeError", "expected a number, got a list"};
    return std::get<double>(v);
  }
  const List& items() const {
    if (is_number()) throw PyError{"TypeError", "'float' object is not subscriptable"};
    return *std::get<std::shared_ptr<List>>(v);
  }
};

json to_json(const Value& v) {
  if (v.is_number()) return v.num();
  json out = json::array();
  for (const auto& item : v.items()) out.push_back(to_json(item));
  return out;
}

Value from_json(const json& j) {
  if (j.is_number()) return Value::number(j.get<double>());
  if (j.is_array()) {
    List items;
    for (const auto& e : j) items.push_back(from_json(e));
    return Value::list(std::move(items));
  }
  return Value::number(0.0);
}

std::int64_t next_id = 1;

json call(const std::string& method, json params) {
  const std::int64_t id = next_id++;
  std::cout << json{{"id", id}, {"method", method}, {"params", std::move(params)}}.dump() << std::endl;
  std::string line;
  if (!std::getline(std::cin, line)) std::exit(3);
  const json reply = json::parse(line);
  if (reply.value("id", std::int64_t{-2}) != id) std::exit(2);
  if (reply.contains("error")) throw PyError{"RuntimeError", reply["error"].value("message", "error")};
  return reply.value("result", json::object());
}

std::map<std::string, Value> vars;

class Expr {
 public:
  explicit Expr(std::string_view s) : s_(s) {}

  Value parse_all() {
    Value v = expr();
    skip();
    if (pos_ != s_.size()) throw PyError{"SyntaxError", "invalid syntax"};
    return v;
  }

 private:
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void need(char c) {
    if (!eat(c)) throw PyError{"SyntaxError", std::string("expected '") + c + "'"};
  }

  Value expr() {
    Value v = term();
    while (true) {
      if (eat('+')) {
        v = Value::number(v.num() + term().num());
      } else if (eat('-')) {
        v = Value::number(v.num() - term().num());
      } else {
        return v;
      }
    }
  }

  Value term() {
    Value v = factor();
    while (true) {
      if (eat('*')) {
        v = Value::number(v.num() * factor().num());
      } else if (eat('/')) {
        const double d = factor().num();
        if (d == 0.0) throw PyError{"ZeroDivisionError", "division by zero"};
        v = Value::number(v.num() / d);
      } else {
        return v;
      }
    }
  }

  Value factor() {
    if (eat('-')) return Value::number(-factor().num());
    if (eat('+')) return factor();
    Value v = primary();
    while (eat('[')) {
      const double idx = expr().num();
      need(']');
      const auto& items = v.items();
      const auto i = static_cast<long>(idx);
      const long n = static_cast<long>(items.size());
      if (i < -n || i >= n) throw PyError{"IndexError", "list index out of range"};
      v = items[static_cast<std::size_t>(i < 0 ? i + n : i)];
    }
    return v;
  }

  Value primary() {
    skip();
    if (eat('(')) {
      Value v = expr();
      need(')');
      return v;
    }
    if (eat('[')) {
      List items;
      if (!eat(']')) {
        do {
          skip();
          if (pos_ < s_.size() && s_[pos_] == ']') break;
          items.push_back(expr());
        } while (eat(','));
        need(']');
      }
      return Value::list(std::move(items));
    }
    if (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) {
      std::size_t used = 0;
      const double d = std::stod(std::string(s_.substr(pos_)), &used);
      pos_ += used;
      return Value::number(d);
    }
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' || s_[pos_] == '.')) {
      ++pos_;
    }
    const std::string name(s_.substr(start, pos_ - start));
    if (name.empty()) throw PyError{"SyntaxError", "invalid syntax"};
    if (eat('(')) {
      std::vector<double> args;
      if (!eat(')')) {
        do args.push_back(expr().num());
        while (eat(','));
        need(')');
      }
      return Value::number(math(name, args));
    }
    if (name == "math.pi") return Value::number(M_PI);
    const auto it = vars.find(name);
    if (it == vars.end()) throw PyError{"NameError", "name '" + name + "' is not defined"};
    return it->second;
  }

  static double math(const std::string& name, const std::vector<double>& a) {
    const auto arg = [&](std::size_t i) {
      if (i >= a.size()) throw PyError{"TypeError", name + "() missing argument"};
      return a[i];
    };
    if (name == "math.sin") return std::sin(arg(0));
    if (name == "math.cos") return std::cos(arg(0));
    if (name == "math.sqrt") return std::sqrt(arg(0));
    if (name == "math.atan2") return std::atan2(arg(0), arg(1));
    if (name == "math.radians") return arg(0) * M_PI / 180.0;
    throw PyError{"NameError", "name '" + name + "' is not defined"};
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

bool starts_with(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

/// Argument text of `name(...)` when `stmt` is exactly such a call.
bool call_args(const std::string& stmt, const std::string& name, std::string& args) {
  if (!starts_with(stmt, name + "(") || stmt.back() != ')') return false;
  args = stmt.substr(name.size() + 1, stmt.size() - name.size() - 2);
  return true;
}

std::string string_literal(const std::string& text) {
  const std::string t = trim(text);
  if (t.size() < 2 || (t.front() != '"' && t.front() != '\'') || t.back() != t.front()) {
    throw PyError{"TypeError", "expected a string literal"};
  }
  return t.substr(1, t.size() - 2);
}

void execute(const std::string& stmt) {
  std::string args;
  if (stmt == "while True:") {
    while (true) ::usleep(100000);
  }
  if (call_args(stmt, "open_gripper", args)) {
    call("open_gripper", json::object());
    return;
  }
  if (call_args(stmt, "close_gripper", args)) {
    call("close_gripper", json::object());
    return;
  }
  if (call_args(stmt, "task_completed", args)) {
    call("task_completed", json::object());
    return;
  }
  if (call_args(stmt, "execute_trajectory", args)) {
    call("execute_trajectory", {{"trajectory", to_json(Expr(args).parse_all())}});
    return;
  }
  if (call_args(stmt, "print", args)) return;
  if (call_args(stmt, "__probe_read__", args)) {
    const std::string path = string_literal(args);
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (f == nullptr) throw PyError{"FileNotFoundError", "[Errno " + std::to_string(errno) + "] " + std::strerror(errno) + ": '" + path + "'"};
    std::fclose(f);
    return;
  }
  if (call_args(stmt, "__probe_write__", args)) {
    const std::string path = string_literal(args);
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (f == nullptr) throw PyError{"PermissionError", "[Errno " + std::to_string(errno) + "] " + std::strerror(errno) + ": '" + path + "'"};
    std::fclose(f);
    return;
  }
  if (call_args(stmt, "__probe_connect__", args)) {
    const std::string host = string_literal(args.substr(0, args.find(',')));
    const int port = std::stoi(args.substr(args.find(',') + 1));
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw PyError{"OSError", std::string("[Errno ") + std::to_string(errno) + "] " + std::strerror(errno)};
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    ::inet_pton(AF_INET, host.c_str(), &addr.sin_addr);
    const int rc = ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    const int err = errno;
    ::close(fd);
    if (rc != 0) throw PyError{"OSError", std::string("[Errno ") + std::to_string(err) + "] " + std::strerror(err)};
    return;
  }
  if (stmt == "__flood__()") {
    const std::string chunk(64 * 1024, 'x');
    for (int i = 0; i < 32; ++i) std::cout << chunk;
    std::cout << std::endl;
    while (true) ::usleep(100000);
  }
  if (stmt == "__garbage__()") {
    std::cout << "this is not json" << std::endl;
    while (true) ::usleep(100000);
  }
  if (stmt == "__double_request__()") {
    std::cout << json{{"id", next_id++}, {"method", "open_gripper"}, {"params", json::object()}}.dump() << "\n"
              << json{{"id", next_id++}, {"method", "close_gripper"}, {"params", json::object()}}.dump() << std::endl;
    while (true) ::usleep(100000);
  }
  if (stmt == "__exit__()") std::exit(4);

  // Assignments.
  const auto eq = stmt.find('=');
  if (eq != std::string::npos && eq > 0 && stmt[eq - 1] != '=' && (eq + 1 >= stmt.size() || stmt[eq + 1] != '=')) {
    std::vector<std::string> targets;
    std::stringstream lhs(stmt.substr(0, eq));
    for (std::string t; std::getline(lhs, t, ',');) targets.push_back(trim(t));
    const std::string rhs = trim(stmt.substr(eq + 1));
    Value value;
    if (call_args(rhs, "detect_object", args)) {
      const json r = call("detect_object", {{"object", string_literal(args)}});
      value = Value::list({from_json(r.at("position")), from_json(r.at("orientation")), from_json(r.at("dimensions"))});
    } else {
      value = Expr(rhs).parse_all();
    }
    if (targets.size() == 1) {
      vars[targets[0]] = value;
      return;
    }
    const auto& items = value.items();
    if (items.size() != targets.size()) throw PyError{"ValueError", "wrong number of values to unpack"};
    for (std::size_t i = 0; i < targets.size(); ++i) vars[targets[i]] = items[i];
    return;
  }
  Expr(stmt).parse_all();
}

}  // namespace

int main() {
  std::string line;
  if (!std::getline(std::cin, line)) return 3;
  const json load = json::parse(line);
  if (load.value("method", "") != "load_program") return 2;
  const std::string code = load["params"].value("code", "");

  std::vector<std::string> lines;
  std::stringstream in(code);
  for (std::string l; std::getline(in, l);) lines.push_back(l);

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string stmt = trim(lines[i]);
    if (stmt.empty() || stmt[0] == '#' || starts_with(stmt, "import ") || starts_with(stmt, "from ")) continue;
    try {
      execute(stmt);
    } catch (const PyError& e) {
      std::ostringstream tb;
      tb << "Traceback (most recent call last):\n"
         << "  File \"<generated>\", line " << i + 1 << ", in <module>\n"
         << "    " << stmt << "\n"
         << e.type << ": " << e.message;
      std::cout << json{{"id", -1}, {"event", "exception"}, {"traceback", tb.str()}}.dump() << std::endl;
      return 1;
    }
  }
  std::cout << json{{"id", -1}, {"event", "completed"}}.dump() << std::endl;
  return 0;
}
