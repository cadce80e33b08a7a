#include "trajgen/parser.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>
#include <regex>
#include <stdexcept>

#include "trajgen/errors.hpp"

namespace trajgen {

std::string_view output_mode_name(OutputMode mode) { return mode == OutputMode::Code ? "code" : "numeric"; }

std::string_view gripper_mode_name(GripperMode mode) {
  return mode == GripperMode::Explicit ? "explicit" : "binary";
}

OutputMode output_mode_from_name(std::string_view name) {
  if (name == "code") return OutputMode::Code;
  if (name == "numeric") return OutputMode::Numeric;
  throw ConfigError("unknown output mode: " + std::string(name));
}

GripperMode gripper_mode_from_name(std::string_view name) {
  if (name == "explicit") return GripperMode::Explicit;
  if (name == "binary") return GripperMode::Binary;
  throw ConfigError("unknown gripper mode: " + std::string(name));
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string_view trim_left(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  return s;
}

}  // namespace

std::vector<std::string> extract_code_blocks(std::string_view text, std::string_view language) {
  std::vector<std::string> blocks;
  bool inside = false;
  bool wanted = false;
  std::size_t opened_at = 0;
  std::string current;
  bool first_line = true;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    if (!inside) {
      const auto lead = trim_left(line);
      if (lead.substr(0, 3) == "```") {
        inside = true;
        wanted = trim(lead.substr(3)) == language;
        opened_at = line_no;
        current.clear();
        first_line = true;
      }
    } else if (trim(line) == "```") {
      inside = false;
      if (wanted) blocks.push_back(current);
    } else if (wanted) {
      if (!first_line) current.push_back('\n');
      current.append(line);
      first_line = false;
    }
    if (end == text.size()) break;
    pos = end + 1;
  }
  if (inside) {
    throw UnterminatedFence("the code block opened on line " + std::to_string(opened_at) +
                            " is never closed with a ``` line");
  }
  return blocks;
}

// ---------------------------------------------------------------------------
// Numeric trajectories

namespace {

enum class Tok { LBracket, RBracket, Comma, LParen, RParen, Number, Word, End };

struct Token {
  Tok kind;
  std::string text;
};

class Lexer {
 public:
  explicit Lexer(std::string_view s) : s_(s) {}

  Token next() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (pos_ >= s_.size()) return {Tok::End, ""};
    const char c = s_[pos_];
    switch (c) {
      case '[': ++pos_; return {Tok::LBracket, "["};
      case ']': ++pos_; return {Tok::RBracket, "]"};
      case ',': ++pos_; return {Tok::Comma, ","};
      case '(': ++pos_; return {Tok::LParen, "("};
      case ')': ++pos_; return {Tok::RParen, ")"};
      case '"':
      case '\'': {
        const auto close = s_.find(c, pos_ + 1);
        if (close == std::string_view::npos) throw MalformedTrajectory("unterminated quoted string in the trajectory");
        std::string word(s_.substr(pos_ + 1, close - pos_ - 1));
        pos_ = close + 1;
        return {Tok::Word, word};
      }
      default: break;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.') {
      const std::size_t start = pos_;
      ++pos_;
      while (pos_ < s_.size()) {
        const char d = s_[pos_];
        const bool exp_sign = (d == '-' || d == '+') && (s_[pos_ - 1] == 'e' || s_[pos_ - 1] == 'E');
        if (std::isalnum(static_cast<unsigned char>(d)) || d == '.' || d == '_' || exp_sign) {
          ++pos_;
        } else {
          break;
        }
      }
      return {Tok::Number, std::string(s_.substr(start, pos_ - start))};
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' || s_[pos_] == '.')) {
        ++pos_;
      }
      return {Tok::Word, std::string(s_.substr(start, pos_ - start))};
    }
    throw MalformedTrajectory(std::string("unexpected character '") + c + "' in the trajectory");
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
};

std::string lower(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

bool is_non_finite_word(const std::string& w) {
  const auto l = lower(w);
  for (const char* name : {"nan", "inf", "infinity", "-inf", "+inf", "math.inf", "math.nan", "float"}) {
    if (l == name) return true;
  }
  return false;
}

double parse_number(const std::string& text, std::size_t row) {
  std::string_view s = text;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  const std::string where = "row " + std::to_string(row);
  if (ec == std::errc::result_out_of_range) {
    throw BadNumber(where + ": value '" + text + "' is out of range");
  }
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    if (is_non_finite_word(text)) throw BadNumber(where + ": value '" + text + "' is not a finite number");
    throw MalformedTrajectory(where + ": '" + text + "' is not a plain number");
  }
  if (!std::isfinite(value)) throw BadNumber(where + ": value '" + text + "' is not a finite number");
  return value;
}

class TrajectoryReader {
 public:
  TrajectoryReader(std::string_view body, GripperMode mode) : lex_(body), mode_(mode) { advance(); }

  Trajectory read() {
    expect(Tok::LBracket, "the trajectory must be a list starting with '['");
    while (tok_.kind != Tok::RBracket) {
      if (tok_.kind == Tok::End) throw MalformedTrajectory("the trajectory list is missing its closing ']'");
      item();
      if (tok_.kind == Tok::Comma) {
        advance();
      } else if (tok_.kind != Tok::RBracket) {
        throw MalformedTrajectory("expected ',' or ']' after row " + std::to_string(rows_ == 0 ? 0 : rows_ - 1) +
                                  ", found '" + tok_.text + "'");
      }
    }
    advance();
    if (tok_.kind != Tok::End) {
      throw MalformedTrajectory("unexpected text after the trajectory list: '" + tok_.text + "'");
    }
    if (out_.pose_count() == 0) throw MalformedTrajectory("the trajectory contains no poses");
    return std::move(out_);
  }

 private:
  void advance() { tok_ = lex_.next(); }

  void expect(Tok kind, const std::string& message) {
    if (tok_.kind != kind) throw MalformedTrajectory(message);
    advance();
  }

  void item() {
    if (tok_.kind == Tok::LBracket) {
      row();
      return;
    }
    if (tok_.kind == Tok::Word && (tok_.text == kOpenGripperToken || tok_.text == kCloseGripperToken)) {
      if (mode_ == GripperMode::Binary) {
        throw MalformedTrajectory("'" + tok_.text +
                                  "' is not allowed in binary gripper mode; put the gripper state in the fifth value "
                                  "of each row");
      }
      const auto command = tok_.text == kOpenGripperToken ? GripperCommand::Open : GripperCommand::Close;
      advance();
      if (tok_.kind == Tok::LParen) {
        advance();
        expect(Tok::RParen, "expected ')' after the gripper command");
      }
      out_.elements.emplace_back(command);
      last_was_pose_ = false;
      return;
    }
    throw MalformedTrajectory("expected a row like [x, y, z, yaw]" +
                              std::string(mode_ == GripperMode::Explicit ? " or a gripper command" : "") +
                              ", found '" + tok_.text + "'");
  }

  void row() {
    const std::size_t index = rows_++;
    const std::size_t arity = mode_ == GripperMode::Explicit ? 4 : 5;
    advance();
    std::vector<double> values;
    while (tok_.kind != Tok::RBracket) {
      if (tok_.kind == Tok::Number) {
        values.push_back(parse_number(tok_.text, index));
      } else if (tok_.kind == Tok::Word && is_non_finite_word(tok_.text)) {
        throw BadNumber("row " + std::to_string(index) + ": value '" + tok_.text + "' is not a finite number");
      } else if (tok_.kind == Tok::End) {
        throw MalformedTrajectory("row " + std::to_string(index) + " is missing its closing ']'");
      } else {
        throw MalformedTrajectory("row " + std::to_string(index) + ": '" + tok_.text + "' is not a plain number");
      }
      advance();
      if (tok_.kind == Tok::Comma) {
        advance();
      } else if (tok_.kind != Tok::RBracket) {
        throw MalformedTrajectory("row " + std::to_string(index) + ": expected ',' or ']' but found '" + tok_.text +
                                  "'");
      }
    }
    advance();
    if (values.size() != arity) {
      throw BadArity(index, "row " + std::to_string(index) + " has " + std::to_string(values.size()) +
                                " values; expected " + std::to_string(arity) +
                                (arity == 4 ? " ([x, y, z, yaw])" : " ([x, y, z, yaw, gripper])"));
    }
    const Pose pose{values[0], values[1], values[2], wrap_angle(values[3])};
    const bool duplicate = last_was_pose_ && std::get<Pose>(out_.elements.back()) == pose;
    if (!duplicate) out_.elements.emplace_back(pose);
    last_was_pose_ = true;

    if (arity == 5) {
      const double g = values[4];
      if (g != 0.0 && g != 1.0) {
        throw MalformedTrajectory("row " + std::to_string(index) + ": the gripper value must be 0 (open) or 1 (closed)");
      }
      const bool open = g == 0.0;
      if (open != gripper_open_) {
        out_.elements.emplace_back(open ? GripperCommand::Open : GripperCommand::Close);
        gripper_open_ = open;
        last_was_pose_ = false;
      }
    }
  }

  Lexer lex_;
  GripperMode mode_;
  Token tok_{Tok::End, ""};
  Trajectory out_;
  std::size_t rows_ = 0;
  bool last_was_pose_ = false;
  bool gripper_open_ = true;
};

}  // namespace

Trajectory parse_numeric_trajectory(std::string_view text, GripperMode mode) {
  const auto open = text.find(kTrajectoryOpenTag);
  if (open == std::string_view::npos) {
    throw MissingTags("no trajectory found: put the list of poses between <trajectory> and </trajectory> tags");
  }
  const auto body_start = open + kTrajectoryOpenTag.size();
  const auto close = text.find(kTrajectoryCloseTag, body_start);
  if (close == std::string_view::npos) throw MissingTags("the <trajectory> tag is never closed with </trajectory>");
  const auto body = text.substr(body_start, close - body_start);

  static const std::regex forbidden(R"(\b(def|lambda)\b)");
  std::match_results<std::string_view::const_iterator> m;
  if (std::regex_search(body.begin(), body.end(), m, forbidden)) {
    throw ForbiddenCode("the trajectory must be a plain list of numbers without any Python functions, but it contains '" +
                        m.str(1) + "'");
  }
  return TrajectoryReader(body, mode).read();
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::invalid_argument("cannot format number");
  return std::string(buf, ptr);
}

std::string serialize_trajectory(const Trajectory& t, GripperMode mode) {
  std::string out(kTrajectoryOpenTag);
  out += "\n[\n";
  bool first = true;
  const auto emit = [&](const std::string& item) {
    if (!first) out += ",\n";
    out += "  " + item;
    first = false;
  };
  const auto row = [](const Pose& p) {
    return "[" + format_double(p.x) + ", " + format_double(p.y) + ", " + format_double(p.z) + ", " +
           format_double(p.yaw);
  };

  if (mode == GripperMode::Explicit) {
    for (const auto& e : t.elements) {
      if (const auto* p = std::get_if<Pose>(&e)) {
        emit(row(*p) + "]");
      } else {
        emit(std::string(std::get<GripperCommand>(e) == GripperCommand::Open ? kOpenGripperToken
                                                                              : kCloseGripperToken));
      }
    }
  } else {
    // Each row carries the gripper state in force after the commands that follow it.
    bool open = true;
    const Pose* pending = nullptr;
    int commands = 0;
    const auto flush = [&] {
      if (pending != nullptr) emit(row(*pending) + ", " + (open ? "0" : "1") + "]");
      pending = nullptr;
      commands = 0;
    };
    for (const auto& e : t.elements) {
      if (const auto* p = std::get_if<Pose>(&e)) {
        flush();
        pending = p;
      } else {
        if (pending == nullptr) {
          throw std::invalid_argument("binary gripper mode needs a pose before each gripper command");
        }
        if (++commands > 1) {
          throw std::invalid_argument("binary gripper mode cannot express consecutive gripper commands");
        }
        open = std::get<GripperCommand>(e) == GripperCommand::Open;
      }
    }
    flush();
  }
  out += "\n]\n";
  out += kTrajectoryCloseTag;
  return out;
}

ParsedOutput parse_output(std::string_view text, OutputMode output, GripperMode gripper) {
  try {
    if (output == OutputMode::Code) {
      auto blocks = extract_code_blocks(text);
      if (blocks.empty()) throw MissingCode("no code found: put the Python code between ```python and ``` lines");
      return CodeBlocks{std::move(blocks)};
    }
    return NumericTrajectory{parse_numeric_trajectory(text, gripper)};
  } catch (const ParseError& e) {
    return Invalid{e.what(), {}};
  }
}

std::string correction_message(std::string_view reason) {
  return "Your previous output could not be executed. Error:\n" + std::string(reason) +
         "\nPlease correct it and reply with the complete output again.";
}

ParsedOutput correction_loop(ChatBackend& llm, const OutputParser& parse, ChatHistory& history,
                             CorrectionBudget& budget, const ChatParams& params) {
  if (history.empty() || history.back().role != Role::Assistant) {
    throw std::invalid_argument("correction_loop needs a history ending with an assistant message");
  }
  ParsedOutput out = parse(history.back().content);
  while (const auto* bad = std::get_if<Invalid>(&out)) {
    if (budget.exhausted()) break;
    ++budget.used;
    history.push_back({Role::User, bad->feedback.empty() ? correction_message(bad->reason) : bad->feedback});
    history.push_back(llm.chat(history, params));
    out = parse(history.back().content);
  }
  return out;
}

std::vector<TrajectoryViolation> validate_trajectory(const Trajectory& t, const Workspace& bounds, double max_gap) {
  std::vector<TrajectoryViolation> out;
  const auto poses = t.poses();
  if (poses.empty()) {
    out.push_back({ViolationKind::Empty, 0, "the trajectory contains no poses"});
    return out;
  }
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Pose& p = poses[i];
    if (!p.is_finite() || !bounds.contains(p)) {
      out.push_back({ViolationKind::WorkspaceViolation, i,
                     "pose " + std::to_string(i) + " [" + format_double(p.x) + ", " + format_double(p.y) + ", " +
                         format_double(p.z) + "] is outside the workspace"});
    }
    if (i > 0) {
      const double gap = position_gap(poses[i - 1], p);
      if (gap > max_gap) {
        out.push_back({ViolationKind::StepTooLarge, i,
                       "poses " + std::to_string(i - 1) + " and " + std::to_string(i) + " are " + format_double(gap) +
                           " m apart; waypoints must be at most " + format_double(max_gap) + " m apart"});
      }
    }
  }
  return out;
}

}  // namespace trajgen
