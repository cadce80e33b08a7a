#include "trajgen/prompt.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>

#include "trajgen/errors.hpp"

#ifndef TRAJGEN_PROMPTS_DIR
#define TRAJGEN_PROMPTS_DIR "prompts"
#endif

namespace trajgen {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, kAllPromptFlags.size()> kFlagNames{
    "step_by_step_plan",     "gripper_contact_step",   "function_documentation",
    "reusable_functions",    "numbered_step_variables", "collision_avoidance",
    "clear_objects_phrase",  "trajectory_shape_description", "object_part_description",
};

constexpr std::string_view kClearPlaceholder = "{{clear_objects_phrase}}";

std::string trim_right(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  return s;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

std::string wrap(std::string_view name, std::string_view body) {
  return section_begin(name) + "\n" + std::string(body) + "\n" + section_end(name);
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string_view flag_name(PromptFlag flag) { return kFlagNames[static_cast<std::size_t>(flag)]; }

PromptFlag flag_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kFlagNames.size(); ++i) {
    if (kFlagNames[i] == name) return kAllPromptFlags[i];
  }
  throw ConfigError("unknown prompt flag: " + std::string(name));
}

PromptConfig PromptConfig::without(PromptFlag f) const {
  PromptConfig out = *this;
  out.set(f, false);
  if (f == PromptFlag::CollisionAvoidance) out.set(PromptFlag::ClearObjectsPhrase, false);
  return out;
}

void PromptConfig::validate() const {
  if (enabled(PromptFlag::ClearObjectsPhrase) && !enabled(PromptFlag::CollisionAvoidance)) {
    throw ConfigError("clear_objects_phrase requires collision_avoidance");
  }
}

std::vector<std::string> PromptConfig::disabled_names() const {
  std::vector<std::string> out;
  for (auto f : kAllPromptFlags) {
    if (!enabled(f)) out.emplace_back(flag_name(f));
  }
  return out;
}

// ---------------------------------------------------------------------------

PromptLibrary PromptLibrary::load(const fs::path& dir) {
  PromptLibrary lib;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw ConfigError("prompts directory not found: " + dir.string());
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    lib.texts_[entry.path().stem().string()] = trim_right(ss.str());
  }
  std::vector<std::string> required = {"frame",
                                       "workspace",
                                       "api",
                                       "output_code",
                                       "output_numeric",
                                       "gripper_explicit_code",
                                       "gripper_binary_code",
                                       "gripper_explicit_numeric",
                                       "gripper_binary_numeric",
                                       "success",
                                       "summary_request"};
  for (auto name : kFlagNames) required.emplace_back(name);
  for (const auto& name : required) {
    if (!lib.has(name)) throw ConfigError("prompt component missing: " + (dir / (name + ".txt")).string());
  }
  if (lib.text("collision_avoidance").find(kClearPlaceholder) == std::string::npos) {
    throw ConfigError("collision_avoidance.txt must contain " + std::string(kClearPlaceholder));
  }
  return lib;
}

const std::string& PromptLibrary::text(std::string_view key) const {
  const auto it = texts_.find(key);
  if (it == texts_.end()) throw ConfigError("prompt component missing: " + std::string(key));
  return it->second;
}

bool PromptLibrary::has(std::string_view key) const { return texts_.find(key) != texts_.end(); }

fs::path default_prompts_dir() {
  std::error_code ec;
  if (fs::is_directory("prompts", ec)) return "prompts";
  return TRAJGEN_PROMPTS_DIR;
}

std::string section_begin(std::string_view name) { return "<!-- begin " + std::string(name) + " -->"; }
std::string section_end(std::string_view name) { return "<!-- end " + std::string(name) + " -->"; }

std::string build_main_prompt(const PromptLibrary& lib, const PromptConfig& cfg) {
  cfg.validate();
  const std::string mode(output_mode_name(cfg.output_mode));
  const std::string gripper(gripper_mode_name(cfg.gripper_mode));

  std::vector<std::string> sections;
  sections.push_back(wrap("frame", lib.text("frame")));
  sections.push_back(wrap("workspace", lib.text("workspace")));
  sections.push_back(wrap("api", lib.text("api")));
  sections.push_back(wrap("output_format", lib.text("output_" + mode)));
  sections.push_back(wrap("gripper_actions", lib.text("gripper_" + gripper + "_" + mode)));

  for (auto flag : kAllPromptFlags) {
    if (flag == PromptFlag::ClearObjectsPhrase || !cfg.enabled(flag)) continue;
    std::string body = lib.text(flag_name(flag));
    if (flag == PromptFlag::CollisionAvoidance) {
      const auto pos = body.find(kClearPlaceholder);
      if (cfg.enabled(PromptFlag::ClearObjectsPhrase)) {
        body.replace(pos, kClearPlaceholder.size(), wrap("clear_objects_phrase", lib.text("clear_objects_phrase")));
      } else {
        const std::size_t start = pos > 0 && body[pos - 1] == '\n' ? pos - 1 : pos;
        body.erase(start, pos + kClearPlaceholder.size() - start);
      }
    }
    sections.push_back(wrap(flag_name(flag), body));
  }

  std::string out;
  for (const auto& s : sections) {
    if (!out.empty()) out += "\n\n";
    out += s;
  }
  return out;
}

std::optional<std::string> remove_section(std::string_view text, std::string_view name) {
  const std::string begin = section_begin(name);
  const std::string end = section_end(name);
  const auto b = text.find(begin);
  if (b == std::string_view::npos) return std::nullopt;
  const auto e = text.find(end, b);
  if (e == std::string_view::npos) return std::nullopt;
  std::size_t from = b;
  std::size_t to = e + end.size();
  if (from >= 2 && text.substr(from - 2, 2) == "\n\n") {
    from -= 2;
  } else if (from >= 1 && text[from - 1] == '\n') {
    from -= 1;
  } else if (text.substr(to, 2) == "\n\n") {
    to += 2;
  }
  std::string out(text.substr(0, from));
  out += text.substr(to);
  return out;
}

std::vector<std::string> section_names(std::string_view text) {
  static const std::regex re(R"(<!-- begin ([A-Za-z0-9_]+) -->)");
  std::vector<std::string> out;
  const std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
    out.push_back((*it)[1].str());
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  std::string s(buf);
  if (s == "-0.0000") s = "0.0000";
  return s;
}

std::string render_tracks(const ObjectTracks& tracks) {
  std::ostringstream out;
  bool first = true;
  for (const auto& [name, series] : tracks.objects) {
    if (!first) out << "\n\n";
    first = false;
    out << "Object: " << name;
    for (const auto& [tick, box] : series) {
      out << "\ntick " << tick << ": position [" << fixed4(box.position.x) << ", " << fixed4(box.position.y) << ", "
          << fixed4(box.position.z) << "], orientation " << fixed4(box.orientation) << ", dimensions ["
          << fixed4(box.dimensions.x) << ", " << fixed4(box.dimensions.y) << ", " << fixed4(box.dimensions.z) << "]";
    }
  }
  if (!tracks.gripper.empty()) {
    if (!first) out << "\n\n";
    out << "Gripper:";
    for (const auto& g : tracks.gripper) {
      out << "\ntick " << g.tick << ": position [" << fixed4(g.pose.x) << ", " << fixed4(g.pose.y) << ", "
          << fixed4(g.pose.z) << "], yaw " << fixed4(g.pose.yaw) << ", " << (g.open ? "open" : "closed");
    }
  }
  return out.str();
}

namespace {

std::string fill(std::string tmpl, std::string_view instruction, const ObjectTracks& tracks) {
  replace_all(tmpl, "{{tracks}}", render_tracks(tracks));
  replace_all(tmpl, "{{instruction}}", instruction);
  return tmpl;
}

}  // namespace

std::string build_success_prompt(const PromptLibrary& lib, std::string_view instruction, const ObjectTracks& tracks) {
  return fill(lib.text("success"), instruction, tracks);
}

std::string build_summary_request(const PromptLibrary& lib, std::string_view instruction, const ObjectTracks& tracks) {
  return fill(lib.text("summary_request"), instruction, tracks);
}

std::string_view render_verdict(bool completed) { return completed ? kVerdictTrue : kVerdictFalse; }

bool parse_success_verdict(std::string_view text) {
  static const std::regex re(R"(task\s+completed\s*:\s*(true|false))", std::regex::icase);
  const std::string s(text);
  std::optional<bool> verdict;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
    verdict = lower((*it)[1].str()) == "true";
  }
  if (!verdict) {
    throw VerdictUnparseable("no final line of the form " + std::string(kVerdictTrue) + " or " +
                             std::string(kVerdictFalse));
  }
  return *verdict;
}

std::string verdict_reminder() {
  return "Please end your reply with a final line that reads exactly " + std::string(kVerdictTrue) + " or " +
         std::string(kVerdictFalse) + ".";
}

std::string cap_words(std::string_view text, std::size_t cap) {
  std::istringstream in{std::string(text)};
  std::string out;
  std::size_t n = 0;
  for (std::string word; n < cap && in >> word; ++n) {
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

std::string PromptBundle::render_instruction() const {
  std::string out = "Task instruction: " + instruction;
  if (summary) {
    out += "\n\n" + wrap("replan_summary", "Summary of the previous attempt, which failed:\n" + *summary);
  }
  return out;
}

std::string PromptBundle::render() const { return main_prompt + "\n\n" + render_instruction(); }

std::vector<std::string> find_phrases(std::string_view text, const std::vector<std::string>& phrases) {
  const std::string hay = lower(text);
  const auto word_char = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  std::vector<std::string> found;
  for (const auto& phrase : phrases) {
    const std::string needle = lower(phrase);
    if (needle.empty()) continue;
    for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) {
      const bool left = pos == 0 || !word_char(hay[pos - 1]);
      const auto end = pos + needle.size();
      const bool right = end >= hay.size() || !word_char(hay[end]);
      if (left && right) {
        found.push_back(phrase);
        break;
      }
    }
  }
  return found;
}

}  // namespace trajgen
