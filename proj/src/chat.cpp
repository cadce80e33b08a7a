#include "trajgen/chat.hpp"

#include <cctype>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "trajgen/errors.hpp"

namespace trajgen {

using nlohmann::json;

std::string_view role_name(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

Role role_from_name(std::string_view name) {
  if (name == "system") return Role::System;
  if (name == "user") return Role::User;
  if (name == "assistant") return Role::Assistant;
  throw std::invalid_argument("unknown chat role: " + std::string(name));
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(ch);
    }
  }
  return out;
}

std::vector<ChatMessage> new_messages(const ChatHistory& conversation, const ChatHistory& history) {
  if (!conversation.empty() && history.size() > conversation.size() &&
      std::equal(conversation.begin(), conversation.end(), history.begin())) {
    return {history.begin() + static_cast<std::ptrdiff_t>(conversation.size()), history.end()};
  }
  return history;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Transcript

std::string Transcript::to_json() const {
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", role_name(m.role)}, {"content", m.content}});
  json doc = {{"model", model}, {"task_id", task_id}, {"created", created}, {"messages", std::move(msgs)}};
  return doc.dump(2) + "\n";
}

Transcript Transcript::from_json(std::string_view text) {
  Transcript t;
  try {
    const json doc = json::parse(text);
    t.model = doc.value("model", "");
    t.task_id = doc.value("task_id", "");
    t.created = doc.value("created", "");
    for (const auto& m : doc.at("messages")) {
      t.messages.push_back({role_from_name(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed transcript: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("malformed transcript: ") + e.what());
  }
  return t;
}

void Transcript::save(const std::filesystem::path& path) const {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open transcript for writing: " + path.string());
  out << to_json();
  out.flush();
  if (!out) throw IoError("failed writing transcript: " + path.string());
}

Transcript Transcript::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open transcript: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

bool Transcript::roles_alternate() const {
  Role expected = Role::User;
  for (const auto& m : messages) {
    if (m.role == Role::System) continue;
    if (m.role != expected) return false;
    expected = expected == Role::User ? Role::Assistant : Role::User;
  }
  return true;
}

// ---------------------------------------------------------------------------
// ChatBackend

ChatMessage ChatBackend::chat(const ChatHistory& history, const ChatParams& params) {
  if (history.empty()) throw std::invalid_argument("chat history is empty");
  for (const auto& m : history) {
    if (m.role == Role::System) continue;
    if (m.role != Role::User) throw std::invalid_argument("first non-system message must come from the user");
    break;
  }
  ++calls_;
  ChatMessage reply = do_chat(history, params);
  reply.role = Role::Assistant;
  return reply;
}

// ---------------------------------------------------------------------------
// LiveBackend

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path without trailing slash
};

Endpoint split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint ep{url.substr(0, path_start), path_start == std::string::npos ? "" : url.substr(path_start)};
  while (!ep.prefix.empty() && ep.prefix.back() == '/') ep.prefix.pop_back();
  return ep;
}

}  // namespace

LiveBackend::LiveBackend(LiveConfig config) : config_(std::move(config)) {
  if (!config_.sleep) config_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  split_url(config_.base_url);
}

ChatMessage LiveBackend::do_chat(const ChatHistory& history, const ChatParams& params) {
  const Endpoint ep = split_url(config_.base_url);
  json msgs = json::array();
  for (const auto& m : history) msgs.push_back({{"role", role_name(m.role)}, {"content", m.content}});
  const json body = {{"model", config_.model},
                     {"messages", std::move(msgs)},
                     {"temperature", params.temperature},
                     {"max_tokens", params.max_tokens}};
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  const auto secs = std::chrono::duration<double>(params.timeout_seconds);
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(secs);

  httplib::Error last_error = httplib::Error::Unknown;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      const auto& b = config_.backoff;
      config_.sleep(b.empty() ? std::chrono::milliseconds(0)
                              : b[std::min<std::size_t>(static_cast<std::size_t>(attempt - 1), b.size() - 1)]);
    }
    httplib::Client client(ep.origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto res = client.Post(ep.prefix + "/chat/completions", headers, payload, "application/json");
    if (!res) {
      last_error = res.error();
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw BackendError("chat endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    try {
      const json doc = json::parse(res->body);
      return {Role::Assistant, doc.at("choices").at(0).at("message").at("content").get<std::string>()};
    } catch (const json::exception& e) {
      throw BackendError(std::string("malformed chat completion: ") + e.what());
    }
  }
  const std::string what = httplib::to_string(last_error);
  if (last_error == httplib::Error::Read || last_error == httplib::Error::ConnectionTimeout) {
    throw BackendTimeout("chat request timed out: " + what);
  }
  throw BackendError("chat request failed: " + what);
}

// ---------------------------------------------------------------------------
// ReplayBackend

ReplayBackend::ReplayBackend(Transcript transcript, bool strict)
    : transcript_(std::move(transcript)), strict_(strict) {}

ChatMessage ReplayBackend::do_chat(const ChatHistory& history, const ChatParams&) {
  const auto& recorded = transcript_.messages;
  const auto delta = new_messages(conversation_, history);
  const auto same = [this](const ChatMessage& a, const ChatMessage& b) {
    if (a.role != b.role) return false;
    return strict_ ? a.content == b.content : normalize_whitespace(a.content) == normalize_whitespace(b.content);
  };
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const std::size_t idx = cursor_ + i;
    if (idx >= recorded.size()) throw ReplayExhausted("recording ended before request message " + std::to_string(idx));
    if (!same(delta[i], recorded[idx])) throw ReplayDivergence(idx, "request differs from recording");
  }
  const std::size_t reply_idx = cursor_ + delta.size();
  if (reply_idx >= recorded.size()) throw ReplayExhausted("no recorded reply left");
  if (recorded[reply_idx].role != Role::Assistant) {
    throw ReplayDivergence(reply_idx, "recording continues the request where a reply was expected");
  }
  cursor_ = reply_idx + 1;
  conversation_ = history;
  conversation_.push_back(recorded[reply_idx]);
  return recorded[reply_idx];
}

// ---------------------------------------------------------------------------
// ScriptedBackend

ScriptedBackend::ScriptedBackend(std::vector<std::string> responses, std::string model)
    : responses_(std::move(responses)), model_(std::move(model)) {}

ScriptedBackend::ScriptedBackend(Responder responder, std::string model)
    : responder_(std::move(responder)), model_(std::move(model)) {}

ChatMessage ScriptedBackend::do_chat(const ChatHistory& history, const ChatParams&) {
  if (responder_) return {Role::Assistant, responder_(history)};
  if (next_ >= responses_.size()) throw ReplayExhausted("scripted backend has no responses left");
  return {Role::Assistant, responses_[next_++]};
}

// ---------------------------------------------------------------------------
// RecordingBackend

RecordingBackend::RecordingBackend(ChatBackend& inner, std::string task_id, std::string created) : inner_(inner) {
  transcript_.model = inner.model_name();
  transcript_.task_id = std::move(task_id);
  transcript_.created = created.empty() ? utc_timestamp() : std::move(created);
}

ChatMessage RecordingBackend::do_chat(const ChatHistory& history, const ChatParams& params) {
  auto delta = new_messages(conversation_, history);
  ChatMessage reply = inner_.chat(history, params);
  transcript_.messages.insert(transcript_.messages.end(), delta.begin(), delta.end());
  transcript_.messages.push_back(reply);
  conversation_ = history;
  conversation_.push_back(reply);
  return reply;
}

}  // namespace trajgen
