#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace trajgen {

enum class Role { System, User, Assistant };

std::string_view role_name(Role role);
Role role_from_name(std::string_view name);

struct ChatMessage {
  Role role = Role::User;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

using ChatHistory = std::vector<ChatMessage>;

struct ChatParams {
  double temperature = 0.0;
  int max_tokens = 4096;
  double timeout_seconds = 120.0;
};

/// Recorded chat session: the concatenation of every exchange, each request
/// contributing only the messages not already sent in the same conversation.
struct Transcript {
  std::string model;
  std::string task_id;
  std::string created;  // ISO-8601 UTC
  std::vector<ChatMessage> messages;

  std::string to_json() const;
  static Transcript from_json(std::string_view text);
  /// Throws IoError on write failure.
  void save(const std::filesystem::path& path) const;
  static Transcript load(const std::filesystem::path& path);

  /// True when non-system roles alternate user/assistant, starting with user.
  bool roles_alternate() const;
};

/// Uniform chat-completion interface. One in-flight request per instance.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;

  /// Returns one assistant message for `history`. The history must be
  /// non-empty and its first non-system message must come from the user.
  ChatMessage chat(const ChatHistory& history, const ChatParams& params = {});

  virtual std::string model_name() const = 0;
  std::size_t calls() const { return calls_; }

 protected:
  virtual ChatMessage do_chat(const ChatHistory& history, const ChatParams& params) = 0;

 private:
  std::size_t calls_ = 0;
};

struct LiveConfig {
  std::string base_url = "http://127.0.0.1:8080/v1";
  std::string model = "gpt-4";
  std::string api_key;  // LLM_API_KEY
  int max_retries = 2;
  std::vector<std::chrono::milliseconds> backoff{std::chrono::seconds(1), std::chrono::seconds(2)};
  /// Injected for tests; defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleep;
};

/// Chat-completions over HTTP(S): POST {base_url}/chat/completions.
class LiveBackend final : public ChatBackend {
 public:
  explicit LiveBackend(LiveConfig config);
  std::string model_name() const override { return config_.model; }

 protected:
  ChatMessage do_chat(const ChatHistory& history, const ChatParams& params) override;

 private:
  LiveConfig config_;
};

/// Replays a transcript, checking each request against the recording.
class ReplayBackend final : public ChatBackend {
 public:
  explicit ReplayBackend(Transcript transcript, bool strict = false);
  std::string model_name() const override { return transcript_.model; }
  std::size_t cursor() const { return cursor_; }

 protected:
  ChatMessage do_chat(const ChatHistory& history, const ChatParams& params) override;

 private:
  Transcript transcript_;
  bool strict_;
  std::size_t cursor_ = 0;
  ChatHistory conversation_;
};

/// Returns programmed responses: a fixed list, or a responder computed from
/// the request history.
class ScriptedBackend final : public ChatBackend {
 public:
  using Responder = std::function<std::string(const ChatHistory&)>;

  explicit ScriptedBackend(std::vector<std::string> responses, std::string model = "scripted");
  explicit ScriptedBackend(Responder responder, std::string model = "scripted");
  std::string model_name() const override { return model_; }

 protected:
  ChatMessage do_chat(const ChatHistory& history, const ChatParams& params) override;

 private:
  std::vector<std::string> responses_;
  Responder responder_;
  std::string model_;
  std::size_t next_ = 0;
};

/// Forwards to another backend and records the session as a Transcript.
class RecordingBackend final : public ChatBackend {
 public:
  explicit RecordingBackend(ChatBackend& inner, std::string task_id = {}, std::string created = {});
  std::string model_name() const override { return inner_.model_name(); }
  const Transcript& transcript() const { return transcript_; }

 protected:
  ChatMessage do_chat(const ChatHistory& history, const ChatParams& params) override;

 private:
  ChatBackend& inner_;
  Transcript transcript_;
  ChatHistory conversation_;
};

/// Collapses runs of whitespace to one space and trims both ends.
std::string normalize_whitespace(std::string_view text);

/// Messages of `history` that extend `conversation`; the whole history when
/// it starts a new conversation.
std::vector<ChatMessage> new_messages(const ChatHistory& conversation, const ChatHistory& history);

std::string utc_timestamp();

}  // namespace trajgen
