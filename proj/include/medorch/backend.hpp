#pragma once

#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "medorch/domain.hpp"

namespace medorch::backend {

struct ChatMessage {
  enum class Speaker { User, Assistant };
  Speaker speaker = Speaker::User;
  std::string text;
};

/// One turn against a backbone. Alternation is not required; several
/// pipelines send a single composite user message.
struct ChatRequest {
  std::optional<std::string> system;
  std::vector<ChatMessage> messages;
  std::string turn_label;  // transcript tag, e.g. "doctor" or "vote:Pathology"

  static ChatRequest single_user(std::string text, std::string label = {});
};

struct ChatResponse {
  std::string text;
  double latency_seconds = 0.0;
  int attempts = 1;
  std::string backend_name;
};

/// Backend failure; carries the backend name and, once annotated by the
/// routing layer, the stage key that issued the call.
class BackendError : public Error {
 public:
  BackendError(std::string kind, std::string backend, const std::string& message)
      : Error(std::move(kind), message), backend_(std::move(backend)) {}

  const std::string& backend() const noexcept { return backend_; }
  const std::string& stage() const noexcept { return stage_; }
  void set_stage(std::string stage) { stage_ = std::move(stage); }

 private:
  std::string backend_;
  std::string stage_;
};

/// Time source. The virtual clock makes scripted runs byte-reproducible:
/// sleeps advance it instead of blocking, and scripted calls charge their
/// configured latency against it.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() = 0;
  virtual void sleep(double seconds) = 0;
  virtual bool is_virtual() const { return false; }
};

class SystemClock : public Clock {
 public:
  double now() override;
  void sleep(double seconds) override;
};

class VirtualClock : public Clock {
 public:
  double now() override;
  void sleep(double seconds) override { advance(seconds); }
  void advance(double seconds);
  bool is_virtual() const override { return true; }

 private:
  std::mutex mutex_;
  double now_seconds_ = 0.0;
};

/// One scripted reply. Rules are consumed queue-style; a rule with a match
/// pattern only fires on requests whose rendered text contains it. Sticky
/// rules are consulted but never consumed; fail rules raise a retryable
/// transport error when they fire.
struct ScriptRule {
  std::optional<std::string> match;
  std::string reply;
  bool sticky = false;
  bool fail = false;
};

struct BackendSpec {
  enum class Kind { Scripted, Live };

  std::string name;
  Kind kind = Kind::Scripted;
  int retry_limit = 0;
  double backoff_seconds = 1.0;

  // live
  std::string endpoint;
  std::string model;
  std::string credential_env;
  double timeout_seconds = 60.0;
  std::optional<double> temperature;
  std::optional<int> max_tokens;

  // scripted
  std::vector<ScriptRule> script;
  double latency_seconds = 0.0;  // virtual seconds charged per call
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;

  /// Issue one chat completion. Latency covers the whole call including
  /// retries and backoff; attempts <= retry_limit + 1. Throws BackendError.
  ChatResponse complete(const ChatRequest& request);

  const std::string& name() const noexcept { return name_; }
  int retry_limit() const noexcept { return retry_limit_; }

 protected:
  ChatBackend(std::string name, int retry_limit, double backoff_seconds,
              std::shared_ptr<Clock> clock);

  virtual std::string send_once(const ChatRequest& request) = 0;

  std::shared_ptr<Clock> clock_;

 private:
  std::string name_;
  int retry_limit_ = 0;
  double backoff_seconds_ = 1.0;
};

/// Deterministic stand-in backbone replaying a response script.
class ScriptedBackend : public ChatBackend {
 public:
  ScriptedBackend(std::string name, std::vector<ScriptRule> script, std::shared_ptr<Clock> clock,
                  double per_call_latency_seconds = 0.0, int retry_limit = 0,
                  double backoff_seconds = 0.0);

  /// Text a match pattern is tested against: system prompt plus every
  /// message body, newline-joined.
  static std::string render_request_text(const ChatRequest& request);

  std::size_t remaining_rules() const;

 protected:
  std::string send_once(const ChatRequest& request) override;

 private:
  mutable std::mutex mutex_;
  std::deque<ScriptRule> script_;
  double per_call_latency_seconds_;
};

/// Chat-completions HTTP backend. POSTs {model, messages:[{role, content}]}
/// and reads the first choice's message content.
class LiveBackend : public ChatBackend {
 public:
  LiveBackend(BackendSpec spec, std::shared_ptr<Clock> clock);

 protected:
  std::string send_once(const ChatRequest& request) override;

 private:
  BackendSpec spec_;
};

std::shared_ptr<ChatBackend> make_backend(const BackendSpec& spec, std::shared_ptr<Clock> clock);

class BackendRegistry {
 public:
  void add(std::shared_ptr<ChatBackend> backend);
  bool has(std::string_view name) const;
  std::shared_ptr<ChatBackend> get(std::string_view name) const;  // throws ConfigError
  std::vector<std::string> names() const;

 private:
  std::map<std::string, std::shared_ptr<ChatBackend>, std::less<>> backends_;
};

/// Stage/role -> backend assignment. `name` labels the configuration in
/// reports (e.g. "o1-doctor").
struct RouteConfig {
  std::string name;
  std::string default_backend;
  std::vector<std::pair<std::string, std::string>> overrides;
};

/// The recognized routing keys, one per pipeline stage or encounter role.
const std::vector<std::string>& route_keys();
bool is_route_key(std::string_view key);

/// Reject unknown override keys and unregistered backend names.
/// Throws Error with kind UnknownRouteKey or ConfigError.
void validate_route(const RouteConfig& config, const BackendRegistry& registry);

/// Override if present, else default. Throws UnknownRouteKey.
std::shared_ptr<ChatBackend> route(const BackendRegistry& registry, const RouteConfig& config,
                                   std::string_view key);

/// Per-entry call recorder: routes each stage call, appends the response to
/// the transcript, logs the rendered prompt, and counts calls per route key.
class Session {
 public:
  Session(const BackendRegistry& registry, const RouteConfig& route_config,
          std::shared_ptr<Clock> clock, std::string entry_id = {});

  ChatResponse call(std::string_view route_key, std::string_view role, const ChatRequest& request);

  /// Append a zero-latency locally synthesized event (stored test results,
  /// tier-1 verdicts, flag notes).
  void note(std::string_view role, std::string_view text);

  Transcript& transcript() { return transcript_; }
  const Transcript& transcript() const { return transcript_; }

  int calls_for(std::string_view route_key) const;
  int total_calls() const { return total_calls_; }

  Clock& clock() { return *clock_; }
  std::shared_ptr<Clock> clock_ptr() const { return clock_; }

 private:
  const BackendRegistry& registry_;
  const RouteConfig& route_;
  std::shared_ptr<Clock> clock_;
  Transcript transcript_;
  std::map<std::string, int, std::less<>> calls_;
  int total_calls_ = 0;
};

}  // namespace medorch::backend
