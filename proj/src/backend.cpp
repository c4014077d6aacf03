#include "medorch/backend.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "medorch/textutil.hpp"

namespace medorch::backend {

ChatRequest ChatRequest::single_user(std::string text, std::string label) {
  ChatRequest req;
  req.messages.push_back({ChatMessage::Speaker::User, std::move(text)});
  req.turn_label = std::move(label);
  return req;
}

double SystemClock::now() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

void SystemClock::sleep(double seconds) {
  if (seconds <= 0.0) return;
  std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

double VirtualClock::now() {
  std::lock_guard lock(mutex_);
  return now_seconds_;
}

void VirtualClock::advance(double seconds) {
  std::lock_guard lock(mutex_);
  now_seconds_ += seconds;
}

ChatBackend::ChatBackend(std::string name, int retry_limit, double backoff_seconds,
                         std::shared_ptr<Clock> clock)
    : clock_(std::move(clock)),
      name_(std::move(name)),
      retry_limit_(retry_limit),
      backoff_seconds_(backoff_seconds) {
  if (!clock_) clock_ = std::make_shared<SystemClock>();
}

namespace {

bool retryable(const BackendError& e) {
  return e.kind() == "Timeout" || e.kind() == "TransportError";
}

}  // namespace

ChatResponse ChatBackend::complete(const ChatRequest& request) {
  if (request.messages.empty()) {
    throw Error("ConfigError", "empty request to backend '" + name_ + "'");
  }
  const double start = clock_->now();
  int attempt = 0;
  for (;;) {
    ++attempt;
    try {
      std::string body = send_once(request);
      ChatResponse resp;
      resp.text = std::move(body);
      resp.latency_seconds = clock_->now() - start;
      resp.attempts = attempt;
      resp.backend_name = name_;
      return resp;
    } catch (const BackendError& e) {
      if (!retryable(e) || attempt > retry_limit_) throw;
      clock_->sleep(backoff_seconds_);
    }
  }
}

ScriptedBackend::ScriptedBackend(std::string name, std::vector<ScriptRule> script,
                                 std::shared_ptr<Clock> clock, double per_call_latency_seconds,
                                 int retry_limit, double backoff_seconds)
    : ChatBackend(std::move(name), retry_limit, backoff_seconds, std::move(clock)),
      script_(script.begin(), script.end()),
      per_call_latency_seconds_(per_call_latency_seconds) {}

std::string ScriptedBackend::render_request_text(const ChatRequest& request) {
  std::string out;
  if (request.system) {
    out += *request.system;
    out += '\n';
  }
  for (const auto& message : request.messages) {
    out += message.text;
    out += '\n';
  }
  return out;
}

std::size_t ScriptedBackend::remaining_rules() const {
  std::lock_guard lock(mutex_);
  return script_.size();
}

std::string ScriptedBackend::send_once(const ChatRequest& request) {
  const std::string request_text = render_request_text(request);
  std::lock_guard lock(mutex_);
  if (script_.empty()) {
    throw BackendError("ScriptExhausted", name(),
                       "script exhausted on backend '" + name() + "'");
  }
  auto it = std::find_if(script_.begin(), script_.end(), [&](const ScriptRule& rule) {
    return !rule.match || request_text.find(*rule.match) != std::string::npos;
  });
  if (it == script_.end()) {
    throw BackendError("ScriptExhausted", name(),
                       "no script rule matches request on backend '" + name() + "'");
  }
  ScriptRule rule = *it;
  if (!rule.sticky) script_.erase(it);
  if (auto* virt = dynamic_cast<VirtualClock*>(clock_.get())) {
    virt->advance(per_call_latency_seconds_);
  }
  if (rule.fail) {
    throw BackendError("TransportError", name(),
                       "injected failure on backend '" + name() + "'");
  }
  return rule.reply;
}

LiveBackend::LiveBackend(BackendSpec spec, std::shared_ptr<Clock> clock)
    : ChatBackend(spec.name, spec.retry_limit, spec.backoff_seconds, std::move(clock)),
      spec_(std::move(spec)) {}

namespace {

// Split "https://host:port/path" into base ("scheme://host:port") and path.
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  auto scheme_end = endpoint.find("://");
  std::size_t path_start = scheme_end == std::string::npos
                               ? endpoint.find('/')
                               : endpoint.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {endpoint, "/"};
  return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

}  // namespace

std::string LiveBackend::send_once(const ChatRequest& request) {
  const char* credential = nullptr;
  if (!spec_.credential_env.empty()) {
    credential = std::getenv(spec_.credential_env.c_str());
    if (credential == nullptr || *credential == '\0') {
      throw BackendError("MissingCredential", name(),
                         "credential env var '" + spec_.credential_env +
                             "' not set for backend '" + name() + "'");
    }
  }

  nlohmann::json body;
  body["model"] = spec_.model;
  auto& messages = body["messages"] = nlohmann::json::array();
  if (request.system) {
    messages.push_back({{"role", "system"}, {"content", *request.system}});
  }
  for (const auto& message : request.messages) {
    messages.push_back(
        {{"role", message.speaker == ChatMessage::Speaker::User ? "user" : "assistant"},
         {"content", message.text}});
  }
  if (spec_.temperature) body["temperature"] = *spec_.temperature;
  if (spec_.max_tokens) body["max_tokens"] = *spec_.max_tokens;

  auto [base, path] = split_endpoint(spec_.endpoint);
  httplib::Client client(base);
  client.set_connection_timeout(std::chrono::duration<double>(spec_.timeout_seconds));
  client.set_read_timeout(std::chrono::duration<double>(spec_.timeout_seconds));
  client.set_write_timeout(std::chrono::duration<double>(spec_.timeout_seconds));
  httplib::Headers headers;
  if (credential != nullptr) {
    headers.emplace("Authorization", std::string("Bearer ") + credential);
  }

  auto result = client.Post(path, headers, body.dump(), "application/json");
  if (!result) {
    auto err = result.error();
    bool timeout = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                   err == httplib::Error::Write;
    throw BackendError(timeout ? "Timeout" : "TransportError", name(),
                       "HTTP error (" + httplib::to_string(err) + ") from backend '" + name() +
                           "'");
  }
  if (result->status < 200 || result->status >= 300) {
    throw BackendError("TransportError", name(),
                       "HTTP status " + std::to_string(result->status) + " from backend '" +
                           name() + "'");
  }
  nlohmann::json parsed = nlohmann::json::parse(result->body, nullptr, false);
  if (parsed.is_discarded() || !parsed.contains("choices") || !parsed["choices"].is_array() ||
      parsed["choices"].empty()) {
    throw BackendError("TransportError", name(),
                       "malformed completion payload from backend '" + name() + "'");
  }
  const auto& first = parsed["choices"][0];
  if (!first.contains("message") || !first["message"].contains("content") ||
      !first["message"]["content"].is_string()) {
    throw BackendError("TransportError", name(),
                       "completion payload missing message content, backend '" + name() + "'");
  }
  return first["message"]["content"].get<std::string>();
}

std::shared_ptr<ChatBackend> make_backend(const BackendSpec& spec, std::shared_ptr<Clock> clock) {
  if (spec.name.empty()) throw Error("ConfigError", "backend name must be non-empty");
  if (spec.retry_limit < 0) throw Error("ConfigError", "retry_limit must be >= 0");
  if (spec.kind == BackendSpec::Kind::Live) {
    if (spec.timeout_seconds <= 0.0) throw Error("ConfigError", "timeout_seconds must be > 0");
    if (spec.endpoint.empty()) throw Error("ConfigError", "live backend needs an endpoint");
    return std::make_shared<LiveBackend>(spec, std::move(clock));
  }
  return std::make_shared<ScriptedBackend>(spec.name, spec.script, std::move(clock),
                                           spec.latency_seconds, spec.retry_limit,
                                           spec.backoff_seconds);
}

void BackendRegistry::add(std::shared_ptr<ChatBackend> backend) {
  auto name = backend->name();
  if (!backends_.emplace(name, std::move(backend)).second) {
    throw Error("ConfigError", "backend '" + name + "' registered twice");
  }
}

bool BackendRegistry::has(std::string_view name) const {
  return backends_.find(name) != backends_.end();
}

std::shared_ptr<ChatBackend> BackendRegistry::get(std::string_view name) const {
  auto it = backends_.find(name);
  if (it == backends_.end()) {
    throw Error("ConfigError", "backend '" + std::string(name) + "' is not registered");
  }
  return it->second;
}

std::vector<std::string> BackendRegistry::names() const {
  std::vector<std::string> out;
  out.reserve(backends_.size());
  for (const auto& [name, _] : backends_) out.push_back(name);
  return out;
}

const std::vector<std::string>& route_keys() {
  static const std::vector<std::string> keys = {
      "cod.rank",
      "medagents.gather",
      "medagents.analyze",
      "medagents.summarize",
      "medagents.consult",
      "medagents.decide",
      "agentclinic.doctor",
      "agentclinic.patient",
      "agentclinic.measurement",
      "agentclinic.moderator",
  };
  return keys;
}

bool is_route_key(std::string_view key) {
  const auto& keys = route_keys();
  return std::find(keys.begin(), keys.end(), key) != keys.end();
}

void validate_route(const RouteConfig& config, const BackendRegistry& registry) {
  if (!registry.has(config.default_backend)) {
    throw Error("ConfigError", "route default backend '" + config.default_backend +
                                   "' is not registered");
  }
  for (const auto& [key, backend] : config.overrides) {
    if (!is_route_key(key)) {
      throw Error("UnknownRouteKey", "unrecognized route key '" + key + "'");
    }
    if (!registry.has(backend)) {
      throw Error("ConfigError", "route override '" + key + "' names unregistered backend '" +
                                     backend + "'");
    }
  }
}

std::shared_ptr<ChatBackend> route(const BackendRegistry& registry, const RouteConfig& config,
                                   std::string_view key) {
  if (!is_route_key(key)) {
    throw Error("UnknownRouteKey", "unrecognized route key '" + std::string(key) + "'");
  }
  for (const auto& [override_key, backend] : config.overrides) {
    if (override_key == key) return registry.get(backend);
  }
  return registry.get(config.default_backend);
}

Session::Session(const BackendRegistry& registry, const RouteConfig& route_config,
                 std::shared_ptr<Clock> clock, std::string entry_id)
    : registry_(registry), route_(route_config), clock_(std::move(clock)) {
  if (!clock_) clock_ = std::make_shared<SystemClock>();
  transcript_.entry_id = std::move(entry_id);
}

ChatResponse Session::call(std::string_view route_key, std::string_view role,
                           const ChatRequest& request) {
  auto backend = route(registry_, route_, route_key);
  transcript_.prompts.push_back(
      {std::string(role), ScriptedBackend::render_request_text(request)});
  ChatResponse response;
  try {
    response = backend->complete(request);
  } catch (BackendError& e) {
    e.set_stage(std::string(route_key));
    throw;
  }
  transcript_.events.push_back(
      {std::string(role), response.text, response.backend_name, response.latency_seconds});
  auto [it, _] = calls_.try_emplace(std::string(route_key), 0);
  ++it->second;
  ++total_calls_;
  return response;
}

void Session::note(std::string_view role, std::string_view text) {
  transcript_.events.push_back({std::string(role), std::string(text), "local", 0.0});
}

int Session::calls_for(std::string_view route_key) const {
  auto it = calls_.find(route_key);
  return it == calls_.end() ? 0 : it->second;
}

}  // namespace medorch::backend
