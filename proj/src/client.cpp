#include "thinkstop/client.hpp"

#include "thinkstop/error.hpp"
#include "thinkstop/hash.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdlib>
#include <thread>

namespace thinkstop {

using nlohmann::json;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "?";
}

namespace {

std::optional<Role> parse_role(std::string_view s) {
  if (s == "system") return Role::System;
  if (s == "user") return Role::User;
  if (s == "assistant") return Role::Assistant;
  return std::nullopt;
}

ChatMessage prefix_message(std::string_view content) {
  return ChatMessage{Role::Assistant, std::string(content), true};
}

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

std::chrono::milliseconds retry_delay(const EndpointDescriptor& e, std::uint32_t retry_index) {
  constexpr std::uint64_t kMaxDelayMs = 8'000;
  std::uint64_t delay = e.retry_backoff_ms;
  for (std::uint32_t i = 0; i < retry_index && delay < kMaxDelayMs; ++i) delay *= 2;
  return std::chrono::milliseconds(std::min(delay, kMaxDelayMs));
}

}  // namespace

ValidationResult validate_record(const ChatRequest& request, bool supports_prefix) {
  ValidationResult r;
  if (request.messages.empty()) r.add("messages", "no messages");
  for (std::size_t i = 0; i < request.messages.size(); ++i) {
    const auto& m = request.messages[i];
    if (!m.prefix.value_or(false)) continue;
    const std::string field = "messages[" + std::to_string(i) + "].prefix";
    if (i + 1 != request.messages.size()) r.add(field, "prefix is only legal on the final message");
    if (m.role != Role::Assistant) r.add(field, "prefix is only legal on an assistant message");
    if (!supports_prefix) r.add(field, "endpoint does not support prefix completion");
  }
  return r;
}

ChatRequest build_request(Approach approach, std::string_view attack_text,
                          const std::optional<std::string>& carrier_prompt, const EndpointDescriptor& endpoint) {
  if (is_prefix_approach(approach) && !endpoint.supports_prefix) {
    throw CapabilityError("approach " + std::string(to_string(approach)) + " needs prefix completion, which " +
                          endpoint.base_url + " does not support");
  }
  ChatRequest req;
  req.model_name = endpoint.model_name;
  req.temperature = endpoint.temperature;
  switch (approach) {
    case Approach::Normal: {
      std::string user;
      if (carrier_prompt) {
        user = *carrier_prompt;
        user += kCarrierSeparator;
      }
      user += attack_text;
      req.messages.push_back({Role::User, std::move(user), std::nullopt});
      break;
    }
    case Approach::Prefix1:
      req.messages.push_back({Role::User, std::string(attack_text), std::nullopt});
      req.messages.push_back(prefix_message(" "));
      break;
    case Approach::Prefix2:
      req.messages.push_back({Role::User, std::string(), std::nullopt});
      req.messages.push_back(prefix_message(attack_text));
      break;
    case Approach::Prefix3:
      req.messages.push_back({Role::User, std::string(attack_text), std::nullopt});
      req.messages.push_back(prefix_message(attack_text));
      break;
  }
  return req;
}

std::string serialize_request(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    json msg{{"role", std::string(to_string(m.role))}, {"content", m.content}};
    if (m.prefix) msg["prefix"] = *m.prefix;
    messages.push_back(std::move(msg));
  }
  json body{{"model", request.model_name}, {"messages", std::move(messages)}};
  if (request.temperature) body["temperature"] = *request.temperature;
  return body.dump();
}

ChatRequest parse_request(std::string_view body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("request is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ProtocolError("request body must be a JSON object");
  if (!j.contains("messages")) throw ProtocolError("missing required field 'messages'");
  if (!j["messages"].is_array()) throw ProtocolError("'messages' must be an array");

  ChatRequest req;
  if (j.contains("model")) {
    if (!j["model"].is_string()) throw ProtocolError("'model' must be a string");
    req.model_name = j["model"].get<std::string>();
  }
  if (j.contains("temperature") && !j["temperature"].is_null()) {
    if (!j["temperature"].is_number()) throw ProtocolError("'temperature' must be a number");
    req.temperature = j["temperature"].get<double>();
  }
  for (std::size_t i = 0; i < j["messages"].size(); ++i) {
    const auto& m = j["messages"][i];
    const std::string where = "messages[" + std::to_string(i) + "]";
    if (!m.is_object()) throw ProtocolError(where + " must be an object");
    if (!m.contains("role") || !m["role"].is_string()) throw ProtocolError(where + ".role must be a string");
    const auto role = parse_role(m["role"].get<std::string>());
    if (!role) throw ProtocolError(where + ".role '" + m["role"].get<std::string>() + "' is not recognized");
    if (!m.contains("content") || !m["content"].is_string()) {
      throw ProtocolError(where + ".content must be a string");
    }
    ChatMessage msg{*role, m["content"].get<std::string>(), std::nullopt};
    if (m.contains("prefix")) {
      if (!m["prefix"].is_boolean()) throw ProtocolError(where + ".prefix must be a boolean");
      msg.prefix = m["prefix"].get<bool>();
    }
    req.messages.push_back(std::move(msg));
  }
  return req;
}

std::string request_digest(const ChatRequest& request) { return sha256_hex(serialize_request(request)); }

ModelResponse parse_response(std::string body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("response is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
    throw ProtocolError("response lacks choices[0]");
  }
  const auto& choice = j["choices"][0];
  if (!choice.is_object() || !choice.contains("message") || !choice["message"].is_object()) {
    throw ProtocolError("response lacks choices[0].message");
  }
  const auto& message = choice["message"];
  auto read = [&](const char* key) -> std::optional<std::string> {
    if (!message.contains(key) || message[key].is_null()) return std::nullopt;
    if (!message[key].is_string()) throw ProtocolError(std::string("choices[0].message.") + key + " is not a string");
    return message[key].get<std::string>();
  };
  ModelResponse r;
  r.content = read("content");
  r.reasoning = read("reasoning_content");
  r.raw = std::move(body);
  return r;
}

// ---------------------------------------------------------------------------

HttpTransport::HttpTransport(const std::string& base_url, std::chrono::milliseconds timeout) : timeout_(timeout) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint URL lacks a scheme: " + base_url);
  const auto path_start = base_url.find('/', scheme_end + 3);
  origin_ = base_url.substr(0, path_start);
  if (path_start != std::string::npos) path_prefix_ = base_url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

namespace {

httplib::Client make_http_client(const std::string& origin, std::chrono::milliseconds timeout) {
  httplib::Client cli(origin);
  const auto sec = static_cast<time_t>(timeout.count() / 1000);
  const auto usec = static_cast<time_t>((timeout.count() % 1000) * 1000);
  cli.set_connection_timeout(sec, usec);
  cli.set_read_timeout(sec, usec);
  cli.set_write_timeout(sec, usec);
  return cli;
}

}  // namespace

HttpReply HttpTransport::post(const std::string& path, const std::string& body, const Headers& headers) {
  auto cli = make_http_client(origin_, timeout_);
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  auto res = cli.Post(path_prefix_ + path, h, body, "application/json");
  if (!res) throw TransportFailure(origin_ + path_prefix_ + path + ": " + httplib::to_string(res.error()));
  return {res->status, res->body};
}

HttpReply HttpTransport::get(const std::string& path) {
  auto cli = make_http_client(origin_, timeout_);
  auto res = cli.Get(path_prefix_ + path);
  if (!res) throw TransportFailure(origin_ + path_prefix_ + path + ": " + httplib::to_string(res.error()));
  return {res->status, res->body};
}

// ---------------------------------------------------------------------------

TokenBucket::TokenBucket(double rate_per_sec, double burst)
    : rate_(rate_per_sec),
      capacity_(burst > 0.0 ? burst : std::max(1.0, rate_per_sec)),
      tokens_(capacity_),
      last_(Clock::now()) {
  if (!(rate_per_sec > 0.0)) throw ConfigError("rate limit must be positive");
}

void TokenBucket::acquire() {
  std::unique_lock lock(mutex_);
  while (true) {
    const auto now = Clock::now();
    tokens_ = std::min(capacity_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
    std::this_thread::sleep_for(wait);
  }
}

// ---------------------------------------------------------------------------

ChatClient::ChatClient(EndpointDescriptor endpoint, std::shared_ptr<Transport> transport,
                       std::shared_ptr<TokenBucket> limiter)
    : endpoint_(std::move(endpoint)), transport_(std::move(transport)), limiter_(std::move(limiter)) {
  if (!transport_) throw ConfigError("chat client needs a transport");
}

ModelResponse ChatClient::chat(ChatRequest request) const {
  if (request.model_name.empty()) request.model_name = endpoint_.model_name;
  if (!request.temperature) request.temperature = endpoint_.temperature;
  if (const auto check = validate_record(request, endpoint_.supports_prefix); !check.ok()) {
    if (check.summary().find("does not support prefix") != std::string::npos) throw CapabilityError(check.summary());
    throw ProtocolError("invalid request: " + check.summary());
  }
  const std::string body = serialize_request(request);

  Transport::Headers headers;
  if (!endpoint_.api_key_env.empty()) {
    if (const char* key = std::getenv(endpoint_.api_key_env.c_str()); key && *key) {
      headers.emplace_back("Authorization", std::string("Bearer ") + key);
    }
  }

  const std::uint32_t max_attempts = endpoint_.max_retries + 1;
  for (std::uint32_t attempt = 1;; ++attempt) {
    if (limiter_) limiter_->acquire();
    attempts_.fetch_add(1);
    try {
      auto reply = transport_->post("/chat/completions", body, headers);
      if (reply.status >= 200 && reply.status < 300) return parse_response(std::move(reply.body));
      if (!retryable_status(reply.status) || attempt >= max_attempts) {
        throw RemoteError(reply.status, std::move(reply.body), attempt);
      }
    } catch (const TransportFailure& e) {
      if (attempt >= max_attempts) throw TransportError(e.what(), attempt);
    }
    std::this_thread::sleep_for(retry_delay(endpoint_, attempt - 1));
  }
}

void to_json(json& j, const EndpointDescriptor& e) {
  j = json{{"base_url", e.base_url},
           {"api_key_env", e.api_key_env},
           {"model_name", e.model_name},
           {"timeout_ms", e.timeout_ms},
           {"max_retries", e.max_retries},
           {"supports_prefix", e.supports_prefix},
           {"retry_backoff_ms", e.retry_backoff_ms}};
  if (e.temperature) j["temperature"] = *e.temperature;
}

void from_json(const json& j, EndpointDescriptor& e) {
  if (j.contains("api_key") || j.contains("key") || j.contains("secret")) {
    throw ConfigError("endpoint config must not contain API keys; name an environment variable in api_key_env");
  }
  j.at("base_url").get_to(e.base_url);
  e.api_key_env = j.value("api_key_env", std::string());
  e.model_name = j.value("model_name", std::string());
  e.timeout_ms = j.value("timeout_ms", 120'000u);
  e.max_retries = j.value("max_retries", 2u);
  e.supports_prefix = j.value("supports_prefix", false);
  e.retry_backoff_ms = j.value("retry_backoff_ms", 500u);
  if (j.contains("temperature") && !j["temperature"].is_null()) e.temperature = j["temperature"].get<double>();
}

}  // namespace thinkstop
