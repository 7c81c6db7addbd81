#pragma once

#include "thinkstop/domain.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace thinkstop {

/// Where to send chat-completion requests. API keys are read from the environment
/// variable named by `api_key_env` at call time and are never serialized.
struct EndpointDescriptor {
  std::string base_url;
  std::string api_key_env;
  std::string model_name;
  std::uint32_t timeout_ms = 120'000;
  std::uint32_t max_retries = 2;
  bool supports_prefix = false;
  /// First retry delay; doubles per retry, capped at 8 s.
  std::uint32_t retry_backoff_ms = 500;
  std::optional<double> temperature;

  bool operator==(const EndpointDescriptor&) const = default;
};

enum class Role { System, User, Assistant };

std::string_view to_string(Role role);

struct ChatMessage {
  Role role = Role::User;
  std::string content;
  std::optional<bool> prefix;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  std::string model_name;
  std::optional<double> temperature;

  bool operator==(const ChatRequest&) const = default;
};

/// Checks message roles and prefix placement. A prefix flag is legal only on the final
/// message, only for the assistant role, and only when `supports_prefix` is set.
ValidationResult validate_record(const ChatRequest& request, bool supports_prefix);

/// Separator between a carrier prompt and the attack text in Normal mode.
inline constexpr std::string_view kCarrierSeparator = "\n";

/// Lays out the attack text according to the approach:
///   Normal  -> [user: carrier + "\n" + text]  (just text without a carrier)
///   Prefix1 -> [user: text, assistant(prefix): " "]
///   Prefix2 -> [user: "",   assistant(prefix): text]
///   Prefix3 -> [user: text, assistant(prefix): text]
/// Throws CapabilityError for a prefix approach when the endpoint lacks prefix support.
ChatRequest build_request(Approach approach, std::string_view attack_text,
                          const std::optional<std::string>& carrier_prompt, const EndpointDescriptor& endpoint);

/// Canonical wire body: compact JSON, keys in lexicographic order, "prefix" only on
/// messages that carry it, "temperature" only when set.
std::string serialize_request(const ChatRequest& request);
/// Inverse of serialize_request; throws ProtocolError with a reason on malformed input.
ChatRequest parse_request(std::string_view body);

/// SHA-256 (hex) of the canonical serialization.
std::string request_digest(const ChatRequest& request);

/// Reads choices[0].message.content and choices[0].message.reasoning_content.
/// Throws ProtocolError on malformed JSON or a missing choices[0].message.
ModelResponse parse_response(std::string body);

struct HttpReply {
  int status = 0;
  std::string body;
};

/// Connection-level failure (refused, DNS, timeout). Retried by ChatClient.
class TransportFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Moves one request body to the endpoint and returns the HTTP reply. Implementations
/// must be safe to call concurrently.
class Transport {
 public:
  using Headers = std::vector<std::pair<std::string, std::string>>;

  virtual ~Transport() = default;
  virtual HttpReply post(const std::string& path, const std::string& body, const Headers& headers) = 0;
  virtual HttpReply get(const std::string& path) = 0;
};

/// HTTP(S) transport over cpp-httplib; `base_url` may carry a path prefix such as "/v1".
class HttpTransport : public Transport {
 public:
  HttpTransport(const std::string& base_url, std::chrono::milliseconds timeout);

  HttpReply post(const std::string& path, const std::string& body, const Headers& headers) override;
  HttpReply get(const std::string& path) override;

 private:
  std::string origin_;
  std::string path_prefix_;
  std::chrono::milliseconds timeout_;
};

/// Adapts a callable; convenient for tests and in-process simulators.
class FunctionTransport : public Transport {
 public:
  using Handler = std::function<HttpReply(const std::string& path, const std::string& body)>;

  explicit FunctionTransport(Handler handler) : handler_(std::move(handler)) {}

  HttpReply post(const std::string& path, const std::string& body, const Headers&) override {
    return handler_(path, body);
  }
  HttpReply get(const std::string& path) override { return handler_(path, {}); }

 private:
  Handler handler_;
};

/// Token bucket shared by every outbound call of a run.
///
/// Holds at most `burst` tokens (default max(1, rate)) and starts full. Tokens refill
/// continuously at `rate_per_sec`. acquire() takes one token, sleeping until the bucket
/// holds a whole token when it is empty.
class TokenBucket {
 public:
  explicit TokenBucket(double rate_per_sec, double burst = 0.0);

  void acquire();
  double rate() const noexcept { return rate_; }

 private:
  using Clock = std::chrono::steady_clock;

  std::mutex mutex_;
  double rate_;
  double capacity_;
  double tokens_;
  Clock::time_point last_;
};

/// Chat-completion client. Shareable across threads.
///
/// Retries transport failures and HTTP 408/429/5xx up to endpoint.max_retries times,
/// resending the identical body. Other non-2xx replies raise RemoteError at once.
class ChatClient {
 public:
  ChatClient(EndpointDescriptor endpoint, std::shared_ptr<Transport> transport,
             std::shared_ptr<TokenBucket> limiter = nullptr);

  /// Empty request.model_name is filled from the endpoint.
  ModelResponse chat(ChatRequest request) const;

  const EndpointDescriptor& endpoint() const noexcept { return endpoint_; }
  Transport& transport() const noexcept { return *transport_; }
  void set_rate_limiter(std::shared_ptr<TokenBucket> limiter) { limiter_ = std::move(limiter); }

  /// Total HTTP attempts made through this client, retries included.
  std::uint64_t attempts_made() const noexcept { return attempts_.load(); }

 private:
  EndpointDescriptor endpoint_;
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<TokenBucket> limiter_;
  mutable std::atomic<std::uint64_t> attempts_{0};
};

void to_json(nlohmann::json& j, const EndpointDescriptor& e);
void from_json(const nlohmann::json& j, EndpointDescriptor& e);

}  // namespace thinkstop
