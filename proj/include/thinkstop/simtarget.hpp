#pragma once

#include "thinkstop/client.hpp"
#include "thinkstop/domain.hpp"
#include "thinkstop/tokenizer.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace thinkstop {

struct OpProfile {
  /// Probability that reasoning tokens fed back as input produce an empty answer.
  double trigger_prob = 0.0;
  /// Probability that a prefix-2/3 request emits the special token.
  double special_token_prob = 0.0;

  bool operator==(const OpProfile&) const = default;
};

enum class AnswerMode { ExactArithmetic, Canned };

/// Behaviour of the simulated reasoning model. All numbers are synthetic calibration.
struct SimBehavior {
  std::string label = "synthetic";
  std::array<OpProfile, 4> ops{};  // indexed by OperationType
  /// Used when a reasoning text names no recognizable operation (e.g. word problems).
  OpProfile fallback{};
  bool prefix1_normal = true;
  std::uint64_t rng_seed = 0;
  std::string special_token{kDefaultSpecialToken};
  AnswerMode answer_mode = AnswerMode::ExactArithmetic;
  std::string canned_answer = "The answer is 42.";
  std::vector<std::string> reflection_phrases = {"Let me think", "feel confident", "Let me check",
                                                 "Let me verify", "Hmm", "Wait"};
  /// Compressor mode: requests carrying the compression instruction get back
  /// floor(ratio * tokens) tokens of their user text (the opening, "...", and up to 48
  /// closing tokens). Ratios >= 1 echo the text unchanged.
  double compress_ratio = 0.6;
  TokenizerSpec compress_tokenizer{};
  bool supports_prefix = true;
  std::string model_name = "sim-reasoner";

  OpProfile& profile(OperationType op) { return ops[static_cast<std::size_t>(op)]; }
  const OpProfile& profile(OperationType op) const { return ops[static_cast<std::size_t>(op)]; }

  /// Shipped default: add/sub trigger more often than mul/div; addition emits the
  /// special token least often.
  static SimBehavior default_profile();
  /// Same probabilities for every operation and the fallback.
  static SimBehavior uniform(double trigger_prob, double special_token_prob = 0.0);
  /// Names: "default", "always-empty", "never-empty".
  static std::optional<SimBehavior> builtin(std::string_view name);

  bool operator==(const SimBehavior&) const = default;
};

ValidationResult validate_record(const SimBehavior& behavior);

void to_json(nlohmann::json& j, const OpProfile& p);
void from_json(const nlohmann::json& j, OpProfile& p);
void to_json(nlohmann::json& j, const SimBehavior& b);
void from_json(const nlohmann::json& j, SimBehavior& b);

/// Parses a behaviour profile. Throws ConfigError with "<source>:<line>:<column>" on
/// malformed JSON, or naming the offending field on schema violations.
SimBehavior parse_profile(std::string_view text, const std::string& source_name);
SimBehavior load_profile(const std::filesystem::path& path);

/// True when `text` looks like harvested reasoning tokens: it holds a \boxed{...}
/// result and at least one reflection phrase.
bool looks_like_reasoning(std::string_view text, const std::vector<std::string>& reflection_phrases);

/// Operation named by a reasoning text ("add", "subtract", "multiply", "divide"); the
/// earliest mention wins.
std::optional<OperationType> detect_operation(std::string_view text);

/// Exact result as printed by the simulator: integers for + - *, and for / the quotient
/// with up to six decimals (rounded half-up, trailing zeros dropped).
std::string exact_answer(OperationType op, std::int64_t a, std::int64_t b);

/// Which request shape the simulator recognized.
enum class SimRoute { Seed, Reasoning, Prefix1, PrefixReasoning, Compression, Other };

struct SimLogEntry {
  std::uint64_t seq = 0;
  std::string request_digest;
  std::uint64_t occurrence = 0;
  SimRoute route = SimRoute::Other;
  int status = 200;
  std::string outcome;  // empty | normal | special_token | error
};

void to_json(nlohmann::json& j, const SimLogEntry& e);

struct SimReply {
  int status = 200;
  std::string body;
};

/// In-process simulated target.
///
/// Randomness for a request is drawn from a stream keyed by (rng_seed, canonical
/// request digest, number of earlier identical requests). Repeating a request yields a
/// fresh draw; distinct requests do not perturb each other, so results do not depend on
/// the interleaving of concurrent callers.
class SimTarget {
 public:
  explicit SimTarget(SimBehavior behavior);

  /// Wire-level entry point shared by the HTTP service and the in-process transport.
  SimReply handle(std::string_view body);
  /// Typed entry point; throws ProtocolError on a malformed request.
  ModelResponse respond(const ChatRequest& request);

  const SimBehavior& behavior() const noexcept { return behavior_; }
  std::vector<SimLogEntry> request_log() const;
  void write_log(const std::filesystem::path& path) const;

 private:
  struct Generated {
    SimRoute route;
    std::optional<std::string> reasoning;
    std::optional<std::string> content;
  };

  Generated generate(const ChatRequest& request, std::uint64_t stream_seed) const;
  std::string compress_text(const std::string& text) const;
  std::string render(const ChatRequest& request, const Generated& g, const std::string& digest) const;

  SimBehavior behavior_;
  Tokenizer compress_tokenizer_;
  mutable std::mutex mutex_;
  std::map<std::string, std::uint64_t> occurrences_;
  std::vector<SimLogEntry> log_;
};

/// Transport that hands request bodies straight to a SimTarget.
class SimTransport : public Transport {
 public:
  explicit SimTransport(std::shared_ptr<SimTarget> target) : target_(std::move(target)) {}

  HttpReply post(const std::string& path, const std::string& body, const Headers& headers) override;
  HttpReply get(const std::string& path) override;

  SimTarget& target() noexcept { return *target_; }

 private:
  std::shared_ptr<SimTarget> target_;
};

/// The simulator as an HTTP service: POST /chat/completions (also /v1/chat/completions),
/// GET /health. Stopping drains in-flight requests.
class SimServer {
 public:
  /// Port 0 binds an ephemeral port. Throws ConfigError when the address cannot be bound.
  static std::unique_ptr<SimServer> start(SimBehavior behavior, const std::string& host, int port);

  ~SimServer();
  SimServer(const SimServer&) = delete;
  SimServer& operator=(const SimServer&) = delete;

  int port() const noexcept { return port_; }
  std::string base_url() const;
  SimTarget& target() noexcept { return *target_; }
  void stop();

 private:
  struct Impl;
  SimServer();

  std::unique_ptr<Impl> impl_;
  std::shared_ptr<SimTarget> target_;
  int port_ = 0;
};

}  // namespace thinkstop
