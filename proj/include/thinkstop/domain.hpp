#pragma once

#include "thinkstop/tokenizer.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace thinkstop {

/// Arithmetic operation of a seed task. Serialized as "+", "-", "*", "/".
enum class OperationType { Add, Sub, Mul, Div };

inline constexpr OperationType kAllOperations[] = {OperationType::Add, OperationType::Sub,
                                                   OperationType::Mul, OperationType::Div};

std::string_view symbol(OperationType op);
/// Accepts the file symbols and the names add/sub/mul/div.
std::optional<OperationType> parse_operation(std::string_view text);

/// Label used for imported prompts that have no arithmetic operation.
inline constexpr std::string_view kBaselineOp = "baseline";

struct SeedTask {
  OperationType op = OperationType::Add;
  std::int64_t a = 0;
  std::int64_t b = 0;
  std::string rendered;
  std::string template_version = "v1";

  bool operator==(const SeedTask&) const = default;
};

/// Reasoning tokens harvested from the target, usable as an attack prompt.
///
/// `op` is empty for imported baseline prompts; those usually have no seed either.
/// Unknown JSON fields read from disk are kept in `extra` and written back unchanged.
struct AttackPrompt {
  std::string id;
  std::string text;
  std::optional<OperationType> op;
  std::optional<SeedTask> seed;
  std::uint64_t token_count = 0;
  std::string tokenizer_id;
  std::uint32_t search_calls_used = 1;
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const AttackPrompt&) const = default;
};

/// Content-addressed id: hash of text, op and seed.
std::string make_prompt_id(std::string_view text, const std::optional<OperationType>& op,
                           const std::optional<SeedTask>& seed);

AttackPrompt make_attack_prompt(std::string text, std::optional<OperationType> op,
                                std::optional<SeedTask> seed, const Tokenizer& tokenizer,
                                std::uint32_t search_calls_used);

struct ModelResponse {
  std::optional<std::string> reasoning;
  std::optional<std::string> content;
  std::string raw;

  bool operator==(const ModelResponse&) const = default;
};

/// The empty final answer: content absent, empty, or whitespace only.
bool is_empty_answer(const std::optional<std::string>& content);

enum class Approach { Normal, Prefix1, Prefix2, Prefix3 };

std::string_view to_string(Approach approach);
std::optional<Approach> parse_approach(std::string_view text);
inline bool is_prefix_approach(Approach a) { return a != Approach::Normal; }

inline constexpr std::string_view kDefaultSpecialToken = "<|end_of_thinking|>";

struct EmptyAnswer {
  bool operator==(const EmptyAnswer&) const = default;
};
struct NormalAnswer {
  bool operator==(const NormalAnswer&) const = default;
};
/// Response content contained the special token; text around its first occurrence,
/// each side trimmed of surrounding whitespace.
struct SpecialTokenAnswer {
  std::string pre_text;
  std::string post_text;
  bool operator==(const SpecialTokenAnswer&) const = default;
};
/// The request failed after client retries.
struct TrialError {
  std::string message;
  bool operator==(const TrialError&) const = default;
};

using TrialOutcome = std::variant<EmptyAnswer, NormalAnswer, SpecialTokenAnswer, TrialError>;

std::string_view outcome_kind(const TrialOutcome& outcome);
inline bool is_success(const TrialOutcome& o) { return std::holds_alternative<EmptyAnswer>(o); }
inline bool is_error(const TrialOutcome& o) { return std::holds_alternative<TrialError>(o); }

struct AttackTrial {
  std::string prompt_id;
  std::uint32_t trial_index = 0;
  Approach approach = Approach::Normal;
  TrialOutcome outcome = NormalAnswer{};
  double latency_ms = 0.0;
  std::string request_digest;

  bool operator==(const AttackTrial&) const = default;
};

struct Violation {
  std::string field;
  std::string message;
};

struct ValidationResult {
  std::vector<Violation> violations;

  bool ok() const noexcept { return violations.empty(); }
  bool has(std::string_view field) const;
  void add(std::string field, std::string message);
  std::string summary() const;
};

ValidationResult validate_record(const SeedTask& seed);
/// Recounts tokens when `tokenizer` is given and matches the prompt's tokenizer id, or
/// when the prompt uses the built-in default tokenizer.
ValidationResult validate_record(const AttackPrompt& prompt, const Tokenizer* tokenizer = nullptr);
ValidationResult validate_record(const AttackTrial& trial);

// nlohmann/json ADL hooks.
void to_json(nlohmann::json& j, OperationType op);
void from_json(const nlohmann::json& j, OperationType& op);
void to_json(nlohmann::json& j, Approach a);
void from_json(const nlohmann::json& j, Approach& a);
void to_json(nlohmann::json& j, const SeedTask& s);
void from_json(const nlohmann::json& j, SeedTask& s);
void to_json(nlohmann::json& j, const AttackPrompt& p);
void from_json(const nlohmann::json& j, AttackPrompt& p);
void to_json(nlohmann::json& j, const ModelResponse& r);
void from_json(const nlohmann::json& j, ModelResponse& r);
void to_json(nlohmann::json& j, const TrialOutcome& o);
void from_json(const nlohmann::json& j, TrialOutcome& o);
void to_json(nlohmann::json& j, const AttackTrial& t);
void from_json(const nlohmann::json& j, AttackTrial& t);

// Small string helpers shared across modules.
std::string_view trim(std::string_view s);
std::string group_thousands(std::int64_t value);

}  // namespace thinkstop
