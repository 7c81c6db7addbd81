#pragma once

#include "thinkstop/client.hpp"
#include "thinkstop/domain.hpp"
#include "thinkstop/tokenizer.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace thinkstop {

/// Worked example shown to the compressor: `original` (M) and its compression (N).
class ExamplePair {
 public:
  /// Throws ConfigError if either text is empty.
  ExamplePair(std::string version, std::string original, std::string compressed);

  /// The multiplication pair shipped as "mul-v1" (also in assets/compression/mul-v1.json).
  static ExamplePair builtin();
  /// Reads {"version": ..., "M": ..., "N": ...}.
  static ExamplePair load(const std::filesystem::path& path);

  const std::string& version() const noexcept { return version_; }
  const std::string& original() const noexcept { return original_; }
  const std::string& compressed() const noexcept { return compressed_; }

  bool operator==(const ExamplePair&) const = default;

 private:
  std::string version_;
  std::string original_;
  std::string compressed_;
};

struct CompressionPolicy {
  double target_ratio = 0.70;
  double accept_lo = 0.50;
  double accept_hi = 0.90;
  std::uint32_t max_attempts = 4;
  Tokenizer tokenizer;
  ExamplePair example = ExamplePair::builtin();
  /// Replaces `example` for prompts of the given operation.
  std::map<OperationType, ExamplePair> per_op_examples;

  const ExamplePair& example_for(const std::optional<OperationType>& op) const;
};

ValidationResult validate_record(const CompressionPolicy& policy);

/// System message: the compression instruction with the target percentage, the M/N
/// pair, and the closing length reminder. User message: `original`, byte for byte.
ChatRequest build_compression_prompt(const CompressionPolicy& policy, std::string_view original,
                                     const std::optional<OperationType>& op = std::nullopt);

enum class Verdict { Accept, TooShort, TooLong, Error };

std::string_view to_string(Verdict v);

/// Accept iff lo <= token_c / token_o <= hi. Throws DomainError when token_o is 0.
Verdict verify_length(const CompressionPolicy& policy, std::uint64_t token_o, std::uint64_t token_c);

struct CompressionAttempt {
  std::string output_text;
  double ratio = 0.0;
  Verdict verdict = Verdict::Error;
  std::uint64_t token_count = 0;
  /// Set for Error verdicts.
  std::string error;

  bool operator==(const CompressionAttempt&) const = default;
};

struct CompressionRecord {
  std::string prompt_id;
  std::uint64_t token_o = 0;
  std::uint64_t token_c = 0;
  std::vector<CompressionAttempt> attempts;
  std::string final_text;
  bool fell_back = false;
  std::string tokenizer_id;

  bool operator==(const CompressionRecord&) const = default;
};

ValidationResult validate_record(const CompressionRecord& record);

/// Up to policy.max_attempts compressor calls, each resending the identical request;
/// the first accepted output wins. Without one, the original text is kept
/// (fell_back). Compressor failures are recorded as Error attempts.
CompressionRecord compress_with_verification(const CompressionPolicy& policy, const AttackPrompt& prompt,
                                             const ChatClient& compressor);

/// One record per prompt, in dataset order. A failure on one prompt never aborts the
/// batch.
std::vector<CompressionRecord> compress_dataset(const CompressionPolicy& policy,
                                                const std::vector<AttackPrompt>& dataset,
                                                const ChatClient& compressor, std::size_t max_parallel = 1);

/// The prompt carrying the record's final text, recounted under `tokenizer`, with
/// extra.compressed_from naming the source prompt id.
AttackPrompt compressed_prompt(const AttackPrompt& source, const CompressionRecord& record,
                               const Tokenizer& tokenizer);

void to_json(nlohmann::json& j, const CompressionAttempt& a);
void from_json(const nlohmann::json& j, CompressionAttempt& a);
void to_json(nlohmann::json& j, const CompressionRecord& r);
void from_json(const nlohmann::json& j, CompressionRecord& r);

}  // namespace thinkstop
