#pragma once

#include "thinkstop/client.hpp"
#include "thinkstop/domain.hpp"
#include "thinkstop/fraction.hpp"
#include "thinkstop/seedgen.hpp"
#include "thinkstop/tokenizer.hpp"

#include <atomic>
#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

namespace thinkstop {

struct SearchLimits {
  /// Paired attempts on one seed before a fresh seed is drawn.
  std::uint32_t max_calls_per_seed = 4;
  /// Paired attempts allowed across a whole build_dataset run.
  std::optional<std::uint64_t> max_total_attempts;
  std::size_t max_parallel = 1;
  /// Fresh seeds one dataset slot may consume before the slot is given up.
  std::uint32_t max_seeds_per_prompt = 256;
};

ValidationResult validate_record(const SearchLimits& limits);

/// Shared attempt budget; thread-safe.
class CallBudget {
 public:
  explicit CallBudget(std::optional<std::uint64_t> limit) : limit_(limit) {}

  bool try_take();
  std::uint64_t used() const noexcept { return used_.load(); }

 private:
  std::optional<std::uint64_t> limit_;
  std::atomic<std::uint64_t> used_{0};
};

struct SearchSuccess {
  AttackPrompt prompt;
  std::uint32_t calls_used = 0;
};

struct SearchExhausted {
  /// Paired attempts made, skipped ones included.
  std::uint32_t attempts = 0;
  /// Attempts whose first call returned no reasoning tokens.
  std::uint32_t skips = 0;
  bool budget_exhausted = false;
};

using SearchOutcome = std::variant<SearchSuccess, SearchExhausted>;

/// One seed through the search loop. Each paired attempt sends the seed prompt, then
/// sends the returned reasoning tokens verbatim as the sole user message; an empty final
/// answer to the second call is a hit. An attempt whose first call yields no reasoning
/// is counted and retried. Client errors propagate.
SearchOutcome search_one(const SeedTask& seed, const ChatClient& client, const SearchLimits& limits,
                         const Tokenizer& tokenizer, CallBudget* budget = nullptr);

/// Per-dataset search statistics (the "search count" of a prompt is its
/// search_calls_used).
struct SearchStats {
  std::uint64_t prompts = 0;
  std::uint64_t total_search_count = 0;
  std::uint64_t max_search_count = 0;
  std::uint64_t total_tokens = 0;

  /// total_search_count / prompts; 0 for an empty dataset.
  Fraction average_search_count() const {
    return prompts == 0 ? Fraction{0, 1} : Fraction{total_search_count, prompts};
  }

  bool operator==(const SearchStats&) const = default;
};

SearchStats compute_search_stats(const std::vector<AttackPrompt>& prompts);

void to_json(nlohmann::json& j, const SearchStats& s);
void from_json(const nlohmann::json& j, SearchStats& s);

struct DatasetBuild {
  /// Sorted by id.
  std::vector<AttackPrompt> prompts;
  SearchStats stats;
  /// Fewer than N prompts were found (budget or per-slot seed limit reached).
  bool truncated = false;
  std::uint64_t seeds_tried = 0;
  std::uint64_t attempts = 0;
  std::uint64_t duplicates_rejected = 0;
};

/// Builds N distinct attack prompts for `op`.
///
/// Slot i draws seeds from make_rng(cfg.rng_seed, i). A slot keeps drawing fresh seeds
/// whenever a seed exhausts max_calls_per_seed or yields a text already in the dataset.
/// A prompt's search_calls_used is the number of paired attempts its slot spent,
/// including those on discarded seeds.
DatasetBuild build_dataset(const SeedConfig& cfg, OperationType op, std::size_t n, const ChatClient& client,
                           const SearchLimits& limits, const Tokenizer& tokenizer);

}  // namespace thinkstop
