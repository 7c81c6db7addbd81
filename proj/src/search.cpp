#include "thinkstop/search.hpp"

#include "thinkstop/error.hpp"
#include "thinkstop/parallel.hpp"

#include <algorithm>
#include <set>

namespace thinkstop {

ValidationResult validate_record(const SearchLimits& limits) {
  ValidationResult r;
  if (limits.max_calls_per_seed < 1) r.add("max_calls_per_seed", "must be at least 1");
  if (limits.max_parallel < 1) r.add("max_parallel", "must be at least 1");
  if (limits.max_seeds_per_prompt < 1) r.add("max_seeds_per_prompt", "must be at least 1");
  return r;
}

bool CallBudget::try_take() {
  if (!limit_) {
    used_.fetch_add(1);
    return true;
  }
  auto cur = used_.load();
  while (cur < *limit_) {
    if (used_.compare_exchange_weak(cur, cur + 1)) return true;
  }
  return false;
}

namespace {

ChatRequest user_only(std::string text) {
  ChatRequest req;
  req.messages.push_back(ChatMessage{Role::User, std::move(text), std::nullopt});
  return req;
}

}  // namespace

SearchOutcome search_one(const SeedTask& seed, const ChatClient& client, const SearchLimits& limits,
                         const Tokenizer& tokenizer, CallBudget* budget) {
  if (limits.max_calls_per_seed < 1) throw ConfigError("max_calls_per_seed must be at least 1");
  SearchExhausted tally;
  while (tally.attempts < limits.max_calls_per_seed) {
    if (budget && !budget->try_take()) {
      tally.budget_exhausted = true;
      return tally;
    }
    ++tally.attempts;
    const auto first = client.chat(user_only(seed.rendered));
    if (!first.reasoning || trim(*first.reasoning).empty()) {
      ++tally.skips;
      continue;
    }
    const auto second = client.chat(user_only(*first.reasoning));
    if (is_empty_answer(second.content)) {
      return SearchSuccess{make_attack_prompt(*first.reasoning, seed.op, seed, tokenizer, tally.attempts),
                           tally.attempts};
    }
  }
  return tally;
}

SearchStats compute_search_stats(const std::vector<AttackPrompt>& prompts) {
  SearchStats s;
  for (const auto& p : prompts) {
    ++s.prompts;
    s.total_search_count += p.search_calls_used;
    s.max_search_count = std::max<std::uint64_t>(s.max_search_count, p.search_calls_used);
    s.total_tokens += p.token_count;
  }
  return s;
}

void to_json(nlohmann::json& j, const SearchStats& s) {
  j = nlohmann::json{{"prompts", s.prompts},
                     {"total_search_count", s.total_search_count},
                     {"max_search_count", s.max_search_count},
                     {"total_tokens", s.total_tokens}};
}

void from_json(const nlohmann::json& j, SearchStats& s) {
  j.at("prompts").get_to(s.prompts);
  j.at("total_search_count").get_to(s.total_search_count);
  j.at("max_search_count").get_to(s.max_search_count);
  j.at("total_tokens").get_to(s.total_tokens);
}

namespace {

struct Slot {
  Rng rng;
  std::uint64_t attempts = 0;
  std::uint64_t seeds = 0;
  std::optional<AttackPrompt> found;
  bool gave_up = false;
  bool budget_hit = false;
};

// Draws seeds until one succeeds, the slot's seed allowance runs out, or the budget does.
void advance(Slot& slot, const SeedConfig& cfg, OperationType op, const ChatClient& client,
             const SearchLimits& limits, const Tokenizer& tokenizer, CallBudget& budget) {
  slot.found.reset();
  while (slot.seeds < limits.max_seeds_per_prompt) {
    const auto [a, b] = gen_operands(cfg, slot.rng);
    const auto seed = gen_seed_prompt(op, a, b, cfg.template_version);
    ++slot.seeds;
    const auto outcome = search_one(seed, client, limits, tokenizer, &budget);
    if (const auto* hit = std::get_if<SearchSuccess>(&outcome)) {
      slot.attempts += hit->calls_used;
      AttackPrompt prompt = hit->prompt;
      prompt.search_calls_used = static_cast<std::uint32_t>(slot.attempts);
      slot.found = std::move(prompt);
      return;
    }
    const auto& miss = std::get<SearchExhausted>(outcome);
    slot.attempts += miss.attempts;
    if (miss.budget_exhausted) {
      slot.budget_hit = true;
      return;
    }
  }
  slot.gave_up = true;
}

}  // namespace

DatasetBuild build_dataset(const SeedConfig& cfg, OperationType op, std::size_t n, const ChatClient& client,
                           const SearchLimits& limits, const Tokenizer& tokenizer) {
  if (n < 1) throw ConfigError("dataset size N must be at least 1");
  if (const auto check = validate_record(limits); !check.ok()) throw ConfigError(check.summary());
  if (const auto check = validate_record(cfg); !check.ok()) throw ConfigError(check.summary());

  CallBudget budget(limits.max_total_attempts);
  std::vector<Slot> slots;
  slots.reserve(n);
  for (std::size_t i = 0; i < n; ++i) slots.emplace_back().rng = make_rng(cfg.rng_seed, i);

  parallel_for(n, limits.max_parallel,
               [&](std::size_t i) { advance(slots[i], cfg, op, client, limits, tokenizer, budget); });

  // Duplicates are resolved in slot order so the outcome does not depend on scheduling.
  DatasetBuild build;
  std::set<std::string> seen;
  for (auto& slot : slots) {
    while (slot.found && seen.count(slot.found->text)) {
      ++build.duplicates_rejected;
      advance(slot, cfg, op, client, limits, tokenizer, budget);
    }
    if (slot.found) {
      seen.insert(slot.found->text);
      build.prompts.push_back(*slot.found);
    } else {
      build.truncated = true;
    }
    build.seeds_tried += slot.seeds;
    build.attempts += slot.attempts;
  }
  std::sort(build.prompts.begin(), build.prompts.end(),
            [](const AttackPrompt& x, const AttackPrompt& y) { return x.id < y.id; });
  build.stats = compute_search_stats(build.prompts);
  return build;
}

}  // namespace thinkstop
