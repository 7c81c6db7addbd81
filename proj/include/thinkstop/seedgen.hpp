#pragma once

#include "thinkstop/domain.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>

namespace thinkstop {

using Rng = std::mt19937_64;

/// Operand interval for seed tasks. Default magnitude is 7-8 digit operands.
struct SeedConfig {
  std::int64_t p1 = 1'000'000;
  std::int64_t p2 = 99'999'999;
  std::string template_version = "v1";
  std::optional<std::uint64_t> rng_seed;

  bool operator==(const SeedConfig&) const = default;
};

ValidationResult validate_record(const SeedConfig& cfg);
/// Also checks that both operands lie in [cfg.p1, cfg.p2].
ValidationResult validate_record(const SeedTask& seed, const SeedConfig& cfg);

/// Draws (a, b) uniformly from the pairs with p1 <= b < a <= p2.
/// Throws ConfigError when the interval admits no such pair.
std::pair<std::int64_t, std::int64_t> gen_operands(const SeedConfig& cfg, Rng& rng);

/// Renders the seed prompt. Templates:
///   v1: "Calculate {a} {op} {b}."
///   v2: "What is {a} {op} {b}?"
/// Throws DomainError unless a > b, ConfigError for an unknown template.
SeedTask gen_seed_prompt(OperationType op, std::int64_t a, std::int64_t b,
                         const std::string& template_version = "v1");

/// Inverse of gen_seed_prompt for any known template; used by the simulator.
std::optional<SeedTask> parse_seed_prompt(std::string_view text);

/// Rng for builders: seeded from cfg.rng_seed mixed with `stream`, or from
/// std::random_device when no seed is configured.
Rng make_rng(const std::optional<std::uint64_t>& seed, std::uint64_t stream = 0);

void to_json(nlohmann::json& j, const SeedConfig& c);
void from_json(const nlohmann::json& j, SeedConfig& c);

}  // namespace thinkstop
