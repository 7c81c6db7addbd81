#pragma once

#include "thinkstop/client.hpp"
#include "thinkstop/domain.hpp"
#include "thinkstop/search.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace thinkstop {

/// Empty when the content is an empty answer (for Prefix1 the echoed single-space
/// prefix is stripped first); SpecialToken when the literal occurs in the content;
/// Normal otherwise.
TrialOutcome classify_response(Approach approach, const ModelResponse& response, std::string_view special_token);

struct PromptResult {
  std::string prompt_id;
  /// Empty outcomes among `trials`.
  std::uint32_t d = 0;
  std::vector<AttackTrial> trials;

  bool operator==(const PromptResult&) const = default;
};

ValidationResult validate_record(const PromptResult& result, std::uint32_t lambda);

void to_json(nlohmann::json& j, const PromptResult& r);
void from_json(const nlohmann::json& j, PromptResult& r);

struct CampaignConfig {
  std::filesystem::path dataset_path;
  Approach approach = Approach::Normal;
  std::uint32_t lambda = 3;
  std::size_t max_parallel = 4;
  double rate_limit_per_sec = 10.0;
  EndpointDescriptor target;
  std::string special_token{kDefaultSpecialToken};
  std::optional<std::string> carrier_prompt;
  /// Drop Error trials from both the numerator and the denominator of ASR.
  bool exclude_errors = false;

  bool operator==(const CampaignConfig&) const = default;
};

ValidationResult validate_record(const CampaignConfig& config);

void to_json(nlohmann::json& j, const CampaignConfig& c);
void from_json(const nlohmann::json& j, CampaignConfig& c);

/// Stable hash of the campaign settings (endpoint secrets never enter it).
std::string config_hash(const CampaignConfig& config);

struct RunOptions {
  /// When false every latency is recorded as 0 so result files are reproducible.
  bool record_latency = true;
};

/// λ trials for every prompt. Trials for one prompt run in order; prompts run
/// concurrently up to config.max_parallel. A trial whose request still fails after
/// client retries becomes an Error outcome. Results are sorted by prompt id.
/// Throws CapabilityError up front for a prefix approach on an endpoint without prefix
/// support.
std::vector<PromptResult> run_campaign(const CampaignConfig& config, const std::vector<AttackPrompt>& dataset,
                                       const ChatClient& client, const RunOptions& options = {});

/// Provenance written next to campaign results.
struct CampaignManifest {
  std::string config_hash;
  std::string tokenizer_id;
  EndpointDescriptor endpoint;
  std::string code_version;
  std::string dataset_label;
  Approach approach = Approach::Normal;
  std::uint32_t lambda = 3;
  std::string special_token{kDefaultSpecialToken};
  bool exclude_errors = false;
  std::uint64_t prompts = 0;
  std::uint64_t trials = 0;
  std::optional<SearchStats> search_stats;

  bool operator==(const CampaignManifest&) const = default;
};

void to_json(nlohmann::json& j, const CampaignManifest& m);
void from_json(const nlohmann::json& j, CampaignManifest& m);

std::string code_version();

}  // namespace thinkstop
