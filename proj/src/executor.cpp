#include "thinkstop/executor.hpp"

#include "thinkstop/error.hpp"
#include "thinkstop/hash.hpp"
#include "thinkstop/parallel.hpp"

#include <algorithm>
#include <chrono>

#ifndef THINKSTOP_VERSION
#define THINKSTOP_VERSION "unknown"
#endif

namespace thinkstop {

using nlohmann::json;

std::string code_version() { return THINKSTOP_VERSION; }

TrialOutcome classify_response(Approach approach, const ModelResponse& response, std::string_view special_token) {
  std::optional<std::string> content = response.content;
  if (approach == Approach::Prefix1 && content && content->starts_with(' ')) content->erase(0, 1);
  if (is_empty_answer(content)) return EmptyAnswer{};
  if (!special_token.empty()) {
    if (const auto pos = content->find(special_token); pos != std::string::npos) {
      return SpecialTokenAnswer{std::string(trim(std::string_view(*content).substr(0, pos))),
                                std::string(trim(std::string_view(*content).substr(pos + special_token.size())))};
    }
  }
  return NormalAnswer{};
}

ValidationResult validate_record(const PromptResult& result, std::uint32_t lambda) {
  ValidationResult r;
  if (result.trials.size() != lambda) r.add("trials", "expected " + std::to_string(lambda) + " trials");
  const auto empties = std::count_if(result.trials.begin(), result.trials.end(),
                                     [](const AttackTrial& t) { return is_success(t.outcome); });
  if (static_cast<std::uint32_t>(empties) != result.d) r.add("d", "must equal the number of Empty trials");
  if (result.d > lambda) r.add("d", "exceeds lambda");
  for (const auto& t : result.trials) {
    if (t.prompt_id != result.prompt_id) r.add("trials.prompt_id", "trial belongs to another prompt");
    for (const auto& v : validate_record(t).violations) r.add("trials." + v.field, v.message);
  }
  return r;
}

void to_json(json& j, const PromptResult& r) {
  j = json{{"prompt_id", r.prompt_id}, {"d", r.d}, {"trials", r.trials}};
}

void from_json(const json& j, PromptResult& r) {
  j.at("prompt_id").get_to(r.prompt_id);
  j.at("d").get_to(r.d);
  j.at("trials").get_to(r.trials);
}

ValidationResult validate_record(const CampaignConfig& c) {
  ValidationResult r;
  if (c.lambda < 1) r.add("lambda", "must be at least 1");
  if (c.max_parallel < 1) r.add("max_parallel", "must be at least 1");
  if (!(c.rate_limit_per_sec > 0.0)) r.add("rate_limit_per_sec", "must be positive");
  if (c.special_token.empty()) r.add("special_token", "must not be empty");
  return r;
}

void to_json(json& j, const CampaignConfig& c) {
  j = json{{"dataset_path", c.dataset_path.generic_string()},
           {"approach", c.approach},
           {"lambda", c.lambda},
           {"max_parallel", c.max_parallel},
           {"rate_limit_per_sec", c.rate_limit_per_sec},
           {"target", c.target},
           {"special_token", c.special_token},
           {"exclude_errors", c.exclude_errors}};
  j["carrier_prompt"] = c.carrier_prompt ? json(*c.carrier_prompt) : json(nullptr);
}

void from_json(const json& j, CampaignConfig& c) {
  c.dataset_path = j.at("dataset_path").get<std::string>();
  j.at("approach").get_to(c.approach);
  c.lambda = j.value("lambda", 3u);
  c.max_parallel = j.value("max_parallel", std::size_t{4});
  c.rate_limit_per_sec = j.value("rate_limit_per_sec", 10.0);
  j.at("target").get_to(c.target);
  c.special_token = j.value("special_token", std::string(kDefaultSpecialToken));
  c.exclude_errors = j.value("exclude_errors", false);
  if (j.contains("carrier_prompt") && !j["carrier_prompt"].is_null()) {
    c.carrier_prompt = j["carrier_prompt"].get<std::string>();
  } else {
    c.carrier_prompt.reset();
  }
}

std::string config_hash(const CampaignConfig& config) {
  // Concurrency and rate settings do not change results, so they stay out of the hash.
  json j = config;
  j.erase("max_parallel");
  j.erase("rate_limit_per_sec");
  j.erase("dataset_path");
  return sha256_hex(j.dump(), 16);
}

std::vector<PromptResult> run_campaign(const CampaignConfig& config, const std::vector<AttackPrompt>& dataset,
                                       const ChatClient& client, const RunOptions& options) {
  if (const auto check = validate_record(config); !check.ok()) throw ConfigError(check.summary());
  if (dataset.empty()) throw DomainError("campaign dataset is empty");
  if (is_prefix_approach(config.approach) && !client.endpoint().supports_prefix) {
    throw CapabilityError("approach " + std::string(to_string(config.approach)) + " needs prefix completion, which " +
                          client.endpoint().base_url + " does not support");
  }

  std::vector<PromptResult> results(dataset.size());
  parallel_for(dataset.size(), config.max_parallel, [&](std::size_t i) {
    const auto& prompt = dataset[i];
    const auto request = build_request(config.approach, prompt.text, config.carrier_prompt, client.endpoint());
    ChatRequest filled = request;
    if (filled.model_name.empty()) filled.model_name = client.endpoint().model_name;
    const std::string digest = request_digest(filled);

    PromptResult& result = results[i];
    result.prompt_id = prompt.id;
    for (std::uint32_t k = 0; k < config.lambda; ++k) {
      AttackTrial trial;
      trial.prompt_id = prompt.id;
      trial.trial_index = k;
      trial.approach = config.approach;
      trial.request_digest = digest;
      const auto start = std::chrono::steady_clock::now();
      try {
        trial.outcome = classify_response(config.approach, client.chat(request), config.special_token);
      } catch (const ClientError& e) {
        trial.outcome = TrialError{e.what()};
      }
      if (options.record_latency) {
        trial.latency_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      }
      if (is_success(trial.outcome)) ++result.d;
      result.trials.push_back(std::move(trial));
    }
  });
  std::stable_sort(results.begin(), results.end(),
                   [](const PromptResult& a, const PromptResult& b) { return a.prompt_id < b.prompt_id; });
  return results;
}

void to_json(json& j, const CampaignManifest& m) {
  j = json{{"config_hash", m.config_hash},
           {"tokenizer_id", m.tokenizer_id},
           {"endpoint", m.endpoint},
           {"code_version", m.code_version},
           {"dataset_label", m.dataset_label},
           {"approach", m.approach},
           {"lambda", m.lambda},
           {"special_token", m.special_token},
           {"exclude_errors", m.exclude_errors},
           {"prompts", m.prompts},
           {"trials", m.trials}};
  j["search_stats"] = m.search_stats ? json(*m.search_stats) : json(nullptr);
}

void from_json(const json& j, CampaignManifest& m) {
  j.at("config_hash").get_to(m.config_hash);
  j.at("tokenizer_id").get_to(m.tokenizer_id);
  j.at("endpoint").get_to(m.endpoint);
  j.at("code_version").get_to(m.code_version);
  j.at("dataset_label").get_to(m.dataset_label);
  j.at("approach").get_to(m.approach);
  j.at("lambda").get_to(m.lambda);
  m.special_token = j.value("special_token", std::string(kDefaultSpecialToken));
  m.exclude_errors = j.value("exclude_errors", false);
  j.at("prompts").get_to(m.prompts);
  j.at("trials").get_to(m.trials);
  if (j.contains("search_stats") && !j["search_stats"].is_null()) {
    m.search_stats = j["search_stats"].get<SearchStats>();
  } else {
    m.search_stats.reset();
  }
}

}  // namespace thinkstop
