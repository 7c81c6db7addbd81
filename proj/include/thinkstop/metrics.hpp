#pragma once

#include "thinkstop/compress.hpp"
#include "thinkstop/executor.hpp"
#include "thinkstop/fraction.hpp"
#include "thinkstop/search.hpp"

#include <optional>
#include <string>
#include <vector>

namespace thinkstop {

/// Compression rate: mean(token_c) / mean(token_o), i.e. sum(token_c) / sum(token_o).
/// Throws DomainError for no records or a record with token_o == 0.
Fraction compute_cr(const std::vector<CompressionRecord>& records);

/// Attack success rate: sum(d_i) / (lambda * |D|). With `exclude_errors`, Error trials
/// leave both sums. Throws DomainError for no results, a d_i outside [0, lambda], or
/// (with exclusion) no trials left.
Fraction compute_asr(const std::vector<PromptResult>& results, std::uint32_t lambda, bool exclude_errors = false);

/// Fraction of trials whose outcome is SpecialToken (per trial, not per prompt);
/// 0 when there are no trials.
Fraction compute_trigger_rate(const std::vector<PromptResult>& results);

struct MetricsReport {
  std::string dataset_label;
  std::optional<Fraction> cr;
  Fraction asr;
  Fraction trigger_rate;
  std::optional<SearchStats> search_stats;
  std::uint32_t lambda = 3;
  std::uint64_t prompts = 0;
  std::uint64_t trials = 0;
  std::string tokenizer_id;
  std::string config_hash;
  Approach approach = Approach::Normal;
};

ValidationResult validate_record(const MetricsReport& report);

enum class ReportFormat { Table, Csv };

/// "table" or "csv"; anything else is a UsageError.
ReportFormat parse_report_format(std::string_view name);

/// CSV: header
///   dataset,cr,asr,trigger_rate,avg_search,lambda,prompts,trials,tokenizer_id,config_hash
/// then one row per report. Percentages render with two decimals rounded half to even
/// ("65.33%"), avg_search with two decimals; unknown values are left empty.
///
/// Table: one block per report, "key: value" lines aligned on the colon, blank line
/// between blocks.
std::string render_report(const std::vector<MetricsReport>& reports, ReportFormat format);
std::string render_report(const MetricsReport& report, ReportFormat format);

/// The stats block printed by `search`: Total / Average / Max Search Count and Total Tokens
/// per operation column.
std::string render_search_table(const std::vector<std::pair<std::string, SearchStats>>& columns);

}  // namespace thinkstop
