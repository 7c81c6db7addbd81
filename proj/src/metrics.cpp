#include "thinkstop/metrics.hpp"

#include "thinkstop/error.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <sstream>

namespace thinkstop {

using u128 = unsigned __int128;

std::string decimal_string(const Fraction& f, int decimals, std::uint64_t scale) {
  if (f.den == 0) throw DomainError("fraction with zero denominator");
  u128 unit = 1;
  for (int i = 0; i < decimals; ++i) unit *= 10;
  const u128 n = static_cast<u128>(f.num) * scale * unit;
  u128 q = n / f.den;
  const u128 r = n % f.den;
  if (2 * r > f.den || (2 * r == f.den && q % 2 == 1)) ++q;

  auto digits = [](u128 v) {
    std::string s;
    do {
      s.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
      v /= 10;
    } while (v > 0);
    return std::string(s.rbegin(), s.rend());
  };
  std::string out = digits(q / unit);
  if (decimals > 0) {
    std::string frac = digits(q % unit);
    frac.insert(0, static_cast<std::size_t>(decimals) - frac.size(), '0');
    out += "." + frac;
  }
  return out;
}

Fraction compute_cr(const std::vector<CompressionRecord>& records) {
  if (records.empty()) throw DomainError("compression rate needs at least one record");
  std::uint64_t sum_o = 0;
  std::uint64_t sum_c = 0;
  for (const auto& r : records) {
    if (r.token_o == 0) throw DomainError("record " + r.prompt_id + " has token_o == 0");
    sum_o += r.token_o;
    sum_c += r.token_c;
  }
  return Fraction{sum_c, sum_o};
}

Fraction compute_asr(const std::vector<PromptResult>& results, std::uint32_t lambda, bool exclude_errors) {
  if (results.empty()) throw DomainError("attack success rate needs at least one prompt result");
  if (lambda < 1) throw DomainError("lambda must be at least 1");
  std::uint64_t successes = 0;
  std::uint64_t errors = 0;
  for (const auto& r : results) {
    if (r.d > lambda) throw DomainError("prompt " + r.prompt_id + " has d > lambda");
    successes += r.d;
    if (exclude_errors) {
      errors += static_cast<std::uint64_t>(std::count_if(r.trials.begin(), r.trials.end(),
                                                         [](const AttackTrial& t) { return is_error(t.outcome); }));
    }
  }
  const std::uint64_t denominator = static_cast<std::uint64_t>(lambda) * results.size() - errors;
  if (denominator == 0) throw DomainError("no trials left after excluding errors");
  return Fraction{successes, denominator};
}

Fraction compute_trigger_rate(const std::vector<PromptResult>& results) {
  std::uint64_t hits = 0;
  std::uint64_t total = 0;
  for (const auto& r : results) {
    for (const auto& t : r.trials) {
      ++total;
      if (std::holds_alternative<SpecialTokenAnswer>(t.outcome)) ++hits;
    }
  }
  return total == 0 ? Fraction{0, 1} : Fraction{hits, total};
}

ValidationResult validate_record(const MetricsReport& m) {
  ValidationResult r;
  const Fraction one{1, 1};
  if (m.asr.den == 0 || !(m.asr <= one)) r.add("asr", "must lie in [0,1]");
  if (m.trigger_rate.den == 0 || !(m.trigger_rate <= one)) r.add("trigger_rate", "must lie in [0,1]");
  if (m.cr && (m.cr->den == 0 || m.cr->num == 0)) r.add("cr", "must be positive");
  if (m.lambda < 1) r.add("lambda", "must be at least 1");
  if (m.tokenizer_id.empty()) r.add("tokenizer_id", "must be set");
  return r;
}

ReportFormat parse_report_format(std::string_view name) {
  if (name == "table") return ReportFormat::Table;
  if (name == "csv") return ReportFormat::Csv;
  throw UsageError("unknown report format '" + std::string(name) + "' (expected table or csv)");
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string avg_search(const MetricsReport& m) {
  return m.search_stats && m.search_stats->prompts > 0 ? decimal_string(m.search_stats->average_search_count(), 2)
                                                       : std::string();
}

}  // namespace

std::string render_report(const std::vector<MetricsReport>& reports, ReportFormat format) {
  for (const auto& m : reports) {
    if (const auto check = validate_record(m); !check.ok()) {
      throw DomainError("report '" + m.dataset_label + "': " + check.summary());
    }
  }
  std::ostringstream out;
  if (format == ReportFormat::Csv) {
    out << "dataset,cr,asr,trigger_rate,avg_search,lambda,prompts,trials,tokenizer_id,config_hash\n";
    for (const auto& m : reports) {
      out << csv_field(m.dataset_label) << ',' << (m.cr ? percent_string(*m.cr) : "") << ','
          << percent_string(m.asr) << ',' << percent_string(m.trigger_rate) << ',' << avg_search(m) << ','
          << m.lambda << ',' << m.prompts << ',' << m.trials << ',' << csv_field(m.tokenizer_id) << ','
          << csv_field(m.config_hash) << '\n';
    }
    return out.str();
  }
  bool first = true;
  for (const auto& m : reports) {
    if (!first) out << '\n';
    first = false;
    auto line = [&](const char* key, const std::string& value) {
      out << std::left << std::setw(14) << (std::string(key) + ":") << ' ' << value << '\n';
    };
    line("dataset", m.dataset_label);
    line("approach", std::string(to_string(m.approach)));
    line("CR", m.cr ? percent_string(*m.cr) : "n/a");
    line("ASR", percent_string(m.asr));
    line("trigger rate", percent_string(m.trigger_rate));
    line("avg search", m.search_stats ? avg_search(m) : "n/a");
    line("lambda", std::to_string(m.lambda));
    line("prompts", std::to_string(m.prompts));
    line("trials", std::to_string(m.trials));
    line("tokenizer", m.tokenizer_id);
    line("config hash", m.config_hash);
  }
  return out.str();
}

std::string render_report(const MetricsReport& report, ReportFormat format) {
  return render_report(std::vector<MetricsReport>{report}, format);
}

std::string render_search_table(const std::vector<std::pair<std::string, SearchStats>>& columns) {
  std::vector<std::vector<std::string>> rows = {{"Dataset"}, {"Total Search Count"}, {"Average Search Count"},
                                                {"Max Search Count"}, {"Total Tokens"}};
  for (const auto& [name, s] : columns) {
    rows[0].push_back(name);
    rows[1].push_back(std::to_string(s.total_search_count));
    rows[2].push_back(decimal_string(s.average_search_count(), 2));
    rows[3].push_back(std::to_string(s.max_search_count));
    rows[4].push_back(std::to_string(s.total_tokens));
  }
  if (columns.size() > 1) {
    const auto k = static_cast<std::uint64_t>(columns.size());
    std::uint64_t total = 0, max = 0, tokens = 0;
    double avg = 0.0;
    for (const auto& [_, s] : columns) {
      total += s.total_search_count;
      max += s.max_search_count;
      tokens += s.total_tokens;
      avg += s.average_search_count().value();
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", avg / static_cast<double>(k));
    rows[0].push_back("Avg");
    rows[1].push_back(decimal_string(Fraction{total, k}, 2));
    rows[2].push_back(buf);
    rows[3].push_back(decimal_string(Fraction{max, k}, 2));
    rows[4].push_back(decimal_string(Fraction{tokens, k}, 2));
  }
  std::vector<std::size_t> widths(rows[0].size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  }
  std::ostringstream out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == 0) {
        out << std::left << std::setw(static_cast<int>(widths[c])) << row[c];
      } else {
        out << "  " << std::right << std::setw(static_cast<int>(widths[c])) << row[c];
      }
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace thinkstop
