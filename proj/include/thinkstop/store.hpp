#pragma once

#include "thinkstop/compress.hpp"
#include "thinkstop/domain.hpp"
#include "thinkstop/executor.hpp"
#include "thinkstop/search.hpp"
#include "thinkstop/seedgen.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace thinkstop {

/// Every file is JSONL: a header object on line 1 carrying schema_version and kind,
/// then one record per line. Field tables live in docs/schema.md.
inline constexpr int kSchemaVersion = 1;

struct DatasetHeader {
  int schema_version = kSchemaVersion;
  /// "+", "-", "*", "/", "baseline" for imported corpora, or "mixed".
  std::string op;
  std::string tokenizer_id{kDefaultTokenizerId};
  std::optional<SeedConfig> seed_config;
  std::string created_at;
  std::string label;
  std::optional<SearchStats> search_stats;
  /// Unknown header fields, written back unchanged.
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const DatasetHeader&) const = default;
};

struct DatasetFile {
  DatasetHeader header;
  std::vector<AttackPrompt> prompts;
};

struct CompressionHeader {
  int schema_version = kSchemaVersion;
  std::string tokenizer_id{kDefaultTokenizerId};
  std::string source_dataset;
  std::string created_at;
  double target_ratio = 0.70;
  double accept_lo = 0.50;
  double accept_hi = 0.90;
  std::uint32_t max_attempts = 4;
  std::string example_version;
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const CompressionHeader&) const = default;
};

struct CompressionFile {
  CompressionHeader header;
  std::vector<CompressionRecord> records;
};

struct ResultsHeader {
  int schema_version = kSchemaVersion;
  CampaignManifest manifest;
  std::string created_at;
  std::optional<Fraction> cr;
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const ResultsHeader&) const = default;
};

struct ResultsFile {
  ResultsHeader header;
  std::vector<PromptResult> results;
};

/// Writes `content` to a unique temporary file beside `path`, then renames it over
/// `path`. Concurrent writers leave exactly one complete file. Throws StorageError.
void atomic_write(const std::filesystem::path& path, const std::string& content);

/// Validates every prompt (recounting tokens when `tokenizer` matches) before writing.
void write_dataset(const std::filesystem::path& path, const DatasetHeader& header,
                   const std::vector<AttackPrompt>& prompts, const Tokenizer* tokenizer = nullptr);
/// Throws SchemaError for an unknown schema_version, LineError naming the line for a
/// malformed or invalid record, StorageError otherwise.
DatasetFile read_dataset(const std::filesystem::path& path, const Tokenizer* tokenizer = nullptr);

void write_compression(const std::filesystem::path& path, const CompressionHeader& header,
                       const std::vector<CompressionRecord>& records);
CompressionFile read_compression(const std::filesystem::path& path);

void write_results(const std::filesystem::path& path, const ResultsHeader& header,
                   const std::vector<PromptResult>& results);
ResultsFile read_results(const std::filesystem::path& path);

/// Current UTC time as "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_timestamp();

inline constexpr std::string_view kEpochTimestamp = "1970-01-01T00:00:00Z";

}  // namespace thinkstop
