#include "thinkstop/store.hpp"

#include "thinkstop/error.hpp"

#include <unistd.h>

#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

namespace thinkstop {

using nlohmann::json;
namespace fs = std::filesystem;

void atomic_write(const fs::path& path, const std::string& content) {
  static std::atomic<std::uint64_t> counter{0};
  std::ostringstream name;
  name << "." << path.filename().string() << ".tmp." << ::getpid() << "."
       << std::hash<std::thread::id>{}(std::this_thread::get_id()) << "." << counter.fetch_add(1);
  const fs::path tmp = path.parent_path() / name.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError(path, "cannot create temporary file " + tmp.string());
    out << content;
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw StorageError(path, "write failed");
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw StorageError(path, "cannot rename temporary file into place: " + ec.message());
  }
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

json fraction_json(const Fraction& f) { return json{{"num", f.num}, {"den", f.den}}; }

// Copies `extra` under `j` without overwriting known fields.
void merge_extra(json& j, const json& extra) {
  if (!extra.is_object()) return;
  for (const auto& [k, v] : extra.items()) {
    if (!j.contains(k)) j[k] = v;
  }
}

json collect_extra(const json& j, std::initializer_list<std::string_view> known) {
  json extra = json::object();
  for (const auto& [k, v] : j.items()) {
    bool is_known = k == "schema_version" || k == "kind";
    for (auto name : known) is_known = is_known || k == name;
    if (!is_known) extra[k] = v;
  }
  return extra;
}

std::string render(json header, std::string_view kind, const std::vector<json>& body) {
  header["kind"] = std::string(kind);
  std::string out = header.dump() + "\n";
  for (const auto& line : body) out += line.dump() + "\n";
  return out;
}

struct RawFile {
  json header;
  std::vector<std::pair<std::size_t, json>> lines;  // (line number, record)
};

RawFile read_raw(const fs::path& path, std::string_view kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError(path, "cannot open for reading");
  RawFile raw;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw LineError(path, lineno, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw LineError(path, lineno, "expected a JSON object");
    if (!have_header) {
      if (!j.contains("schema_version") || !j["schema_version"].is_number_integer()) {
        throw LineError(path, lineno, "header lacks an integer schema_version");
      }
      const int version = j["schema_version"].get<int>();
      if (version != kSchemaVersion) throw SchemaError(path, kSchemaVersion, version);
      const auto found = j.value("kind", std::string());
      if (found != kind) {
        throw LineError(path, lineno, "expected a " + std::string(kind) + " file, found kind '" + found + "'");
      }
      raw.header = std::move(j);
      have_header = true;
      continue;
    }
    raw.lines.emplace_back(lineno, std::move(j));
  }
  if (!have_header) throw StorageError(path, "empty file (no header line)");
  return raw;
}

template <class T>
T parse_line(const fs::path& path, std::size_t lineno, const json& j) {
  try {
    return j.get<T>();
  } catch (const std::exception& e) {
    throw LineError(path, lineno, std::string("invalid record: ") + e.what());
  }
}

template <class Fn>
auto parse_header(const fs::path& path, Fn&& fn) {
  try {
    return fn();
  } catch (const StorageError&) {
    throw;
  } catch (const std::exception& e) {
    throw LineError(path, 1, std::string("invalid header: ") + e.what());
  }
}

}  // namespace

void write_dataset(const fs::path& path, const DatasetHeader& header, const std::vector<AttackPrompt>& prompts,
                   const Tokenizer* tokenizer) {
  std::vector<json> body;
  body.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (const auto check = validate_record(prompts[i], tokenizer); !check.ok()) {
      throw StorageError(path, "prompt " + std::to_string(i) + " (" + prompts[i].id + ") invalid: " + check.summary());
    }
    body.push_back(prompts[i]);
  }
  json h{{"schema_version", header.schema_version},
         {"op", header.op},
         {"tokenizer_id", header.tokenizer_id},
         {"created_at", header.created_at},
         {"label", header.label}};
  h["seed_config"] = header.seed_config ? json(*header.seed_config) : json(nullptr);
  h["search_stats"] = header.search_stats ? json(*header.search_stats) : json(nullptr);
  merge_extra(h, header.extra);
  atomic_write(path, render(std::move(h), "dataset", body));
}

DatasetFile read_dataset(const fs::path& path, const Tokenizer* tokenizer) {
  const auto raw = read_raw(path, "dataset");
  DatasetFile file;
  file.header = parse_header(path, [&] {
    DatasetHeader h;
    const auto& j = raw.header;
    h.schema_version = j["schema_version"].get<int>();
    h.op = j.value("op", std::string());
    if (h.op != kBaselineOp && h.op != "mixed" && !parse_operation(h.op)) {
      throw LineError(path, 1, "unknown op '" + h.op + "'");
    }
    h.tokenizer_id = j.value("tokenizer_id", std::string(kDefaultTokenizerId));
    if (j.contains("seed_config") && !j["seed_config"].is_null()) h.seed_config = j["seed_config"].get<SeedConfig>();
    h.created_at = j.value("created_at", std::string());
    h.label = j.value("label", std::string());
    if (j.contains("search_stats") && !j["search_stats"].is_null()) {
      h.search_stats = j["search_stats"].get<SearchStats>();
    }
    h.extra = collect_extra(j, {"op", "tokenizer_id", "seed_config", "created_at", "label", "search_stats"});
    return h;
  });
  for (const auto& [lineno, j] : raw.lines) {
    auto prompt = parse_line<AttackPrompt>(path, lineno, j);
    if (const auto check = validate_record(prompt, tokenizer); !check.ok()) throw LineError(path, lineno, check.summary());
    if (prompt.tokenizer_id != file.header.tokenizer_id) {
      throw LineError(path, lineno,
                      "tokenizer_id '" + prompt.tokenizer_id + "' differs from header '" + file.header.tokenizer_id + "'");
    }
    file.prompts.push_back(std::move(prompt));
  }
  return file;
}

void write_compression(const fs::path& path, const CompressionHeader& header,
                       const std::vector<CompressionRecord>& records) {
  std::vector<json> body;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (const auto check = validate_record(records[i]); !check.ok()) {
      throw StorageError(path, "record " + std::to_string(i) + " invalid: " + check.summary());
    }
    body.push_back(records[i]);
  }
  json h{{"schema_version", header.schema_version}, {"tokenizer_id", header.tokenizer_id},
         {"source_dataset", header.source_dataset}, {"created_at", header.created_at},
         {"target_ratio", header.target_ratio},     {"accept_lo", header.accept_lo},
         {"accept_hi", header.accept_hi},           {"max_attempts", header.max_attempts},
         {"example_version", header.example_version}};
  merge_extra(h, header.extra);
  atomic_write(path, render(std::move(h), "compression", body));
}

CompressionFile read_compression(const fs::path& path) {
  const auto raw = read_raw(path, "compression");
  CompressionFile file;
  file.header = parse_header(path, [&] {
    CompressionHeader h;
    const auto& j = raw.header;
    h.schema_version = j["schema_version"].get<int>();
    h.tokenizer_id = j.value("tokenizer_id", std::string(kDefaultTokenizerId));
    h.source_dataset = j.value("source_dataset", std::string());
    h.created_at = j.value("created_at", std::string());
    h.target_ratio = j.value("target_ratio", 0.70);
    h.accept_lo = j.value("accept_lo", 0.50);
    h.accept_hi = j.value("accept_hi", 0.90);
    h.max_attempts = j.value("max_attempts", 4u);
    h.example_version = j.value("example_version", std::string());
    h.extra = collect_extra(j, {"tokenizer_id", "source_dataset", "created_at", "target_ratio", "accept_lo",
                                "accept_hi", "max_attempts", "example_version"});
    return h;
  });
  for (const auto& [lineno, j] : raw.lines) {
    auto rec = parse_line<CompressionRecord>(path, lineno, j);
    if (const auto check = validate_record(rec); !check.ok()) throw LineError(path, lineno, check.summary());
    file.records.push_back(std::move(rec));
  }
  return file;
}

void write_results(const fs::path& path, const ResultsHeader& header, const std::vector<PromptResult>& results) {
  std::vector<json> body;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (const auto check = validate_record(results[i], header.manifest.lambda); !check.ok()) {
      throw StorageError(path, "result " + std::to_string(i) + " invalid: " + check.summary());
    }
    body.push_back(results[i]);
  }
  json h{{"schema_version", header.schema_version}, {"manifest", header.manifest}, {"created_at", header.created_at}};
  h["cr"] = header.cr ? fraction_json(*header.cr) : json(nullptr);
  merge_extra(h, header.extra);
  atomic_write(path, render(std::move(h), "results", body));
}

ResultsFile read_results(const fs::path& path) {
  const auto raw = read_raw(path, "results");
  ResultsFile file;
  file.header = parse_header(path, [&] {
    ResultsHeader h;
    const auto& j = raw.header;
    h.schema_version = j["schema_version"].get<int>();
    h.manifest = j.at("manifest").get<CampaignManifest>();
    h.created_at = j.value("created_at", std::string());
    if (j.contains("cr") && !j["cr"].is_null()) {
      h.cr = Fraction{j["cr"].at("num").get<std::uint64_t>(), j["cr"].at("den").get<std::uint64_t>()};
    }
    h.extra = collect_extra(j, {"manifest", "created_at", "cr"});
    return h;
  });
  for (const auto& [lineno, j] : raw.lines) {
    auto result = parse_line<PromptResult>(path, lineno, j);
    if (const auto check = validate_record(result, file.header.manifest.lambda); !check.ok()) {
      throw LineError(path, lineno, check.summary());
    }
    file.results.push_back(std::move(result));
  }
  return file;
}

}  // namespace thinkstop
