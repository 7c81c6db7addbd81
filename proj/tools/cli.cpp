#include "cli.hpp"

#include "thinkstop/compress.hpp"
#include "thinkstop/connect.hpp"
#include "thinkstop/error.hpp"
#include "thinkstop/executor.hpp"
#include "thinkstop/metrics.hpp"
#include "thinkstop/search.hpp"
#include "thinkstop/simtarget.hpp"
#include "thinkstop/store.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

namespace thinkstop::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct EndpointFlags {
  std::string uri;
  std::string model;
  std::string api_key_env = "THINKSTOP_API_KEY";
  std::uint32_t timeout_ms = 120'000;
  std::uint32_t max_retries = 2;
  bool supports_prefix = false;
  std::optional<double> temperature;
};

struct CommonFlags {
  std::optional<std::uint64_t> seed;
  std::size_t parallel = 4;
  std::optional<double> rate;
  std::string vocab;
};

void add_endpoint_flags(CLI::App* cmd, EndpointFlags& f, const std::string& name, bool required) {
  auto* opt = cmd->add_option("--" + name, f.uri, "Endpoint URI: https://host/v1 or sim://[profile][?k=v&...]");
  if (required) opt->required();
  cmd->add_option("--" + name + "-model", f.model, "Model name sent in requests");
  cmd->add_option("--" + name + "-key-env", f.api_key_env, "Environment variable holding the API key")
      ->capture_default_str();
  cmd->add_option("--" + name + "-timeout-ms", f.timeout_ms, "Per-request timeout")->capture_default_str();
  cmd->add_option("--" + name + "-retries", f.max_retries, "Retries after the first attempt")->capture_default_str();
  cmd->add_flag("--" + name + "-prefix", f.supports_prefix, "The http(s) endpoint supports prefix completion");
  cmd->add_option("--" + name + "-temperature", f.temperature, "Sampling temperature (omitted unless set)");
}

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--seed", f.seed, "Fix all randomness and zero wall-clock fields for reproducible output");
  cmd->add_option("--parallel", f.parallel, "Concurrent requests")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--rate", f.rate, "Request rate limit per second (default 10; none for sim://)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--vocab", f.vocab, "Vocabulary file for token counting (default ws-punct-v1)");
}

OpenedTarget open(const EndpointFlags& f) {
  EndpointDescriptor e;
  e.model_name = f.model;
  e.api_key_env = f.api_key_env;
  e.timeout_ms = f.timeout_ms;
  e.max_retries = f.max_retries;
  e.supports_prefix = f.supports_prefix;
  e.temperature = f.temperature;
  // Simulated targets answer immediately, so retry pauses only slow tests down.
  if (is_sim_uri(f.uri)) e.retry_backoff_ms = 0;
  return open_target(f.uri, e);
}

constexpr double kDefaultRate = 10.0;

std::shared_ptr<TokenBucket> limiter(const CommonFlags& f, const OpenedTarget& t) {
  if (!f.rate && t.sim) return nullptr;
  return std::make_shared<TokenBucket>(f.rate.value_or(kDefaultRate));
}

Tokenizer tokenizer_for(const CommonFlags& f) {
  return Tokenizer::load(f.vocab.empty() ? TokenizerSpec::whitespace_punct() : TokenizerSpec::vocab_file(f.vocab));
}

std::string timestamp(const CommonFlags& f) { return f.seed ? std::string(kEpochTimestamp) : utc_timestamp(); }

void require_file(const std::string& path, const std::string& what) {
  if (path.empty() || !fs::is_regular_file(path)) throw UsageError(what + " not found: '" + path + "'");
}

// ---------------------------------------------------------------------------

struct SearchFlags {
  std::string op;
  long long n = 25;
  std::int64_t p1 = SeedConfig{}.p1;
  std::int64_t p2 = SeedConfig{}.p2;
  std::string templ = "v1";
  std::uint32_t max_calls = 4;
  std::optional<std::uint64_t> budget;
  std::string out;
  std::string label;
};

int cmd_search(const SearchFlags& s, const EndpointFlags& target, const CommonFlags& common, std::ostream& out) {
  const auto op = parse_operation(s.op);
  if (!op) {
    throw UsageError("unknown operation '" + s.op + "'; valid operations: add (+), sub (-), mul (*), div (/)");
  }
  if (s.n < 1) throw UsageError("--n must be at least 1");

  SeedConfig cfg{s.p1, s.p2, s.templ, common.seed};
  if (const auto check = validate_record(cfg); !check.ok()) throw UsageError("invalid seed settings: " + check.summary());
  SearchLimits limits;
  limits.max_calls_per_seed = s.max_calls;
  limits.max_total_attempts = s.budget;
  limits.max_parallel = common.parallel;

  const auto tokenizer = tokenizer_for(common);
  const auto opened = open(target);
  const auto client = opened.client(limiter(common, opened));
  const auto build = build_dataset(cfg, *op, static_cast<std::size_t>(s.n), client, limits, tokenizer);

  DatasetHeader header;
  header.op = std::string(symbol(*op));
  header.tokenizer_id = tokenizer.id();
  header.seed_config = cfg;
  header.created_at = timestamp(common);
  header.label = s.label.empty() ? fs::path(s.out).stem().string() : s.label;
  header.search_stats = build.stats;
  if (build.truncated) header.extra["truncated"] = true;
  write_dataset(s.out, header, build.prompts, &tokenizer);

  out << render_search_table({{header.op, build.stats}});
  out << "Wrote " << build.prompts.size() << " prompts to " << s.out << "\n";
  if (build.truncated) {
    out << "Truncated: found " << build.prompts.size() << " of " << s.n << " prompts before the search limits ran out\n";
    return kExitRuntime;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct CompressFlags {
  std::string dataset;
  double ratio = 0.70;
  double lo = 0.50;
  double hi = 0.90;
  std::uint32_t max_attempts = 4;
  std::string example;
  std::vector<std::string> op_examples;
  std::string out;
  std::string out_dataset;
};

int cmd_compress(const CompressFlags& c, const EndpointFlags& compressor, const CommonFlags& common,
                 std::ostream& out) {
  require_file(c.dataset, "dataset");
  const auto tokenizer = tokenizer_for(common);
  const auto data = read_dataset(c.dataset);

  CompressionPolicy policy;
  policy.target_ratio = c.ratio;
  policy.accept_lo = c.lo;
  policy.accept_hi = c.hi;
  policy.max_attempts = c.max_attempts;
  policy.tokenizer = tokenizer;
  if (!c.example.empty()) policy.example = ExamplePair::load(c.example);
  for (const auto& item : c.op_examples) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw UsageError("--op-example expects OP=PATH, got '" + item + "'");
    const auto name = item.substr(0, eq);
    const auto path = item.substr(eq + 1);
    const auto op = parse_operation(name);
    if (!op) throw UsageError("--op-example: unknown operation '" + name + "'");
    policy.per_op_examples.emplace(*op, ExamplePair::load(path));
  }
  if (const auto check = validate_record(policy); !check.ok()) throw UsageError("invalid policy: " + check.summary());
  if (data.prompts.empty()) throw DomainError("dataset " + c.dataset + " holds no prompts");

  const auto opened = open(compressor);
  const auto client = opened.client(limiter(common, opened));
  const auto records = compress_dataset(policy, data.prompts, client, common.parallel);

  CompressionHeader header;
  header.tokenizer_id = tokenizer.id();
  header.source_dataset = fs::path(c.dataset).filename().string();
  header.created_at = timestamp(common);
  header.target_ratio = policy.target_ratio;
  header.accept_lo = policy.accept_lo;
  header.accept_hi = policy.accept_hi;
  header.max_attempts = policy.max_attempts;
  header.example_version = policy.example.version();
  write_compression(c.out, header, records);

  std::size_t fallbacks = 0;
  std::size_t errors = 0;
  for (const auto& r : records) {
    fallbacks += r.fell_back ? 1 : 0;
    for (const auto& a : r.attempts) errors += a.verdict == Verdict::Error ? 1 : 0;
  }
  if (!c.out_dataset.empty()) {
    std::vector<AttackPrompt> prompts;
    for (std::size_t i = 0; i < records.size(); ++i) prompts.push_back(compressed_prompt(data.prompts[i], records[i], tokenizer));
    DatasetHeader dh = data.header;
    dh.tokenizer_id = tokenizer.id();
    dh.created_at = header.created_at;
    dh.label = data.header.label.empty() ? fs::path(c.out_dataset).stem().string() : data.header.label + "-compressed";
    dh.extra["compressed_from"] = header.source_dataset;
    write_dataset(c.out_dataset, dh, prompts, &tokenizer);
  }

  out << "Compressed " << records.size() << " prompts\n";
  out << "CR: " << percent_string(compute_cr(records)) << "\n";
  out << "Fallback: " << fallbacks << "/" << records.size() << "\n";
  if (errors > 0) out << "Compressor errors: " << errors << " attempts\n";
  return records.empty() ? kExitRuntime : kExitOk;
}

// ---------------------------------------------------------------------------

struct AttackFlags {
  std::string dataset;
  std::string approach = "normal";
  long long lambda = 3;
  std::string special_token{kDefaultSpecialToken};
  std::optional<std::string> carrier;
  bool exclude_errors = false;
  std::string compression;
  std::string out;
};

int cmd_attack(const AttackFlags& a, const EndpointFlags& target, const CommonFlags& common, std::ostream& out) {
  require_file(a.dataset, "dataset");
  const auto approach = parse_approach(a.approach);
  if (!approach) throw UsageError("unknown approach '" + a.approach + "'; valid: normal, prefix1, prefix2, prefix3");
  if (a.lambda < 1) throw UsageError("--lambda must be at least 1");
  const auto data = read_dataset(a.dataset);
  if (data.prompts.empty()) throw DomainError("dataset " + a.dataset + " holds no prompts");

  std::optional<Fraction> cr;
  if (!a.compression.empty()) {
    require_file(a.compression, "compression records");
    const auto comp = read_compression(a.compression);
    if (comp.header.tokenizer_id != data.header.tokenizer_id) {
      throw ConfigError("tokenizer mismatch: compression records use '" + comp.header.tokenizer_id +
                        "', dataset uses '" + data.header.tokenizer_id + "'");
    }
    if (!comp.records.empty()) cr = compute_cr(comp.records);
  }

  const auto opened = open(target);
  CampaignConfig config;
  config.dataset_path = a.dataset;
  config.approach = *approach;
  config.lambda = static_cast<std::uint32_t>(a.lambda);
  config.max_parallel = common.parallel;
  config.rate_limit_per_sec = common.rate.value_or(kDefaultRate);
  config.target = opened.endpoint;
  config.special_token = a.special_token;
  config.carrier_prompt = a.carrier;
  config.exclude_errors = a.exclude_errors;

  const auto client = opened.client(limiter(common, opened));
  const auto results = run_campaign(config, data.prompts, client, RunOptions{!common.seed.has_value()});

  ResultsHeader header;
  header.manifest.config_hash = config_hash(config);
  header.manifest.tokenizer_id = data.header.tokenizer_id;
  header.manifest.endpoint = opened.endpoint;
  header.manifest.code_version = code_version();
  header.manifest.dataset_label = data.header.label.empty() ? fs::path(a.dataset).stem().string() : data.header.label;
  header.manifest.approach = config.approach;
  header.manifest.lambda = config.lambda;
  header.manifest.special_token = config.special_token;
  header.manifest.exclude_errors = config.exclude_errors;
  header.manifest.prompts = results.size();
  header.manifest.search_stats = data.header.search_stats;
  header.created_at = timestamp(common);
  header.cr = cr;
  std::map<std::string, std::size_t> counts;
  for (const auto& r : results) {
    header.manifest.trials += r.trials.size();
    for (const auto& t : r.trials) ++counts[std::string(outcome_kind(t.outcome))];
  }
  write_results(a.out, header, results);

  out << header.manifest.trials << " trials (" << results.size() << " prompts x lambda " << config.lambda << ")\n";
  out << "Outcomes: empty " << counts["empty"] << ", normal " << counts["normal"] << ", special_token "
      << counts["special_token"] << ", error " << counts["error"] << "\n";
  out << "ASR: " << percent_string(compute_asr(results, config.lambda, config.exclude_errors)) << "\n";
  if (is_prefix_approach(config.approach)) out << "Trigger rate: " << percent_string(compute_trigger_rate(results)) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ReportFlags {
  std::vector<std::string> files;
  std::string format = "table";
  std::string out;
};

int cmd_report(const ReportFlags& r, std::ostream& out) {
  const auto format = parse_report_format(r.format);
  std::vector<MetricsReport> reports;
  std::string first_tokenizer;
  std::string first_file;
  for (const auto& file : r.files) {
    require_file(file, "results file");
    const auto data = read_results(file);
    std::uint64_t trials = 0;
    for (const auto& pr : data.results) trials += pr.trials.size();
    if (trials == 0) throw DomainError(file + ": no trials");
    const auto& m = data.header.manifest;
    if (first_file.empty()) {
      first_tokenizer = m.tokenizer_id;
      first_file = file;
    } else if (m.tokenizer_id != first_tokenizer) {
      throw ConfigError("refusing to merge results counted with different tokenizers: '" + first_tokenizer + "' (" +
                        first_file + ") vs '" + m.tokenizer_id + "' (" + file + ")");
    }
    MetricsReport rep;
    rep.dataset_label = m.dataset_label;
    rep.cr = data.header.cr;
    rep.asr = compute_asr(data.results, m.lambda, m.exclude_errors);
    rep.trigger_rate = compute_trigger_rate(data.results);
    rep.search_stats = m.search_stats;
    rep.lambda = m.lambda;
    rep.prompts = data.results.size();
    rep.trials = trials;
    rep.tokenizer_id = m.tokenizer_id;
    rep.config_hash = m.config_hash;
    rep.approach = m.approach;
    reports.push_back(std::move(rep));
  }
  const auto text = render_report(reports, format);
  if (r.out.empty()) {
    out << text;
  } else {
    atomic_write(r.out, text);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ServeFlags {
  std::string profile = "default";
  std::string host = "127.0.0.1";
  int port = 8089;
  std::optional<std::uint64_t> seed;
  std::string log;
};

int cmd_serve_sim(const ServeFlags& s, std::ostream& out) {
  auto behavior = SimBehavior::builtin(s.profile);
  SimBehavior b = behavior ? *behavior : load_profile(s.profile);
  if (s.seed) b.rng_seed = *s.seed;

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  auto server = SimServer::start(std::move(b), s.host, s.port);
  out << "Simulator '" << server->target().behavior().label << "' listening on " << server->base_url() << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  server->stop();
  if (!s.log.empty()) server->target().write_log(s.log);
  out << "Stopped after " << server->target().request_log().size() << " requests" << std::endl;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Config file: a JSON object whose "defaults" section and per-subcommand sections map
// long option names to values. Values are inserted ahead of the real arguments, so the
// command line wins.

const std::set<std::string> kForbiddenKeys = {"api_key", "apikey", "key", "secret", "password", "authorization",
                                              "bearer"};

std::vector<std::string> config_args(const fs::path& path, const std::string& subcommand) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path.string() + ": config must be a JSON object");
  std::vector<std::string> args;
  for (const auto* section : {"defaults", subcommand.c_str()}) {
    if (!j.contains(section)) continue;
    for (const auto& [key, value] : j[section].items()) {
      if (kForbiddenKeys.count(key)) {
        throw ConfigError(path.string() + ": key '" + key +
                          "' looks like a secret; API keys are read only from environment variables");
      }
      if (value.is_boolean()) {
        if (value.get<bool>()) args.push_back("--" + key);
      } else if (value.is_array()) {
        for (const auto& v : value) {
          args.push_back("--" + key);
          args.push_back(v.is_string() ? v.get<std::string>() : v.dump());
        }
      } else {
        args.push_back("--" + key);
        args.push_back(value.is_string() ? value.get<std::string>() : value.dump());
      }
    }
  }
  return args;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  static const std::set<std::string> kCommands = {"search", "compress", "attack", "report", "serve-sim"};
  std::vector<std::string> args(argv, argv + argc);

  CLI::App app{"Reasoning interruption red-teaming harness", "thinkstop"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_version_flag("--version", THINKSTOP_CLI_VERSION);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (no secrets)");

  CommonFlags common;
  EndpointFlags target;
  EndpointFlags compressor;

  SearchFlags search;
  auto* s = app.add_subcommand("search", "Collect attack prompts for one operation type");
  s->add_option("--op", search.op, "add, sub, mul or div (or + - * /)")->required();
  s->add_option("--n", search.n, "Number of prompts")->capture_default_str();
  s->add_option("--p1", search.p1, "Lower operand bound")->capture_default_str();
  s->add_option("--p2", search.p2, "Upper operand bound")->capture_default_str();
  s->add_option("--template", search.templ, "Seed template version (v1, v2)")->capture_default_str();
  s->add_option("--max-calls", search.max_calls, "Paired attempts per seed")->capture_default_str();
  s->add_option("--budget", search.budget, "Paired attempts allowed in total");
  s->add_option("--label", search.label, "Dataset label (default: output file stem)");
  s->add_option("--out", search.out, "Dataset JSONL to write")->required();
  add_endpoint_flags(s, target, "target", true);
  add_common_flags(s, common);

  CompressFlags compress;
  auto* c = app.add_subcommand("compress", "Compress a dataset with length verification");
  c->add_option("--dataset", compress.dataset, "Dataset JSONL")->required();
  c->add_option("--ratio", compress.ratio, "Target length ratio")->capture_default_str();
  c->add_option("--lo", compress.lo, "Lowest accepted ratio")->capture_default_str();
  c->add_option("--hi", compress.hi, "Highest accepted ratio")->capture_default_str();
  c->add_option("--max-attempts", compress.max_attempts, "Compressor calls per prompt")->capture_default_str();
  c->add_option("--example", compress.example, "M/N example pair JSON replacing the built-in pair");
  c->add_option("--op-example", compress.op_examples, "Per-operation example pair: OP=PATH")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  c->add_option("--out", compress.out, "Compression records JSONL to write")->required();
  c->add_option("--out-dataset", compress.out_dataset, "Also write the compressed prompts as a dataset");
  add_endpoint_flags(c, compressor, "compressor", true);
  add_common_flags(c, common);

  AttackFlags attack;
  auto* a = app.add_subcommand("attack", "Run lambda trials per prompt under one approach");
  a->add_option("--dataset", attack.dataset, "Dataset JSONL")->required();
  a->add_option("--approach", attack.approach, "normal, prefix1, prefix2 or prefix3")->capture_default_str();
  a->add_option("--lambda", attack.lambda, "Trials per prompt")->capture_default_str();
  a->add_option("--special-token", attack.special_token, "Literal marking the end of thinking")->capture_default_str();
  a->add_option("--carrier", attack.carrier, "Carrier prompt placed before the attack text (normal approach)");
  a->add_flag("--exclude-errors", attack.exclude_errors, "Leave failed requests out of ASR");
  a->add_option("--compression", attack.compression, "Compression records whose CR is stored with the results");
  a->add_option("--out", attack.out, "Results JSONL to write")->required();
  add_endpoint_flags(a, target, "target", true);
  add_common_flags(a, common);

  ReportFlags report;
  auto* r = app.add_subcommand("report", "Merge result files into a metrics report");
  r->add_option("files", report.files, "Results JSONL files")->required()->multi_option_policy(
      CLI::MultiOptionPolicy::TakeAll);
  r->add_option("--format", report.format, "table or csv")->capture_default_str();
  r->add_option("--out", report.out, "Write the report here instead of stdout");

  ServeFlags serve;
  auto* v = app.add_subcommand("serve-sim", "Serve the simulated target over HTTP");
  v->add_option("--profile", serve.profile, "Built-in profile name or profile JSON path")->capture_default_str();
  v->add_option("--host", serve.host, "Bind address")->capture_default_str();
  v->add_option("--port", serve.port, "Port (0 picks a free one)")->capture_default_str();
  v->add_option("--seed", serve.seed, "Override the profile's rng_seed");
  v->add_option("--log", serve.log, "Write the request log (JSONL) here on shutdown");

  try {
    // Locate --config and the subcommand without a full parse so config values can be
    // spliced in ahead of the user's own arguments.
    std::string cfg;
    std::size_t cmd_index = 0;
    for (std::size_t i = 1; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size()) cfg = args[i + 1];
      if (args[i].starts_with("--config=")) cfg = args[i].substr(9);
      if (!cmd_index && kCommands.count(args[i])) cmd_index = i;
    }
    if (!cfg.empty() && cmd_index) {
      const auto extra = config_args(cfg, args[cmd_index]);
      args.insert(args.begin() + static_cast<std::ptrdiff_t>(cmd_index) + 1, extra.begin(), extra.end());
    }
    std::vector<const char*> cargs;
    for (const auto& x : args) cargs.push_back(x.c_str());
    try {
      app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::Success& e) {
      return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
      app.exit(e, out, err);
      return kExitUsage;
    }

    if (s->parsed()) return cmd_search(search, target, common, out);
    if (c->parsed()) return cmd_compress(compress, compressor, common, out);
    if (a->parsed()) return cmd_attack(attack, target, common, out);
    if (r->parsed()) return cmd_report(report, out);
    if (v->parsed()) return cmd_serve_sim(serve, out);
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace thinkstop::cli
