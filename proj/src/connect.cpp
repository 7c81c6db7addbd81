#include "thinkstop/connect.hpp"

#include "thinkstop/error.hpp"

#include <charconv>

namespace thinkstop {

namespace {

constexpr std::string_view kSimScheme = "sim://";

double parse_prob(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double p = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return p;
  } catch (const std::exception&) {
    throw UsageError("sim parameter " + key + ": not a number: '" + value + "'");
  }
}

bool parse_flag(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw UsageError("sim parameter " + key + ": expected 0 or 1, got '" + value + "'");
}

void apply_param(SimBehavior& b, const std::string& key, const std::string& value) {
  if (key == "seed") {
    std::uint64_t seed = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), seed);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
      throw UsageError("sim parameter seed: not an unsigned integer: '" + value + "'");
    }
    b.rng_seed = seed;
  } else if (key == "trigger" || key == "special") {
    const double p = parse_prob(key, value);
    for (auto op : kAllOperations) (key == "trigger" ? b.profile(op).trigger_prob : b.profile(op).special_token_prob) = p;
    (key == "trigger" ? b.fallback.trigger_prob : b.fallback.special_token_prob) = p;
  } else if (key.starts_with("trigger_") || key.starts_with("special_")) {
    const auto name = key.substr(8);
    const auto op = parse_operation(name);
    if (!op) throw UsageError("sim parameter " + key + ": unknown operation '" + name + "'");
    const double p = parse_prob(key, value);
    (key[0] == 't' ? b.profile(*op).trigger_prob : b.profile(*op).special_token_prob) = p;
  } else if (key == "prefix1_normal") {
    b.prefix1_normal = parse_flag(key, value);
  } else if (key == "prefix") {
    b.supports_prefix = parse_flag(key, value);
  } else if (key == "ratio") {
    b.compress_ratio = parse_prob(key, value);
  } else if (key == "answer") {
    if (value == "exact") b.answer_mode = AnswerMode::ExactArithmetic;
    else if (value == "canned") b.answer_mode = AnswerMode::Canned;
    else throw UsageError("sim parameter answer: expected exact or canned");
  } else {
    throw UsageError("unknown sim parameter '" + key + "'");
  }
}

}  // namespace

bool is_sim_uri(std::string_view uri) { return uri.starts_with(kSimScheme); }

SimBehavior parse_sim_uri(std::string_view uri) {
  if (!is_sim_uri(uri)) throw UsageError("not a sim:// URI: " + std::string(uri));
  std::string rest(uri.substr(kSimScheme.size()));
  std::string profile;
  std::string query;
  if (const auto q = rest.find('?'); q != std::string::npos) {
    profile = rest.substr(0, q);
    query = rest.substr(q + 1);
  } else if (rest.find('=') != std::string::npos) {
    query = rest;
  } else {
    profile = rest;
  }

  SimBehavior b;
  if (auto builtin = SimBehavior::builtin(profile)) {
    b = std::move(*builtin);
  } else {
    b = load_profile(profile);
  }

  std::size_t pos = 0;
  while (pos < query.size()) {
    auto end = query.find('&', pos);
    if (end == std::string::npos) end = query.size();
    const std::string item = query.substr(pos, end - pos);
    pos = end + 1;
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw UsageError("sim parameter '" + item + "' needs a value");
    apply_param(b, item.substr(0, eq), item.substr(eq + 1));
  }
  if (const auto check = validate_record(b); !check.ok()) throw UsageError("invalid sim target: " + check.summary());
  return b;
}

OpenedTarget open_target(const std::string& uri, EndpointDescriptor base) {
  OpenedTarget t;
  if (is_sim_uri(uri)) {
    auto behavior = parse_sim_uri(uri);
    t.endpoint = std::move(base);
    t.endpoint.base_url = uri;
    if (t.endpoint.model_name.empty()) t.endpoint.model_name = behavior.model_name;
    t.endpoint.supports_prefix = behavior.supports_prefix;
    t.endpoint.api_key_env.clear();
    t.sim = std::make_shared<SimTarget>(std::move(behavior));
    t.transport = std::make_shared<SimTransport>(t.sim);
    return t;
  }
  if (!uri.starts_with("http://") && !uri.starts_with("https://")) {
    throw UsageError("target must be an http(s):// or sim:// URI, got '" + uri + "'");
  }
  t.endpoint = std::move(base);
  t.endpoint.base_url = uri;
  t.transport = std::make_shared<HttpTransport>(uri, std::chrono::milliseconds(t.endpoint.timeout_ms));
  return t;
}

}  // namespace thinkstop
