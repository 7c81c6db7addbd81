#include "thinkstop/domain.hpp"

#include "thinkstop/error.hpp"
#include "thinkstop/hash.hpp"

#include <algorithm>
#include <array>

namespace thinkstop {

using nlohmann::json;

std::string_view symbol(OperationType op) {
  switch (op) {
    case OperationType::Add: return "+";
    case OperationType::Sub: return "-";
    case OperationType::Mul: return "*";
    case OperationType::Div: return "/";
  }
  return "?";
}

std::optional<OperationType> parse_operation(std::string_view text) {
  if (text == "+" || text == "add") return OperationType::Add;
  if (text == "-" || text == "sub") return OperationType::Sub;
  if (text == "*" || text == "mul") return OperationType::Mul;
  if (text == "/" || text == "div") return OperationType::Div;
  return std::nullopt;
}

std::string_view to_string(Approach approach) {
  switch (approach) {
    case Approach::Normal: return "normal";
    case Approach::Prefix1: return "prefix1";
    case Approach::Prefix2: return "prefix2";
    case Approach::Prefix3: return "prefix3";
  }
  return "?";
}

std::optional<Approach> parse_approach(std::string_view text) {
  for (auto a : {Approach::Normal, Approach::Prefix1, Approach::Prefix2, Approach::Prefix3}) {
    if (text == to_string(a)) return a;
  }
  return std::nullopt;
}

std::string_view trim(std::string_view s) {
  constexpr std::string_view kSpace = " \t\n\v\f\r";
  const auto first = s.find_first_not_of(kSpace);
  if (first == std::string_view::npos) return s.substr(0, 0);
  const auto last = s.find_last_not_of(kSpace);
  return s.substr(first, last - first + 1);
}

std::string group_thousands(std::int64_t value) {
  std::string digits = std::to_string(value < 0 ? -value : value);
  std::string out;
  const std::size_t lead = digits.size() % 3 == 0 ? 3 : digits.size() % 3;
  out.append(digits, 0, lead);
  for (std::size_t i = lead; i < digits.size(); i += 3) {
    out.push_back(',');
    out.append(digits, i, 3);
  }
  return value < 0 ? "-" + out : out;
}

bool is_empty_answer(const std::optional<std::string>& content) {
  return !content || trim(*content).empty();
}

std::string make_prompt_id(std::string_view text, const std::optional<OperationType>& op,
                           const std::optional<SeedTask>& seed) {
  std::string key(text);
  key.push_back('\x1f');
  key.append(op ? symbol(*op) : kBaselineOp);
  key.push_back('\x1f');
  if (seed) {
    key.append(symbol(seed->op));
    key.push_back('|');
    key.append(std::to_string(seed->a));
    key.push_back('|');
    key.append(std::to_string(seed->b));
    key.push_back('|');
    key.append(seed->template_version);
  }
  return sha256_hex(key, 16);
}

AttackPrompt make_attack_prompt(std::string text, std::optional<OperationType> op,
                                std::optional<SeedTask> seed, const Tokenizer& tokenizer,
                                std::uint32_t search_calls_used) {
  AttackPrompt p;
  p.id = make_prompt_id(text, op, seed);
  p.token_count = tokenizer.count(text);
  p.tokenizer_id = tokenizer.id();
  p.text = std::move(text);
  p.op = op;
  p.seed = std::move(seed);
  p.search_calls_used = search_calls_used;
  return p;
}

std::string_view outcome_kind(const TrialOutcome& outcome) {
  static constexpr std::array<std::string_view, 4> kNames = {"empty", "normal", "special_token", "error"};
  return kNames[outcome.index()];
}

bool ValidationResult::has(std::string_view field) const {
  return std::any_of(violations.begin(), violations.end(),
                     [&](const Violation& v) { return v.field == field; });
}

void ValidationResult::add(std::string field, std::string message) {
  violations.push_back({std::move(field), std::move(message)});
}

std::string ValidationResult::summary() const {
  std::string out;
  for (const auto& v : violations) {
    if (!out.empty()) out += "; ";
    out += v.field + ": " + v.message;
  }
  return out;
}

namespace {

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

}  // namespace

ValidationResult validate_record(const SeedTask& seed) {
  ValidationResult r;
  if (!(seed.a > seed.b)) r.add("a > b", "operand a must exceed b");
  if (seed.b <= 0) r.add("b", "operands must be positive");
  if (seed.rendered.empty()) {
    r.add("rendered", "empty seed prompt");
  } else if (count_occurrences(seed.rendered, std::to_string(seed.a)) == 0 ||
             count_occurrences(seed.rendered, std::to_string(seed.b)) == 0) {
    r.add("rendered", "seed prompt does not state both operands");
  }
  if (seed.template_version.empty()) r.add("template_version", "missing template version");
  return r;
}

ValidationResult validate_record(const AttackPrompt& prompt, const Tokenizer* tokenizer) {
  ValidationResult r;
  if (prompt.id.empty()) r.add("id", "missing id");
  if (prompt.text.empty()) r.add("text", "attack prompt text is empty");
  if (prompt.tokenizer_id.empty()) r.add("tokenizer_id", "missing tokenizer id");
  if (prompt.search_calls_used == 0) r.add("search_calls_used", "must be positive");
  if (prompt.seed) {
    auto seed_check = validate_record(*prompt.seed);
    for (auto& v : seed_check.violations) r.add("seed." + v.field, v.message);
    if (prompt.op && prompt.seed->op != *prompt.op) r.add("op", "prompt op differs from seed op");
  }
  if (prompt.op && !prompt.seed) r.add("seed", "arithmetic prompt without seed task");

  std::optional<Tokenizer> builtin;
  if (!tokenizer && prompt.tokenizer_id == kDefaultTokenizerId) {
    builtin.emplace();
    tokenizer = &*builtin;
  }
  if (tokenizer) {
    if (tokenizer->id() != prompt.tokenizer_id) {
      r.add("tokenizer_id", "expected '" + tokenizer->id() + "', found '" + prompt.tokenizer_id + "'");
    } else if (const auto recount = tokenizer->count(prompt.text); recount != prompt.token_count) {
      r.add("token_count", "stored " + std::to_string(prompt.token_count) + ", recount " +
                               std::to_string(recount));
    }
  }
  return r;
}

ValidationResult validate_record(const AttackTrial& trial) {
  ValidationResult r;
  if (trial.prompt_id.empty()) r.add("prompt_id", "missing prompt id");
  if (!(trial.latency_ms >= 0.0)) r.add("latency_ms", "must be non-negative");
  if (trial.request_digest.size() != 64) r.add("request_digest", "expected 64 hex characters");
  return r;
}

// ---------------------------------------------------------------------------
// JSON

void to_json(json& j, OperationType op) { j = std::string(symbol(op)); }

void from_json(const json& j, OperationType& op) {
  const auto parsed = parse_operation(j.get<std::string>());
  if (!parsed) throw std::invalid_argument("unknown operation '" + j.get<std::string>() + "'");
  op = *parsed;
}

void to_json(json& j, Approach a) { j = std::string(to_string(a)); }

void from_json(const json& j, Approach& a) {
  const auto parsed = parse_approach(j.get<std::string>());
  if (!parsed) throw std::invalid_argument("unknown approach '" + j.get<std::string>() + "'");
  a = *parsed;
}

void to_json(json& j, const SeedTask& s) {
  j = json{{"op", s.op}, {"a", s.a}, {"b", s.b}, {"rendered", s.rendered},
           {"template_version", s.template_version}};
}

void from_json(const json& j, SeedTask& s) {
  j.at("op").get_to(s.op);
  j.at("a").get_to(s.a);
  j.at("b").get_to(s.b);
  j.at("rendered").get_to(s.rendered);
  s.template_version = j.value("template_version", std::string("v1"));
}

namespace {
constexpr std::array<std::string_view, 8> kPromptFields = {
    "id", "text", "op", "seed", "token_count", "tokenizer_id", "search_calls_used", "extra"};
}

void to_json(json& j, const AttackPrompt& p) {
  j = p.extra.is_object() ? p.extra : json::object();
  j["id"] = p.id;
  j["text"] = p.text;
  j["op"] = p.op ? json(*p.op) : json(std::string(kBaselineOp));
  if (p.seed) j["seed"] = *p.seed;
  j["token_count"] = p.token_count;
  j["tokenizer_id"] = p.tokenizer_id;
  j["search_calls_used"] = p.search_calls_used;
}

void from_json(const json& j, AttackPrompt& p) {
  j.at("id").get_to(p.id);
  j.at("text").get_to(p.text);
  const auto op = j.at("op").get<std::string>();
  if (op == kBaselineOp) {
    p.op.reset();
  } else {
    p.op = j.at("op").get<OperationType>();
  }
  if (j.contains("seed") && !j["seed"].is_null()) {
    p.seed = j["seed"].get<SeedTask>();
  } else {
    p.seed.reset();
  }
  j.at("token_count").get_to(p.token_count);
  j.at("tokenizer_id").get_to(p.tokenizer_id);
  p.search_calls_used = j.value("search_calls_used", 1u);
  p.extra = json::object();
  for (const auto& [key, value] : j.items()) {
    if (std::find(kPromptFields.begin(), kPromptFields.end(), key) == kPromptFields.end()) {
      p.extra[key] = value;
    }
  }
}

void to_json(json& j, const ModelResponse& r) {
  j = json::object();
  j["reasoning"] = r.reasoning ? json(*r.reasoning) : json(nullptr);
  j["content"] = r.content ? json(*r.content) : json(nullptr);
  j["raw"] = r.raw;
}

void from_json(const json& j, ModelResponse& r) {
  r.reasoning = j.at("reasoning").is_null() ? std::nullopt
                                            : std::optional<std::string>(j["reasoning"].get<std::string>());
  r.content = j.at("content").is_null() ? std::nullopt
                                        : std::optional<std::string>(j["content"].get<std::string>());
  j.at("raw").get_to(r.raw);
}

void to_json(json& j, const TrialOutcome& o) {
  j = json{{"kind", std::string(outcome_kind(o))}};
  if (const auto* s = std::get_if<SpecialTokenAnswer>(&o)) {
    j["pre_text"] = s->pre_text;
    j["post_text"] = s->post_text;
  } else if (const auto* e = std::get_if<TrialError>(&o)) {
    j["message"] = e->message;
  }
}

void from_json(const json& j, TrialOutcome& o) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "empty") {
    o = EmptyAnswer{};
  } else if (kind == "normal") {
    o = NormalAnswer{};
  } else if (kind == "special_token") {
    o = SpecialTokenAnswer{j.at("pre_text").get<std::string>(), j.at("post_text").get<std::string>()};
  } else if (kind == "error") {
    o = TrialError{j.value("message", std::string())};
  } else {
    throw std::invalid_argument("unknown outcome kind '" + kind + "'");
  }
}

void to_json(json& j, const AttackTrial& t) {
  j = json{{"prompt_id", t.prompt_id},   {"trial_index", t.trial_index},
           {"approach", t.approach},     {"outcome", t.outcome},
           {"latency_ms", t.latency_ms}, {"request_digest", t.request_digest}};
}

void from_json(const json& j, AttackTrial& t) {
  j.at("prompt_id").get_to(t.prompt_id);
  j.at("trial_index").get_to(t.trial_index);
  j.at("approach").get_to(t.approach);
  j.at("outcome").get_to(t.outcome);
  j.at("latency_ms").get_to(t.latency_ms);
  j.at("request_digest").get_to(t.request_digest);
}

}  // namespace thinkstop
