#include "thinkstop/seedgen.hpp"

#include "thinkstop/error.hpp"

#include <regex>

namespace thinkstop {

ValidationResult validate_record(const SeedConfig& cfg) {
  ValidationResult r;
  if (cfg.p1 <= 0) r.add("p1", "lower bound must be positive");
  if (cfg.p2 <= cfg.p1) r.add("p2", "upper bound must exceed lower bound");
  if (cfg.template_version != "v1" && cfg.template_version != "v2") {
    r.add("template_version", "unknown template '" + cfg.template_version + "'");
  }
  return r;
}

ValidationResult validate_record(const SeedTask& seed, const SeedConfig& cfg) {
  auto r = validate_record(seed);
  if (seed.a < cfg.p1 || seed.a > cfg.p2) r.add("a", "outside interval");
  if (seed.b < cfg.p1 || seed.b > cfg.p2) r.add("b", "outside interval");
  return r;
}

std::pair<std::int64_t, std::int64_t> gen_operands(const SeedConfig& cfg, Rng& rng) {
  if (const auto check = validate_record(cfg); !check.ok()) {
    throw ConfigError("invalid seed interval [" + std::to_string(cfg.p1) + ", " + std::to_string(cfg.p2) +
                      "]: " + check.summary());
  }
  // Two distinct uniform draws, ordered, are uniform over unordered pairs.
  std::uniform_int_distribution<std::int64_t> dist(cfg.p1, cfg.p2);
  while (true) {
    const auto x = dist(rng);
    const auto y = dist(rng);
    if (x == y) continue;
    return x > y ? std::pair{x, y} : std::pair{y, x};
  }
}

SeedTask gen_seed_prompt(OperationType op, std::int64_t a, std::int64_t b, const std::string& template_version) {
  if (!(a > b)) throw DomainError("seed operands must satisfy a > b");
  SeedTask seed{op, a, b, {}, template_version};
  const std::string lhs = std::to_string(a);
  const std::string rhs = std::to_string(b);
  const std::string sym(symbol(op));
  if (template_version == "v1") {
    seed.rendered = "Calculate " + lhs + " " + sym + " " + rhs + ".";
  } else if (template_version == "v2") {
    seed.rendered = "What is " + lhs + " " + sym + " " + rhs + "?";
  } else {
    throw ConfigError("unknown seed template '" + template_version + "'");
  }
  return seed;
}

std::optional<SeedTask> parse_seed_prompt(std::string_view text) {
  static const std::regex kV1(R"(^Calculate (\d+) ([-+*/]) (\d+)\.$)");
  static const std::regex kV2(R"(^What is (\d+) ([-+*/]) (\d+)\?$)");
  const std::string s(trim(text));
  std::smatch m;
  std::string version;
  if (std::regex_match(s, m, kV1)) {
    version = "v1";
  } else if (std::regex_match(s, m, kV2)) {
    version = "v2";
  } else {
    return std::nullopt;
  }
  if (m[1].length() > 15 || m[3].length() > 15) return std::nullopt;
  const auto a = std::stoll(m[1].str());
  const auto b = std::stoll(m[3].str());
  if (!(a > b)) return std::nullopt;
  return gen_seed_prompt(*parse_operation(m[2].str()), a, b, version);
}

Rng make_rng(const std::optional<std::uint64_t>& seed, std::uint64_t stream) {
  std::uint64_t base = 0;
  if (seed) {
    base = *seed;
  } else {
    std::random_device rd;
    base = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

void to_json(nlohmann::json& j, const SeedConfig& c) {
  j = nlohmann::json{{"p1", c.p1}, {"p2", c.p2}, {"template_version", c.template_version}};
  j["rng_seed"] = c.rng_seed ? nlohmann::json(*c.rng_seed) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, SeedConfig& c) {
  j.at("p1").get_to(c.p1);
  j.at("p2").get_to(c.p2);
  c.template_version = j.value("template_version", std::string("v1"));
  if (j.contains("rng_seed") && !j["rng_seed"].is_null()) {
    c.rng_seed = j["rng_seed"].get<std::uint64_t>();
  } else {
    c.rng_seed.reset();
  }
}

}  // namespace thinkstop
