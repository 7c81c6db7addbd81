#include "thinkstop/simtarget.hpp"

#include "thinkstop/error.hpp"
#include "thinkstop/hash.hpp"
#include "thinkstop/seedgen.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <sstream>

namespace thinkstop {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Profiles

SimBehavior SimBehavior::default_profile() {
  SimBehavior b;
  b.label = "default (synthetic calibration)";
  b.profile(OperationType::Add) = {0.72, 0.15};
  b.profile(OperationType::Sub) = {0.68, 0.35};
  b.profile(OperationType::Mul) = {0.40, 0.45};
  b.profile(OperationType::Div) = {0.36, 0.40};
  b.fallback = {0.50, 0.25};
  return b;
}

SimBehavior SimBehavior::uniform(double trigger_prob, double special_token_prob) {
  SimBehavior b;
  b.label = "uniform (synthetic)";
  for (auto op : kAllOperations) b.profile(op) = {trigger_prob, special_token_prob};
  b.fallback = {trigger_prob, special_token_prob};
  return b;
}

std::optional<SimBehavior> SimBehavior::builtin(std::string_view name) {
  if (name.empty() || name == "default") return default_profile();
  if (name == "always-empty") {
    auto b = uniform(1.0, 0.0);
    b.label = "always-empty (synthetic)";
    return b;
  }
  if (name == "never-empty") {
    auto b = uniform(0.0, 0.0);
    b.label = "never-empty (synthetic)";
    return b;
  }
  return std::nullopt;
}

ValidationResult validate_record(const SimBehavior& b) {
  ValidationResult r;
  auto check = [&](const OpProfile& p, const std::string& where) {
    if (!(p.trigger_prob >= 0.0 && p.trigger_prob <= 1.0)) r.add(where + ".trigger_prob", "must lie in [0,1]");
    if (!(p.special_token_prob >= 0.0 && p.special_token_prob <= 1.0)) {
      r.add(where + ".special_token_prob", "must lie in [0,1]");
    }
  };
  for (auto op : kAllOperations) check(b.profile(op), "ops." + std::string(symbol(op)));
  check(b.fallback, "fallback");
  if (b.special_token.empty()) r.add("special_token", "must not be empty");
  if (b.reflection_phrases.empty()) r.add("reflection_phrases", "need at least one phrase");
  if (!(b.compress_ratio >= 0.0)) r.add("compress_ratio", "must be non-negative");
  return r;
}

void to_json(json& j, const OpProfile& p) {
  j = json{{"trigger_prob", p.trigger_prob}, {"special_token_prob", p.special_token_prob}};
}

void from_json(const json& j, OpProfile& p) {
  for (const auto& [key, _] : j.items()) {
    if (key != "trigger_prob" && key != "special_token_prob") throw ConfigError("unknown profile field '" + key + "'");
  }
  p.trigger_prob = j.value("trigger_prob", p.trigger_prob);
  p.special_token_prob = j.value("special_token_prob", p.special_token_prob);
}

void to_json(json& j, const SimBehavior& b) {
  json ops = json::object();
  for (auto op : kAllOperations) ops[std::string(symbol(op))] = b.profile(op);
  j = json{{"label", b.label},
           {"ops", ops},
           {"fallback", b.fallback},
           {"prefix1_normal", b.prefix1_normal},
           {"rng_seed", b.rng_seed},
           {"special_token", b.special_token},
           {"answer_mode", b.answer_mode == AnswerMode::ExactArithmetic ? "exact" : "canned"},
           {"canned_answer", b.canned_answer},
           {"reflection_phrases", b.reflection_phrases},
           {"compress_ratio", b.compress_ratio},
           {"supports_prefix", b.supports_prefix},
           {"model_name", b.model_name}};
}

void from_json(const json& j, SimBehavior& b) {
  static const std::vector<std::string> kKnown = {
      "label",         "ops",           "fallback",           "prefix1_normal", "rng_seed",        "special_token",
      "answer_mode",   "canned_answer", "reflection_phrases", "compress_ratio", "supports_prefix", "model_name"};
  if (!j.is_object()) throw ConfigError("profile must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(kKnown.begin(), kKnown.end(), key) == kKnown.end()) {
      throw ConfigError("unknown profile field '" + key + "'");
    }
  }
  b.label = j.value("label", b.label);
  if (j.contains("ops")) {
    for (const auto& [key, value] : j["ops"].items()) {
      const auto op = parse_operation(key);
      if (!op) throw ConfigError("unknown operation '" + key + "' in ops");
      from_json(value, b.profile(*op));
    }
  }
  if (j.contains("fallback")) from_json(j["fallback"], b.fallback);
  b.prefix1_normal = j.value("prefix1_normal", b.prefix1_normal);
  b.rng_seed = j.value("rng_seed", b.rng_seed);
  b.special_token = j.value("special_token", b.special_token);
  if (j.contains("answer_mode")) {
    const auto mode = j["answer_mode"].get<std::string>();
    if (mode == "exact") b.answer_mode = AnswerMode::ExactArithmetic;
    else if (mode == "canned") b.answer_mode = AnswerMode::Canned;
    else throw ConfigError("answer_mode must be \"exact\" or \"canned\"");
  }
  b.canned_answer = j.value("canned_answer", b.canned_answer);
  if (j.contains("reflection_phrases")) b.reflection_phrases = j["reflection_phrases"].get<std::vector<std::string>>();
  b.compress_ratio = j.value("compress_ratio", b.compress_ratio);
  b.supports_prefix = j.value("supports_prefix", b.supports_prefix);
  b.model_name = j.value("model_name", b.model_name);
}

SimBehavior parse_profile(std::string_view text, const std::string& source_name) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t column = 1;
    const std::size_t end = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ConfigError(source_name + ":" + std::to_string(line) + ":" + std::to_string(column) +
                      ": invalid profile JSON: " + e.what());
  }
  SimBehavior b;
  try {
    b = j.get<SimBehavior>();
  } catch (const ConfigError& e) {
    throw ConfigError(source_name + ": " + e.what());
  } catch (const json::exception& e) {
    throw ConfigError(source_name + ": " + e.what());
  }
  if (const auto check = validate_record(b); !check.ok()) {
    throw ConfigError(source_name + ": " + check.summary());
  }
  return b;
}

SimBehavior load_profile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read profile " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_profile(ss.str(), path.string());
}

// ---------------------------------------------------------------------------
// Arithmetic and text generation

namespace {

using i128 = __int128;

std::string to_decimal(i128 v) {
  if (v == 0) return "0";
  const bool neg = v < 0;
  if (neg) v = -v;
  std::string s;
  while (v > 0) {
    s.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
    v /= 10;
  }
  if (neg) s.push_back('-');
  std::reverse(s.begin(), s.end());
  return s;
}

std::string grouped(i128 v) {
  const std::string digits = to_decimal(v < 0 ? -v : v);
  std::string out;
  const std::size_t lead = digits.size() % 3 == 0 ? 3 : digits.size() % 3;
  out.append(digits, 0, lead);
  for (std::size_t i = lead; i < digits.size(); i += 3) {
    out.push_back(',');
    out.append(digits, i, 3);
  }
  return v < 0 ? "-" + out : out;
}

std::string place_name(std::size_t k) {
  static const char* kNames[] = {"Units",     "Tens",          "Hundreds",          "Thousands",
                                 "Ten-thousands", "Hundred-thousands", "Millions", "Ten-millions",
                                 "Hundred-millions", "Billions", "Ten-billions", "Hundred-billions"};
  if (k < std::size(kNames)) return kNames[k];
  return "10^" + std::to_string(k);
}

int digit_at(i128 v, std::size_t k) {
  for (std::size_t i = 0; i < k; ++i) v /= 10;
  return static_cast<int>(v % 10);
}

std::size_t digit_count(i128 v) {
  std::size_t n = 1;
  while (v >= 10) {
    v /= 10;
    ++n;
  }
  return n;
}

int digital_root(i128 v) {
  const int m = static_cast<int>(v % 9);
  return m == 0 && v != 0 ? 9 : m;
}

i128 pow10(std::size_t k) {
  i128 p = 1;
  for (std::size_t i = 0; i < k; ++i) p *= 10;
  return p;
}

struct Quotient {
  i128 whole;
  i128 remainder;
};

}  // namespace

std::string exact_answer(OperationType op, std::int64_t a, std::int64_t b) {
  const i128 x = a;
  const i128 y = b;
  switch (op) {
    case OperationType::Add: return to_decimal(x + y);
    case OperationType::Sub: return to_decimal(x - y);
    case OperationType::Mul: return to_decimal(x * y);
    case OperationType::Div: {
      if (y == 0) return "undefined";
      constexpr int kDecimals = 6;
      const i128 scale = pow10(kDecimals);
      i128 scaled = (x * scale) / y;
      const i128 rem = (x * scale) % y;
      if (2 * rem >= y) ++scaled;
      std::string whole = to_decimal(scaled / scale);
      std::string frac = to_decimal(scaled % scale);
      frac.insert(0, kDecimals - frac.size(), '0');
      while (!frac.empty() && frac.back() == '0') frac.pop_back();
      return frac.empty() ? whole : whole + "." + frac;
    }
  }
  return {};
}

namespace {

std::string intro(const SeedTask& s, Rng& rng) {
  const std::string A = grouped(s.a);
  const std::string B = grouped(s.b);
  static const char* kReactions[] = {"Hmm, that's a pretty big ", "Alright, these are large numbers, so this is a real ",
                                     "Hmm, okay, a fairly long "};
  const char* reaction = kReactions[rng() % std::size(kReactions)];
  std::string out = "Okay, so I need to ";
  switch (s.op) {
    case OperationType::Add:
      out += "add " + A + " and " + B + ". " + reaction + "addition. Let me think about the best way to approach this. "
             "I'll line the numbers up by place value and add from right to left, carrying when a column passes 9.";
      break;
    case OperationType::Sub:
      out += "subtract " + B + " from " + A + ". " + reaction +
             "subtraction. Let me think about the best way to approach this. "
             "I'll align the numbers by place value and subtract digit by digit, borrowing when necessary.";
      break;
    case OperationType::Mul:
      out += "multiply " + A + " by " + B + ". " + reaction +
             "multiplication. Let me think about the best way to approach this. I remember that for large numbers, "
             "breaking them down into smaller parts might make it easier. Let me multiply " + A +
             " by each digit of " + B + " and add up the shifted partial products.";
      break;
    case OperationType::Div:
      out += "divide " + A + " by " + B + ". " + reaction +
             "division. Let me think about the best way to approach this. Long division should work: first the whole "
             "part, then the decimal digits.";
      break;
  }
  return out;
}

std::string steps(const SeedTask& s) {
  std::ostringstream out;
  const i128 a = s.a;
  const i128 b = s.b;
  switch (s.op) {
    case OperationType::Add: {
      int carry = 0;
      const std::size_t n = digit_count(a + b);
      for (std::size_t k = 0; k < n; ++k) {
        const int da = digit_at(a, k);
        const int db = digit_at(b, k);
        const int sum = da + db + carry;
        out << "- " << place_name(k) << " place: " << da << " + " << db;
        if (carry) out << " + 1 (carry)";
        out << " = " << sum << ", write " << sum % 10;
        if (sum >= 10) out << ", carry 1";
        out << ".\n";
        carry = sum / 10;
      }
      out << "\nSo the sum is " << grouped(a + b) << ".";
      break;
    }
    case OperationType::Sub: {
      int borrow = 0;
      const std::size_t n = digit_count(a);
      for (std::size_t k = 0; k < n; ++k) {
        const int da = digit_at(a, k) - borrow;
        const int db = digit_at(b, k);
        out << "- " << place_name(k) << " place: ";
        if (da < db) {
          out << da << " - " << db << " (borrow 1) -> " << da + 10 << " - " << db << " = " << da + 10 - db;
          borrow = 1;
        } else {
          out << da << " - " << db << " = " << da - db;
          borrow = 0;
        }
        out << ".\n";
      }
      out << "\nSo the difference is " << grouped(a - b) << ".";
      break;
    }
    case OperationType::Mul: {
      i128 running = 0;
      std::vector<i128> partials;
      const std::size_t n = digit_count(b);
      for (std::size_t k = 0; k < n; ++k) {
        const int d = digit_at(b, k);
        const i128 p = a * d * pow10(k);
        if (d == 0) {
          out << "- " << place_name(k) << " digit is 0, so that partial product is 0.\n";
        } else {
          out << "- " << place_name(k) << " digit " << d << ": " << grouped(a) << " x " << d << " = " << grouped(a * d);
          if (k > 0) out << ", shifted " << k << " place" << (k > 1 ? "s" : "") << " gives " << grouped(p);
          out << ".\n";
        }
        partials.push_back(p);
      }
      out << "\nNow adding the partial products:\n";
      for (const auto p : partials) {
        if (p == 0) continue;
        if (running == 0) {
          running = p;
          continue;
        }
        out << grouped(running) << " + " << grouped(p) << " = " << grouped(running + p) << "\n";
        running += p;
      }
      out << "\nSo the product is " << grouped(a * b) << ".";
      break;
    }
    case OperationType::Div: {
      const i128 q = a / b;
      i128 r = a % b;
      out << grouped(b) << " goes into " << grouped(a) << " " << grouped(q) << " time" << (q == 1 ? "" : "s") << ": "
          << grouped(b) << " x " << grouped(q) << " = " << grouped(b * q) << ", leaving a remainder of " << grouped(r)
          << ".\n";
      for (int i = 0; i < 7 && r != 0; ++i) {
        const i128 num = r * 10;
        out << "- Bring down a zero: " << grouped(num) << " / " << grouped(b) << " = " << to_decimal(num / b)
            << ", remainder " << grouped(num % b) << ".\n";
        r = num % b;
      }
      out << "\nRounded to six decimal places, the quotient is " << exact_answer(s.op, s.a, s.b) << ".";
      break;
    }
  }
  return out.str();
}

std::vector<std::string> reflections(const SeedTask& s) {
  const i128 a = s.a;
  const i128 b = s.b;
  const std::string A = grouped(a);
  const std::string B = grouped(b);
  std::vector<std::string> out;
  switch (s.op) {
    case OperationType::Add: {
      const i128 r = a + b;
      out.push_back("Wait, let me check that again. If I subtract " + B + " from " + grouped(r) +
                    ", I should get back " + A + ": " + grouped(r) + " - " + B + " = " + grouped(r - b) +
                    ". That matches.");
      out.push_back("Hmm, maybe I should double-check the last digit. " + std::to_string(digit_at(a, 0)) + " + " +
                    std::to_string(digit_at(b, 0)) + " ends in " + std::to_string((digit_at(a, 0) + digit_at(b, 0)) % 10) +
                    ", and so does " + grouped(r) + ".");
      out.push_back("Let me verify with digital roots. " + A + " has digital root " + std::to_string(digital_root(a)) +
                    " and " + B + " has " + std::to_string(digital_root(b)) + "; together that reduces to " +
                    std::to_string(digital_root(digital_root(a) + digital_root(b))) + ", the same as " + grouped(r) + ".");
      break;
    }
    case OperationType::Sub: {
      const i128 r = a - b;
      out.push_back("Wait, let me check that again. Adding the result " + grouped(r) + " to the subtrahend " + B +
                    " should give back the minuend: " + grouped(r) + " + " + B + " = " + grouped(r + b) + ". Correct.");
      out.push_back("Hmm, let me estimate to be safe. " + A + " is roughly " + grouped((a / 1000000) * 1000000) +
                    " and " + B + " roughly " + grouped((b / 1000000) * 1000000) +
                    ", so the difference should be in the neighborhood of " +
                    grouped((a / 1000000 - b / 1000000) * 1000000) + ". " + grouped(r) + " fits.");
      out.push_back("Let me verify by checking the units digit: " + std::to_string(digit_at(a, 0)) + " minus " +
                    std::to_string(digit_at(b, 0)) + " leaves " + std::to_string((digit_at(a, 0) - digit_at(b, 0) + 10) % 10) +
                    " in the units place, which matches " + grouped(r) + ".");
      break;
    }
    case OperationType::Mul: {
      const i128 r = a * b;
      out.push_back("Wait, let me check that again with an estimate. " + A + " is about " +
                    grouped((a / 1000000) * 1000000) + " and " + B + " is about " + grouped((b / 1000000) * 1000000) +
                    ", so the product should be a bit above " + grouped((a / 1000000) * (b / 1000000) * 1000000000000) +
                    ". " + grouped(r) + " is consistent with that.");
      out.push_back("Hmm, let me check the last digit: " + std::to_string(digit_at(a, 0)) + " x " +
                    std::to_string(digit_at(b, 0)) + " ends in " + std::to_string((digit_at(a, 0) * digit_at(b, 0)) % 10) +
                    ", and " + grouped(r) + " ends in " + std::to_string(digit_at(r, 0)) + ".");
      out.push_back("Let me verify with digital roots. " + A + " has digital root " + std::to_string(digital_root(a)) +
                    ", " + B + " has " + std::to_string(digital_root(b)) + ", and their product reduces to " +
                    std::to_string(digital_root(digital_root(a) * digital_root(b))) + ", matching the digital root of " +
                    grouped(r) + ".");
      break;
    }
    case OperationType::Div: {
      const i128 q = a / b;
      const i128 r = a % b;
      out.push_back("Wait, let me check the whole part by multiplying back: " + B + " x " + grouped(q) + " + " +
                    grouped(r) + " = " + grouped(b * q + r) + ", which is exactly " + A + ".");
      out.push_back("Hmm, the remainder " + grouped(r) + " is smaller than the divisor " + B +
                    ", as it has to be, so the whole part is right.");
      out.push_back("Let me verify the size of the answer: " + A + " / " + B + " should be a little over " +
                    grouped(q) + ", and " + exact_answer(s.op, s.a, s.b) + " is.");
      break;
    }
  }
  return out;
}

std::string closing(const SeedTask& s) {
  const std::string A = grouped(s.a);
  const std::string B = grouped(s.b);
  const std::string R = exact_answer(s.op, s.a, s.b);
  switch (s.op) {
    case OperationType::Add:
      return "So, I feel confident that this is the correct sum.\n\n**Final Answer**\n\nThe sum of " + A + " and " + B +
             " is \\boxed{" + R + "}.";
    case OperationType::Sub:
      return "So, I feel confident that this is the correct difference.\n\n**Final Answer**\n\nThe result of subtracting " +
             B + " from " + A + " is \\boxed{" + R + "}.";
    case OperationType::Mul:
      return "So, I feel confident that this is the correct product.\n\n**Final Answer**\n\nThe product of " + A + " and " +
             B + " is \\boxed{" + R + "}.";
    case OperationType::Div:
      return "So, I feel confident that this is the correct quotient.\n\n**Final Answer**\n\n" + A + " divided by " + B +
             " is approximately \\boxed{" + R + "}.";
  }
  return {};
}

std::string reasoning_for_seed(const SeedTask& s, Rng& rng) {
  std::string text = intro(s, rng) + "\n\n" + steps(s) + "\n\n";
  auto checks = reflections(s);
  std::shuffle(checks.begin(), checks.end(), rng);
  const std::size_t keep = 1 + rng() % checks.size();
  for (std::size_t i = 0; i < keep; ++i) text += checks[i] + "\n\n";
  return text + closing(s);
}

std::optional<std::string> last_boxed(std::string_view text) {
  constexpr std::string_view kOpen = "\\boxed{";
  const auto pos = text.rfind(kOpen);
  if (pos == std::string_view::npos) return std::nullopt;
  const auto end = text.find('}', pos + kOpen.size());
  if (end == std::string_view::npos) return std::nullopt;
  return std::string(text.substr(pos + kOpen.size(), end - pos - kOpen.size()));
}

struct StatedTask {
  OperationType op;
  std::int64_t a;
  std::int64_t b;
};

std::int64_t parse_grouped(const std::string& s) {
  std::string digits;
  for (char c : s) {
    if (c != ',') digits.push_back(c);
  }
  return digits.size() > 17 ? 0 : std::stoll(digits);
}

// Recovers "I need to <verb> X (and|from|by) Y" from a reasoning text.
std::optional<StatedTask> stated_task(const std::string& text) {
  static const std::regex kTask(R"(need to (add|subtract|multiply|divide) ([0-9][0-9,]*) (?:and|from|by) ([0-9][0-9,]*))");
  std::smatch m;
  if (!std::regex_search(text, m, kTask)) return std::nullopt;
  const std::string verb = m[1].str();
  const auto x = parse_grouped(m[2].str());
  const auto y = parse_grouped(m[3].str());
  if (verb == "add") return StatedTask{OperationType::Add, x, y};
  if (verb == "subtract") return StatedTask{OperationType::Sub, y, x};
  if (verb == "multiply") return StatedTask{OperationType::Mul, x, y};
  return StatedTask{OperationType::Div, x, y};
}

std::string worked_summary(const std::string& reasoning) {
  const auto boxed = last_boxed(reasoning).value_or("?");
  const auto task = stated_task(reasoning);
  if (!task) return "Summarizing the calculation above, the final result is \\boxed{" + boxed + "}.";
  const std::string A = grouped(task->a);
  const std::string B = grouped(task->b);
  const std::string R = exact_answer(task->op, task->a, task->b);
  switch (task->op) {
    case OperationType::Add:
      return "To add " + A + " and " + B + ", we align the numbers by place value and add each column from right to "
             "left, carrying where needed.\n\nThe result is \\boxed{" + R + "}.";
    case OperationType::Sub:
      return "To subtract " + B + " from " + A + ", we align the numbers by place value and subtract digit by digit, "
             "borrowing when necessary.\n\nVerification by addition confirms the result.\n\nThus, the result of the "
             "subtraction is \\boxed{" + R + "}.";
    case OperationType::Mul:
      return "To multiply " + A + " by " + B + ", we break the second number into its digits, multiply, shift, and "
             "sum the partial products.\n\nThe final product is \\boxed{" + R + "}.";
    case OperationType::Div:
      return "To divide " + A + " by " + B + ", we use long division for the whole part and continue with decimal "
             "digits.\n\nThe quotient is approximately \\boxed{" + R + "}.";
  }
  return {};
}

std::string normal_answer_for(const std::string& text, const SimBehavior& b) {
  if (const auto boxed = last_boxed(text)) return "The result is \\boxed{" + *boxed + "}.";
  return b.canned_answer;
}

bool is_compression_request(const ChatRequest& req) {
  return std::any_of(req.messages.begin(), req.messages.end(), [](const ChatMessage& m) {
    return m.role == Role::System && m.content.find("compress P to") != std::string::npos;
  });
}

const ChatMessage* last_user(const ChatRequest& req) {
  for (auto it = req.messages.rbegin(); it != req.messages.rend(); ++it) {
    if (it->role == Role::User) return &*it;
  }
  return nullptr;
}

std::string_view route_name(SimRoute r) {
  switch (r) {
    case SimRoute::Seed: return "seed";
    case SimRoute::Reasoning: return "reasoning";
    case SimRoute::Prefix1: return "prefix1";
    case SimRoute::PrefixReasoning: return "prefix_reasoning";
    case SimRoute::Compression: return "compression";
    case SimRoute::Other: return "other";
  }
  return "?";
}

}  // namespace

bool looks_like_reasoning(std::string_view text, const std::vector<std::string>& reflection_phrases) {
  if (text.find("\\boxed{") == std::string_view::npos) return false;
  return std::any_of(reflection_phrases.begin(), reflection_phrases.end(),
                     [&](const std::string& p) { return !p.empty() && text.find(p) != std::string_view::npos; });
}

std::optional<OperationType> detect_operation(std::string_view text) {
  static const std::pair<std::string_view, OperationType> kVerbs[] = {{"add ", OperationType::Add},
                                                                      {"subtract", OperationType::Sub},
                                                                      {"multiply", OperationType::Mul},
                                                                      {"divide", OperationType::Div}};
  std::optional<OperationType> best;
  std::size_t best_pos = std::string_view::npos;
  for (const auto& [verb, op] : kVerbs) {
    const auto pos = text.find(verb);
    if (pos < best_pos) {
      best_pos = pos;
      best = op;
    }
  }
  return best;
}

void to_json(json& j, const SimLogEntry& e) {
  j = json{{"seq", e.seq},
           {"request_digest", e.request_digest},
           {"occurrence", e.occurrence},
           {"route", std::string(route_name(e.route))},
           {"status", e.status},
           {"outcome", e.outcome}};
}

// ---------------------------------------------------------------------------
// SimTarget

SimTarget::SimTarget(SimBehavior behavior)
    : behavior_(std::move(behavior)), compress_tokenizer_(Tokenizer::load(behavior_.compress_tokenizer)) {
  if (const auto check = validate_record(behavior_); !check.ok()) throw ConfigError("invalid sim behavior: " + check.summary());
}

SimTarget::Generated SimTarget::generate(const ChatRequest& req, std::uint64_t stream_seed) const {
  Rng rng = make_rng(stream_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u_special = unit(rng);
  const double u_trigger = unit(rng);

  auto profile_for = [&](std::string_view text) -> const OpProfile& {
    const auto op = detect_operation(text);
    return op ? behavior_.profile(*op) : behavior_.fallback;
  };
  auto reasoning_input = [&](const std::string& text, SimRoute route) -> Generated {
    if (u_trigger < profile_for(text).trigger_prob) {
      return {route, "Okay, let me look at this calculation once more.", std::string()};
    }
    return {route, "Okay, the calculation above is complete; I just need to state the result.",
            normal_answer_for(text, behavior_)};
  };

  const ChatMessage* user = last_user(req);
  const std::string user_text = user ? user->content : std::string();
  const ChatMessage& last = req.messages.back();
  const bool has_prefix = last.role == Role::Assistant && last.prefix.value_or(false);

  if (is_compression_request(req)) {
    if (behavior_.compress_ratio >= 1.0) return {SimRoute::Compression, std::nullopt, user_text};
    return {SimRoute::Compression, std::nullopt, compress_text(user_text)};
  }

  if (has_prefix) {
    if (trim(last.content).empty()) {
      if (behavior_.prefix1_normal || !looks_like_reasoning(user_text, behavior_.reflection_phrases)) {
        return {SimRoute::Prefix1, "Okay, the user wants the final result of this calculation.",
                normal_answer_for(user_text, behavior_)};
      }
      return reasoning_input(user_text, SimRoute::Prefix1);
    }
    if (!looks_like_reasoning(last.content, behavior_.reflection_phrases)) {
      return {SimRoute::Other, "Okay, continuing from the given start.", behavior_.canned_answer};
    }
    const OpProfile& p = profile_for(last.content);
    if (u_special < p.special_token_prob) {
      std::string content;
      if (rng() % 2 == 0) content = "\n\n**Final Answer**\n\n\\boxed{" + last_boxed(last.content).value_or("?") + "}\n\n";
      content += behavior_.special_token;
      content += "\n\n" + worked_summary(last.content);
      return {SimRoute::PrefixReasoning, std::nullopt, std::move(content)};
    }
    if (u_trigger < p.trigger_prob) return {SimRoute::PrefixReasoning, std::nullopt, std::string()};
    return {SimRoute::PrefixReasoning, std::nullopt, normal_answer_for(last.content, behavior_)};
  }

  if (const auto seed = parse_seed_prompt(user_text)) {
    std::string answer = behavior_.answer_mode == AnswerMode::ExactArithmetic ? exact_answer(seed->op, seed->a, seed->b)
                                                                             : behavior_.canned_answer;
    return {SimRoute::Seed, reasoning_for_seed(*seed, rng), std::move(answer)};
  }
  if (looks_like_reasoning(user_text, behavior_.reflection_phrases)) return reasoning_input(user_text, SimRoute::Reasoning);
  return {SimRoute::Other, "Okay, let me think about this request.", behavior_.canned_answer};
}

std::string SimTarget::compress_text(const std::string& text) const {
  constexpr std::size_t kMaxTail = 48;
  constexpr std::string_view kJoin = "...";
  const auto spans = compress_tokenizer_.segment(text);
  const auto keep = static_cast<std::size_t>(static_cast<double>(spans.size()) * behavior_.compress_ratio);
  // Keep the opening and the closing (where the boxed result sits), joined the way the
  // example pair elides its middle. The joiner is three punctuation tokens and cannot
  // merge with its neighbours, so the total stays exactly `keep`.
  const std::size_t tail = std::min(kMaxTail, keep / 2);
  if (keep < 8 || tail == 0) return std::string(compress_tokenizer_.truncate(text, keep));
  const std::size_t head = keep - tail - kJoin.size();
  std::string out(compress_tokenizer_.truncate(text, head));
  out += kJoin;
  out += text.substr(spans[spans.size() - tail].begin);
  return out;
}

std::string SimTarget::render(const ChatRequest& req, const Generated& g, const std::string& digest) const {
  json message{{"role", "assistant"}};
  message["content"] = g.content ? json(*g.content) : json(nullptr);
  message["reasoning_content"] = g.reasoning ? json(*g.reasoning) : json(nullptr);
  std::size_t prompt_tokens = 0;
  for (const auto& m : req.messages) prompt_tokens += compress_tokenizer_.count(m.content);
  const std::size_t completion_tokens = compress_tokenizer_.count(g.content.value_or("")) +
                                        compress_tokenizer_.count(g.reasoning.value_or(""));
  json body{{"id", "simcmpl-" + digest.substr(0, 24)},
            {"object", "chat.completion"},
            {"created", 0},
            {"model", req.model_name.empty() ? behavior_.model_name : req.model_name},
            {"choices", json::array({json{{"index", 0}, {"message", message}, {"finish_reason", "stop"}}})},
            {"usage",
             {{"prompt_tokens", prompt_tokens},
              {"completion_tokens", completion_tokens},
              {"total_tokens", prompt_tokens + completion_tokens}}}};
  return body.dump();
}

namespace {

std::string error_body(const std::string& message) {
  return json{{"error", {{"message", message}, {"type", "invalid_request_error"}, {"code", nullptr}}}}.dump();
}

}  // namespace

SimReply SimTarget::handle(std::string_view body) {
  ChatRequest req;
  std::string problem;
  try {
    req = parse_request(body);
    if (const auto check = validate_record(req, behavior_.supports_prefix); !check.ok()) problem = check.summary();
  } catch (const ProtocolError& e) {
    problem = e.what();
  }

  std::unique_lock lock(mutex_);
  SimLogEntry entry;
  entry.seq = log_.size();
  if (!problem.empty()) {
    entry.request_digest = sha256_hex(body);
    entry.status = 400;
    entry.outcome = "error";
    log_.push_back(entry);
    return {400, error_body(problem)};
  }
  entry.request_digest = request_digest(req);
  entry.occurrence = occurrences_[entry.request_digest]++;
  const auto slot = log_.size();
  log_.push_back(entry);
  lock.unlock();

  const auto stream = sha256_u64(std::to_string(behavior_.rng_seed) + "|" + entry.request_digest + "|" +
                                 std::to_string(entry.occurrence));
  const Generated g = generate(req, stream);
  auto reply = SimReply{200, render(req, g, entry.request_digest)};

  lock.lock();
  log_[slot].route = g.route;
  if (g.route == SimRoute::Compression) {
    log_[slot].outcome = "compression";
  } else if (is_empty_answer(g.content)) {
    log_[slot].outcome = "empty";
  } else if (g.content->find(behavior_.special_token) != std::string::npos) {
    log_[slot].outcome = "special_token";
  } else {
    log_[slot].outcome = "normal";
  }
  return reply;
}

ModelResponse SimTarget::respond(const ChatRequest& request) {
  auto reply = handle(serialize_request(request));
  if (reply.status != 200) throw ProtocolError("simulator rejected request: " + reply.body);
  return parse_response(std::move(reply.body));
}

std::vector<SimLogEntry> SimTarget::request_log() const {
  std::lock_guard lock(mutex_);
  return log_;
}

void SimTarget::write_log(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError(path, "cannot open request log for writing");
  for (const auto& e : request_log()) out << json(e).dump() << '\n';
}

HttpReply SimTransport::post(const std::string& path, const std::string& body, const Headers&) {
  if (!path.ends_with("/chat/completions")) return {404, error_body("no route " + path)};
  auto reply = target_->handle(body);
  return {reply.status, std::move(reply.body)};
}

HttpReply SimTransport::get(const std::string& path) {
  if (path == "/health") return {200, R"({"status":"ok"})"};
  return {404, error_body("no route " + path)};
}

}  // namespace thinkstop
