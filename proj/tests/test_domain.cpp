#include "thinkstop/domain.hpp"
#include "thinkstop/seedgen.hpp"

#include <gtest/gtest.h>

using namespace thinkstop;
using nlohmann::json;

TEST(SeedTaskRecord, SubtractionFromTheExampleValidates) {
  const auto seed = gen_seed_prompt(OperationType::Sub, 96445680, 6195974);
  EXPECT_TRUE(validate_record(seed).ok()) << validate_record(seed).summary();
}

TEST(SeedTaskRecord, EqualOperandsViolateOrdering) {
  SeedTask seed{OperationType::Add, 5, 5, "Calculate 5 + 5.", "v1"};
  const auto r = validate_record(seed);
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(r.has("a > b"));
}

TEST(SeedTaskRecord, RenderedMustStateOperands) {
  SeedTask seed{OperationType::Mul, 12, 7, "Calculate 12 * 8.", "v1"};
  EXPECT_TRUE(validate_record(seed).has("rendered"));
}

TEST(SeedTaskRecord, JsonRoundTrip) {
  const auto seed = gen_seed_prompt(OperationType::Div, 38697082, 4133991, "v2");
  EXPECT_EQ(json(seed).get<SeedTask>(), seed);
  EXPECT_EQ(json(seed)["op"], "/");
}

TEST(Operations, SymbolsAndNamesParse) {
  for (auto op : kAllOperations) {
    EXPECT_EQ(parse_operation(symbol(op)), op);
  }
  EXPECT_EQ(parse_operation("mul"), OperationType::Mul);
  EXPECT_EQ(parse_operation("pow"), std::nullopt);
}

TEST(Approaches, NamesRoundTrip) {
  for (auto a : {Approach::Normal, Approach::Prefix1, Approach::Prefix2, Approach::Prefix3}) {
    EXPECT_EQ(parse_approach(to_string(a)), a);
  }
  EXPECT_EQ(parse_approach("prefix4"), std::nullopt);
  EXPECT_FALSE(is_prefix_approach(Approach::Normal));
  EXPECT_TRUE(is_prefix_approach(Approach::Prefix2));
}

TEST(AttackPromptRecord, StoredCountMustMatchRecount) {
  const Tokenizer tok;
  auto p = make_attack_prompt("Okay, so I need to add 3 and 2.", OperationType::Add,
                              gen_seed_prompt(OperationType::Add, 3, 2), tok, 1);
  EXPECT_EQ(p.token_count, tok.count(p.text));
  EXPECT_TRUE(validate_record(p).ok()) << validate_record(p).summary();
  p.token_count += 1;
  EXPECT_TRUE(validate_record(p).has("token_count"));
}

TEST(AttackPromptRecord, IdDependsOnTextOpAndSeed) {
  const auto seed = gen_seed_prompt(OperationType::Add, 3, 2);
  const auto a = make_prompt_id("text", OperationType::Add, seed);
  EXPECT_EQ(a, make_prompt_id("text", OperationType::Add, seed));
  EXPECT_NE(a, make_prompt_id("text!", OperationType::Add, seed));
  EXPECT_NE(a, make_prompt_id("text", OperationType::Sub, seed));
  EXPECT_NE(a, make_prompt_id("text", std::nullopt, std::nullopt));
}

TEST(AttackPromptRecord, EmptyTextAndZeroCallsRejected) {
  AttackPrompt p;
  p.id = "x";
  p.tokenizer_id = std::string(kDefaultTokenizerId);
  p.search_calls_used = 0;
  const auto r = validate_record(p);
  EXPECT_TRUE(r.has("text"));
  EXPECT_TRUE(r.has("search_calls_used"));
}

TEST(AttackPromptRecord, BaselineJsonRoundTripKeepsUnknownFields) {
  const Tokenizer tok;
  auto p = make_attack_prompt("Find the 10th term.", std::nullopt, std::nullopt, tok, 1);
  p.extra = json{{"source", "aime"}, {"level", 3}};
  const json j = p;
  EXPECT_EQ(j["op"], "baseline");
  EXPECT_EQ(j["source"], "aime");
  EXPECT_EQ(j.get<AttackPrompt>(), p);
}

TEST(AttackPromptRecord, ForeignTokenizerSkipsRecount) {
  AttackPrompt p;
  p.id = "x";
  p.text = "abc";
  p.token_count = 99;
  p.tokenizer_id = "vocab:other.txt";
  EXPECT_TRUE(validate_record(p).ok());
  const Tokenizer tok;
  EXPECT_TRUE(validate_record(p, &tok).has("tokenizer_id"));
}

TEST(TrialRecord, OutcomesRoundTrip) {
  const std::vector<TrialOutcome> outcomes = {EmptyAnswer{}, NormalAnswer{},
                                              SpecialTokenAnswer{"pre", "post"}, TrialError{"boom"}};
  for (const auto& o : outcomes) {
    AttackTrial t{"pid", 2, Approach::Prefix3, o, 1.5, std::string(64, 'a')};
    EXPECT_TRUE(validate_record(t).ok());
    EXPECT_EQ(json(t).get<AttackTrial>(), t);
  }
  EXPECT_EQ(outcome_kind(SpecialTokenAnswer{}), "special_token");
  EXPECT_TRUE(is_success(EmptyAnswer{}));
  EXPECT_FALSE(is_success(SpecialTokenAnswer{}));
}

TEST(TrialRecord, NegativeLatencyAndShortDigestRejected) {
  AttackTrial t{"pid", 0, Approach::Normal, NormalAnswer{}, -1.0, "abc"};
  const auto r = validate_record(t);
  EXPECT_TRUE(r.has("latency_ms"));
  EXPECT_TRUE(r.has("request_digest"));
}

TEST(EmptyAnswerCheck, WhitespaceAndNullAreEmpty) {
  EXPECT_TRUE(is_empty_answer(std::nullopt));
  EXPECT_TRUE(is_empty_answer(std::string()));
  EXPECT_TRUE(is_empty_answer(std::string(" \n\t ")));
  EXPECT_FALSE(is_empty_answer(std::string(" 5 ")));
}

TEST(Helpers, GroupThousands) {
  EXPECT_EQ(group_thousands(96445680), "96,445,680");
  EXPECT_EQ(group_thousands(999), "999");
  EXPECT_EQ(group_thousands(1000), "1,000");
  EXPECT_EQ(trim("  a b \n"), "a b");
}
