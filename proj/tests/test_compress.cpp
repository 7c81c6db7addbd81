#include "thinkstop/compress.hpp"
#include "thinkstop/error.hpp"
#include "thinkstop/metrics.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

using namespace thinkstop;
using namespace thinkstop::testing;

namespace {

AttackPrompt prompt_of(std::size_t tokens, const std::string& word = "step") {
  return make_attack_prompt(words(tokens, word), std::nullopt, std::nullopt, Tokenizer(), 1);
}

ChatClient failing_compressor(std::shared_ptr<std::atomic<int>> calls) {
  auto t = std::make_shared<FunctionTransport>([calls](const std::string&, const std::string&) {
    ++*calls;
    return HttpReply{401, "denied"};
  });
  return ChatClient(sim_endpoint(false), t);
}

}  // namespace

TEST(LengthVerdict, WindowIsInclusive) {
  const CompressionPolicy policy;
  EXPECT_EQ(verify_length(policy, 100, 50), Verdict::Accept);
  EXPECT_EQ(verify_length(policy, 100, 90), Verdict::Accept);
  EXPECT_EQ(verify_length(policy, 100, 70), Verdict::Accept);
  EXPECT_EQ(verify_length(policy, 100, 49), Verdict::TooShort);
  EXPECT_EQ(verify_length(policy, 100, 91), Verdict::TooLong);
  EXPECT_EQ(verify_length(policy, 100, 0), Verdict::TooShort);
  EXPECT_THROW(verify_length(policy, 0, 5), DomainError);
  EXPECT_EQ(to_string(Verdict::TooLong), "too_long");
}

TEST(CompressionRequest, SystemTemplateAndUserText) {
  const CompressionPolicy policy;
  const std::string original = "Okay, so I need to add 5 and 3.\n\n\\boxed{8}  ";
  const auto req = build_compression_prompt(policy, original);
  ASSERT_EQ(req.messages.size(), 2u);
  EXPECT_EQ(req.messages[0].role, Role::System);
  EXPECT_EQ(req.messages[1].role, Role::User);
  EXPECT_EQ(req.messages[1].content, original);
  const auto& sys = req.messages[0].content;
  EXPECT_NE(sys.find("compress P to 70% of its original length"), std::string::npos);
  EXPECT_NE(sys.find("M={" + policy.example.original() + "}"), std::string::npos);
  EXPECT_NE(sys.find("N={" + policy.example.compressed() + "}"), std::string::npos);
  EXPECT_NE(sys.find("is about 70% of that of P."), std::string::npos);
  EXPECT_THROW(build_compression_prompt(policy, ""), DomainError);
}

TEST(CompressionRequest, PerOperationExampleOverridesDefault) {
  CompressionPolicy policy;
  policy.per_op_examples.emplace(OperationType::Add, ExamplePair("add-x", "long add text", "short add"));
  const auto add = build_compression_prompt(policy, "text", OperationType::Add);
  const auto sub = build_compression_prompt(policy, "text", OperationType::Sub);
  EXPECT_NE(add.messages[0].content.find("M={long add text}"), std::string::npos);
  EXPECT_EQ(sub.messages[0].content.find("long add text"), std::string::npos);
  EXPECT_EQ(policy.example_for(std::nullopt), policy.example);
}

TEST(CompressionRequest, TargetPercentFollowsPolicy) {
  CompressionPolicy policy;
  policy.target_ratio = 0.6;
  EXPECT_NE(build_compression_prompt(policy, "t").messages[0].content.find("compress P to 60%"), std::string::npos);
}

TEST(ExampleAsset, ShippedFileEqualsBuiltin) {
  EXPECT_EQ(ExamplePair::load(source_path("assets/compression/mul-v1.json")), ExamplePair::builtin());
  EXPECT_EQ(ExamplePair::builtin().version(), "mul-v1");
  EXPECT_NE(ExamplePair::builtin().original().find("\\boxed{159973388714262}"), std::string::npos);
  EXPECT_THROW(ExamplePair("v", "", "x"), ConfigError);
  EXPECT_THROW(ExamplePair::load("/nonexistent/example.json"), ConfigError);
}

TEST(PolicyRecord, RejectsInconsistentWindow) {
  CompressionPolicy p;
  EXPECT_TRUE(validate_record(p).ok());
  p.accept_lo = 0.95;
  EXPECT_FALSE(validate_record(p).ok());
  p = {};
  p.max_attempts = 0;
  EXPECT_FALSE(validate_record(p).ok());
}

TEST(RetryPolicy, TooShortOutputsFallBackAfterFourAttempts) {
  auto calls = std::make_shared<std::atomic<int>>(0);
  const auto compressor = ratio_compressor(0.1, calls);
  const auto prompt = prompt_of(200);
  const auto rec = compress_with_verification(CompressionPolicy{}, prompt, compressor);
  EXPECT_EQ(rec.attempts.size(), 4u);
  EXPECT_EQ(calls->load(), 4);
  EXPECT_TRUE(rec.fell_back);
  EXPECT_EQ(rec.final_text, prompt.text);
  EXPECT_EQ(rec.token_c, rec.token_o);
  for (const auto& a : rec.attempts) {
    EXPECT_EQ(a.verdict, Verdict::TooShort);
    EXPECT_EQ(a.token_count, 20u);
  }
  EXPECT_TRUE(validate_record(rec).ok()) << validate_record(rec).summary();
}

TEST(RetryPolicy, AcceptableOutputStopsAtFirstAttempt) {
  auto calls = std::make_shared<std::atomic<int>>(0);
  const auto rec = compress_with_verification(CompressionPolicy{}, prompt_of(200), ratio_compressor(0.6, calls));
  EXPECT_EQ(rec.attempts.size(), 1u);
  EXPECT_EQ(calls->load(), 1);
  EXPECT_FALSE(rec.fell_back);
  EXPECT_EQ(rec.token_o, 200u);
  EXPECT_EQ(rec.token_c, 120u);
  EXPECT_DOUBLE_EQ(rec.attempts[0].ratio, 0.6);
  EXPECT_EQ(rec.final_text, words(120));
}

TEST(RetryPolicy, EchoIsTooLong) {
  const auto rec = compress_with_verification(CompressionPolicy{}, prompt_of(50), ratio_compressor(1.0));
  EXPECT_TRUE(rec.fell_back);
  EXPECT_EQ(rec.attempts.back().verdict, Verdict::TooLong);
}

TEST(RetryPolicy, CompressorFailuresRecordedAsErrors) {
  auto calls = std::make_shared<std::atomic<int>>(0);
  const auto prompt = prompt_of(40);
  const auto rec = compress_with_verification(CompressionPolicy{}, prompt, failing_compressor(calls));
  EXPECT_EQ(calls->load(), 4);
  ASSERT_EQ(rec.attempts.size(), 4u);
  EXPECT_EQ(rec.attempts[0].verdict, Verdict::Error);
  EXPECT_NE(rec.attempts[0].error.find("401"), std::string::npos);
  EXPECT_TRUE(rec.fell_back);
  EXPECT_EQ(rec.final_text, prompt.text);
}

TEST(RetryPolicy, RequestResentUnchanged) {
  std::vector<std::string> bodies;
  std::mutex m;
  auto t = std::make_shared<FunctionTransport>([&](const std::string&, const std::string& body) {
    std::lock_guard lock(m);
    bodies.push_back(body);
    return HttpReply{200, chat_body(std::string("x"))};
  });
  compress_with_verification(CompressionPolicy{}, prompt_of(30), ChatClient(sim_endpoint(false), t));
  ASSERT_EQ(bodies.size(), 4u);
  for (const auto& b : bodies) EXPECT_EQ(b, bodies[0]);
}

TEST(DatasetCompression, RateIsRatioOfMeans) {
  // 60% of 100 and 300 tokens: (60 + 180) / (100 + 300).
  std::vector<AttackPrompt> dataset{prompt_of(100), prompt_of(300, "walk")};
  const auto records = compress_dataset(CompressionPolicy{}, dataset, ratio_compressor(0.6), 2);
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0].prompt_id, dataset[0].id);
  EXPECT_EQ(compute_cr(records), (Fraction{3, 5}));
}

TEST(DatasetCompression, MixedAcceptAndFallback) {
  // One prompt compresses to 50%, the other falls back: (50 + 100) / (100 + 100).
  CompressionPolicy policy;
  auto t = std::make_shared<FunctionTransport>([](const std::string&, const std::string& body) {
    const auto req = parse_request(body);
    const auto& text = req.messages.back().content;
    const Tokenizer tok;
    if (text.rfind("walk", 0) == 0) return HttpReply{200, chat_body(std::string("no"))};
    return HttpReply{200, chat_body(std::string(tok.truncate(text, tok.count(text) / 2)))};
  });
  const ChatClient compressor(sim_endpoint(false), t);
  const auto records = compress_dataset(policy, {prompt_of(100), prompt_of(100, "walk")}, compressor, 1);
  EXPECT_FALSE(records[0].fell_back);
  EXPECT_TRUE(records[1].fell_back);
  EXPECT_EQ(compute_cr(records), (Fraction{3, 4}));
}

TEST(DatasetCompression, SingleFailureDoesNotAbortBatch) {
  auto calls = std::make_shared<std::atomic<int>>(0);
  std::vector<AttackPrompt> dataset{prompt_of(10), prompt_of(20), prompt_of(30)};
  const auto records = compress_dataset(CompressionPolicy{}, dataset, failing_compressor(calls), 3);
  ASSERT_EQ(records.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(records[i].prompt_id, dataset[i].id);
    EXPECT_TRUE(records[i].fell_back);
  }
}

TEST(CompressedPrompt, CarriesSourceAndRecount) {
  const auto source = prompt_of(100);
  const auto rec = compress_with_verification(CompressionPolicy{}, source, ratio_compressor(0.6));
  const auto p = compressed_prompt(source, rec, Tokenizer());
  EXPECT_EQ(p.text, rec.final_text);
  EXPECT_EQ(p.token_count, 60u);
  EXPECT_EQ(p.op, source.op);
  EXPECT_EQ(p.extra["compressed_from"], source.id);
  EXPECT_EQ(p.extra["fell_back"], false);
  EXPECT_NE(p.id, source.id);
  EXPECT_TRUE(validate_record(p).ok());
}

TEST(CompressionRecordJson, RoundTrip) {
  const auto rec = compress_with_verification(CompressionPolicy{}, prompt_of(100), ratio_compressor(0.1));
  EXPECT_EQ(nlohmann::json(rec).get<CompressionRecord>(), rec);
}
