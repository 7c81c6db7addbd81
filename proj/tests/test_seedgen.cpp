#include "thinkstop/error.hpp"
#include "thinkstop/seedgen.hpp"

#include <gtest/gtest.h>

#include <map>

using namespace thinkstop;

TEST(SeedRendering, SubtractionTemplate) {
  EXPECT_EQ(gen_seed_prompt(OperationType::Sub, 96445680, 6195974).rendered, "Calculate 96445680 - 6195974.");
}

TEST(SeedRendering, MultiplicationTemplate) {
  EXPECT_EQ(gen_seed_prompt(OperationType::Mul, 38697082, 4133991).rendered, "Calculate 38697082 * 4133991.");
}

TEST(SeedRendering, SecondTemplate) {
  EXPECT_EQ(gen_seed_prompt(OperationType::Add, 10, 3, "v2").rendered, "What is 10 + 3?");
}

TEST(SeedRendering, RejectsUnorderedOperandsAndUnknownTemplate) {
  EXPECT_THROW(gen_seed_prompt(OperationType::Div, 3, 3), DomainError);
  EXPECT_THROW(gen_seed_prompt(OperationType::Div, 2, 3), DomainError);
  EXPECT_THROW(gen_seed_prompt(OperationType::Div, 3, 2, "v9"), ConfigError);
}

TEST(SeedRendering, ParseInvertsRender) {
  for (auto op : kAllOperations) {
    for (const std::string v : {"v1", "v2"}) {
      const auto seed = gen_seed_prompt(op, 123456, 789, v);
      EXPECT_EQ(parse_seed_prompt(seed.rendered), seed);
    }
  }
  EXPECT_EQ(parse_seed_prompt("Calculate 3 - 5."), std::nullopt);
  EXPECT_EQ(parse_seed_prompt("Compute 5 - 3."), std::nullopt);
}

TEST(OperandSampling, SmallestIntervalHasOnePair) {
  SeedConfig cfg{1, 2, "v1", 0};
  auto rng = make_rng(0);
  for (int i = 0; i < 50; ++i) {
    EXPECT_EQ(gen_operands(cfg, rng), (std::pair<std::int64_t, std::int64_t>{2, 1}));
  }
}

TEST(OperandSampling, EmptyIntervalRejected) {
  auto rng = make_rng(0);
  EXPECT_THROW(gen_operands(SeedConfig{5, 5, "v1", {}}, rng), ConfigError);
  EXPECT_THROW(gen_operands(SeedConfig{0, 5, "v1", {}}, rng), ConfigError);
  EXPECT_THROW(gen_operands(SeedConfig{9, 5, "v1", {}}, rng), ConfigError);
}

TEST(OperandSampling, StaysInsideIntervalAndOrdered) {
  SeedConfig cfg;
  auto rng = make_rng(42);
  for (int i = 0; i < 10000; ++i) {
    const auto [a, b] = gen_operands(cfg, rng);
    ASSERT_GT(a, b);
    ASSERT_GE(b, cfg.p1);
    ASSERT_LE(a, cfg.p2);
  }
}

TEST(OperandSampling, UniformOverOrderedPairs) {
  // [1, 6] has 15 pairs with b < a. Chi-squared with 14 degrees of freedom; the 0.999
  // quantile is 36.12.
  SeedConfig cfg{1, 6, "v1", 7};
  auto rng = make_rng(cfg.rng_seed, 3);
  std::map<std::pair<std::int64_t, std::int64_t>, int> counts;
  constexpr int kDraws = 30000;
  for (int i = 0; i < kDraws; ++i) ++counts[gen_operands(cfg, rng)];
  ASSERT_EQ(counts.size(), 15u);
  const double expected = kDraws / 15.0;
  double chi2 = 0;
  for (const auto& [pair, n] : counts) chi2 += (n - expected) * (n - expected) / expected;
  EXPECT_LT(chi2, 36.12);
}

TEST(OperandSampling, SeededStreamsAreReproducible) {
  SeedConfig cfg;
  auto r1 = make_rng(99, 4);
  auto r2 = make_rng(99, 4);
  auto r3 = make_rng(99, 5);
  const auto a = gen_operands(cfg, r1);
  EXPECT_EQ(a, gen_operands(cfg, r2));
  EXPECT_NE(a, gen_operands(cfg, r3));
}

TEST(SeedConfigRecord, OperandsOutsideIntervalFlagged) {
  SeedConfig cfg{10, 20, "v1", {}};
  const auto seed = gen_seed_prompt(OperationType::Add, 25, 12);
  EXPECT_TRUE(validate_record(seed, cfg).has("a"));
  EXPECT_FALSE(validate_record(seed, cfg).has("b"));
}
