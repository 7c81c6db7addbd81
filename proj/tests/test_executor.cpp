#include "thinkstop/error.hpp"
#include "thinkstop/executor.hpp"
#include "thinkstop/simtarget.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

using namespace thinkstop;
using namespace thinkstop::testing;
using nlohmann::json;

namespace {

const std::string kToken(kDefaultSpecialToken);

ModelResponse content(const std::optional<std::string>& c) { return ModelResponse{std::nullopt, c, ""}; }

SpecialTokenAnswer classify_special(const std::string& text) {
  const auto o = classify_response(Approach::Prefix3, content(text), kToken);
  EXPECT_TRUE(std::holds_alternative<SpecialTokenAnswer>(o)) << outcome_kind(o);
  return std::holds_alternative<SpecialTokenAnswer>(o) ? std::get<SpecialTokenAnswer>(o) : SpecialTokenAnswer{};
}

bool starts_with(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }
bool ends_with(const std::string& s, const std::string& p) {
  return s.size() >= p.size() && s.compare(s.size() - p.size(), p.size(), p) == 0;
}

std::vector<AttackPrompt> harvest(SimTarget& target, std::size_t n) {
  std::vector<AttackPrompt> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto seed = gen_seed_prompt(kAllOperations[i % 4], 50000000 + static_cast<std::int64_t>(i) * 7919, 1234567);
    ChatRequest r;
    r.messages.push_back({Role::User, seed.rendered, std::nullopt});
    out.push_back(make_attack_prompt(*target.respond(r).reasoning, seed.op, seed, Tokenizer(), 1));
  }
  return out;
}

CampaignConfig config_for(Approach a, std::uint32_t lambda) {
  CampaignConfig c;
  c.approach = a;
  c.lambda = lambda;
  c.target = sim_endpoint();
  return c;
}

}  // namespace

TEST(SpecialTokenDetector, WorkedAnswerWithBoxedLead) {
  const auto s = classify_special(read_file(data_path("data/special_token_answer1.txt")));
  EXPECT_EQ(s.pre_text, "**Final Answer**\n\n\\boxed{90249706}");
  EXPECT_TRUE(starts_with(s.post_text, "To subtract 6,195,974 from 96,445,680"));
}

TEST(SpecialTokenDetector, TokenAtStart) {
  const auto s = classify_special(read_file(data_path("data/special_token_answer2.txt")));
  EXPECT_EQ(s.pre_text, "");
  EXPECT_TRUE(starts_with(s.post_text, "To subtract 2,487,809 from 49,258,386"));
}

TEST(SpecialTokenDetector, TokenAfterLongMultiplication) {
  const auto s = classify_special(read_file(data_path("data/special_token_answer3.txt")));
  EXPECT_TRUE(ends_with(s.pre_text, "is \\boxed{642953354075208}.")) << s.pre_text.substr(s.pre_text.size() - 40);
  EXPECT_EQ(s.post_text, "To find the product of 67,");
}

TEST(SpecialTokenDetector, TokenAfterDistributiveWork) {
  const auto s = classify_special(read_file(data_path("data/special_token_answer4.txt")));
  EXPECT_TRUE(ends_with(s.pre_text, "is \\boxed{171778373733780}."));
  EXPECT_TRUE(starts_with(s.post_text, "To multiply 27,200,932 by 6,315,165"));
}

TEST(SpecialTokenDetector, SplitReassemblesInput) {
  for (int i = 1; i <= 4; ++i) {
    const auto text = read_file(data_path("data/special_token_answer" + std::to_string(i) + ".txt"));
    const auto s = classify_special(text);
    const auto at = text.find(kToken);
    EXPECT_EQ(s.pre_text, std::string(trim(std::string_view(text).substr(0, at))));
    EXPECT_EQ(s.post_text, std::string(trim(std::string_view(text).substr(at + kToken.size()))));
  }
}

TEST(SpecialTokenDetector, ControlAnswerIsNormal) {
  const std::string control =
      "To subtract 6,195,974 from 96,445,680, align the numbers and subtract digit by digit.\n\n"
      "**Final Answer**\n\n\\boxed{90249706}";
  EXPECT_EQ(classify_response(Approach::Prefix3, content(control), kToken), TrialOutcome{NormalAnswer{}});
}

TEST(SpecialTokenDetector, ExactLiteralOnly) {
  for (const std::string near : {"end_of_thinking", "<end_of_thinking>", "<|end_of_thinking", "|end_of_thinking|>",
                                 "<|END_OF_THINKING|>", "< |end_of_thinking| >"}) {
    EXPECT_EQ(classify_response(Approach::Prefix3, content("x " + near + " y"), kToken), TrialOutcome{NormalAnswer{}})
        << near;
  }
}

TEST(SpecialTokenDetector, FirstOccurrenceSplits) {
  const auto s = classify_special("a " + kToken + " b " + kToken + " c");
  EXPECT_EQ(s.pre_text, "a");
  EXPECT_EQ(s.post_text, "b " + kToken + " c");
}

TEST(SpecialTokenDetector, CustomTokenHonoured) {
  const auto o = classify_response(Approach::Prefix2, content("x [[STOP]] y"), "[[STOP]]");
  EXPECT_EQ(o, TrialOutcome(SpecialTokenAnswer{"x", "y"}));
}

TEST(EmptyClassification, BlankContentIsEmpty) {
  EXPECT_EQ(classify_response(Approach::Normal, content(std::nullopt), kToken), TrialOutcome{EmptyAnswer{}});
  EXPECT_EQ(classify_response(Approach::Normal, content(""), kToken), TrialOutcome{EmptyAnswer{}});
  EXPECT_EQ(classify_response(Approach::Prefix2, content("\n \t"), kToken), TrialOutcome{EmptyAnswer{}});
  EXPECT_EQ(classify_response(Approach::Normal, content("5"), kToken), TrialOutcome{NormalAnswer{}});
}

TEST(EmptyClassification, PrefixOneEchoStripped) {
  EXPECT_EQ(classify_response(Approach::Prefix1, content(" "), kToken), TrialOutcome{EmptyAnswer{}});
  EXPECT_EQ(classify_response(Approach::Prefix1, content(" 5"), kToken), TrialOutcome{NormalAnswer{}});
}

TEST(PromptResultRecord, DeltaMustMatchTrials) {
  PromptResult r{"p", 2, {}};
  for (std::uint32_t k = 0; k < 3; ++k) {
    r.trials.push_back({"p", k, Approach::Normal, k < 2 ? TrialOutcome{EmptyAnswer{}} : TrialOutcome{NormalAnswer{}},
                        0.0, std::string(64, '0')});
  }
  EXPECT_TRUE(validate_record(r, 3).ok()) << validate_record(r, 3).summary();
  EXPECT_FALSE(validate_record(r, 4).ok());
  r.d = 3;
  EXPECT_FALSE(validate_record(r, 3).ok());
  r.d = 2;
  EXPECT_EQ(json(r).get<PromptResult>(), r);
}

TEST(Campaign, LambdaTrialsPerPrompt) {
  SimRig rig(SimBehavior::default_profile());
  const auto dataset = harvest(*rig.target, 25);
  const auto results = run_campaign(config_for(Approach::Prefix3, 3), dataset, rig.client);
  ASSERT_EQ(results.size(), 25u);
  std::size_t trials = 0;
  for (const auto& r : results) {
    EXPECT_EQ(r.trials.size(), 3u);
    EXPECT_TRUE(validate_record(r, 3).ok()) << validate_record(r, 3).summary();
    for (std::uint32_t k = 0; k < 3; ++k) EXPECT_EQ(r.trials[k].trial_index, k);
    trials += r.trials.size();
  }
  EXPECT_EQ(trials, 75u);
  EXPECT_TRUE(std::is_sorted(results.begin(), results.end(),
                             [](const PromptResult& a, const PromptResult& b) { return a.prompt_id < b.prompt_id; }));
}

TEST(Campaign, AlwaysEmptyTargetGivesFullDelta) {
  SimRig rig(*SimBehavior::builtin("always-empty"));
  const auto dataset = harvest(*rig.target, 8);
  for (const auto a : {Approach::Normal, Approach::Prefix2, Approach::Prefix3}) {
    for (const auto& r : run_campaign(config_for(a, 3), dataset, rig.client)) EXPECT_EQ(r.d, 3u);
  }
  for (const auto& r : run_campaign(config_for(Approach::Prefix1, 3), dataset, rig.client)) EXPECT_EQ(r.d, 0u);
}

TEST(Campaign, ResultsIndependentOfParallelism) {
  SimRig a(SimBehavior::default_profile());
  SimRig b(SimBehavior::default_profile());
  const auto dataset = harvest(*a.target, 20);
  harvest(*b.target, 20);
  auto serial = config_for(Approach::Prefix3, 4);
  serial.max_parallel = 1;
  auto wide = serial;
  wide.max_parallel = 8;
  EXPECT_EQ(run_campaign(serial, dataset, a.client, {false}), run_campaign(wide, dataset, b.client, {false}));
}

TEST(Campaign, FailedRequestsBecomeErrorOutcomes) {
  auto t = std::make_shared<FunctionTransport>([](const std::string&, const std::string&) {
    return HttpReply{500, "down"};
  });
  auto e = sim_endpoint();
  e.max_retries = 1;
  ChatClient c(e, t);
  SimTarget harvest_target(SimBehavior::default_profile());
  const auto results = run_campaign(config_for(Approach::Normal, 2), harvest(harvest_target, 2), c);
  for (const auto& r : results) {
    EXPECT_EQ(r.d, 0u);
    for (const auto& trial : r.trials) EXPECT_TRUE(is_error(trial.outcome));
  }
  EXPECT_EQ(c.attempts_made(), 8u);
}

TEST(Campaign, PrefixAgainstPlainEndpointFailsUpFront) {
  int calls = 0;
  auto t = std::make_shared<FunctionTransport>([&](const std::string&, const std::string&) {
    ++calls;
    return HttpReply{200, chat_body(std::string(""))};
  });
  ChatClient c(sim_endpoint(false), t);
  SimTarget harvest_target(SimBehavior::default_profile());
  EXPECT_THROW(run_campaign(config_for(Approach::Prefix2, 1), harvest(harvest_target, 1), c), CapabilityError);
  EXPECT_EQ(calls, 0);
}

TEST(Campaign, DigestMatchesWireBody) {
  SimRig rig(SimBehavior::default_profile());
  const auto dataset = harvest(*rig.target, 1);
  const auto results = run_campaign(config_for(Approach::Prefix3, 2), dataset, rig.client);
  const auto log = rig.target->request_log();
  EXPECT_EQ(results[0].trials[0].request_digest, log.back().request_digest);
}

TEST(Campaign, InvalidConfigRejected) {
  SimRig rig(SimBehavior::default_profile());
  const auto dataset = harvest(*rig.target, 1);
  EXPECT_THROW(run_campaign(config_for(Approach::Normal, 0), dataset, rig.client), ConfigError);
  EXPECT_THROW(run_campaign(config_for(Approach::Normal, 1), {}, rig.client), DomainError);
}

TEST(CampaignConfigRecord, HashIgnoresSchedulingAndIsStable) {
  auto c = config_for(Approach::Prefix3, 3);
  const auto h = config_hash(c);
  EXPECT_EQ(h.size(), 16u);
  c.max_parallel = 17;
  c.rate_limit_per_sec = 2;
  c.dataset_path = "/elsewhere/d.jsonl";
  EXPECT_EQ(config_hash(c), h);
  c.lambda = 5;
  EXPECT_NE(config_hash(c), h);
  EXPECT_EQ(json(c).get<CampaignConfig>(), c);
}

TEST(ManifestRecord, JsonRoundTrip) {
  CampaignManifest m;
  m.config_hash = "abc";
  m.tokenizer_id = "ws-punct-v1";
  m.endpoint = sim_endpoint();
  m.code_version = code_version();
  m.search_stats = SearchStats{2, 3, 2, 100};
  EXPECT_EQ(json(m).get<CampaignManifest>(), m);
  EXPECT_FALSE(m.code_version.empty());
}
