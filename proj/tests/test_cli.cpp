#include "cli.hpp"

#include "thinkstop/store.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <csignal>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

using namespace thinkstop;
using namespace thinkstop::testing;

namespace {

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "thinkstop");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

/// The CLI binary as a child process with stdout on a pipe.
class Child {
 public:
  explicit Child(const std::vector<std::string>& args) {
    int fds[2];
    if (::pipe(fds) != 0) throw std::runtime_error("pipe failed");
    pid_ = ::fork();
    if (pid_ == 0) {
      ::dup2(fds[1], STDOUT_FILENO);
      ::dup2(fds[1], STDERR_FILENO);
      ::close(fds[0]);
      ::close(fds[1]);
      std::vector<const char*> argv{THINKSTOP_CLI_PATH};
      for (const auto& a : args) argv.push_back(a.c_str());
      argv.push_back(nullptr);
      ::execv(THINKSTOP_CLI_PATH, const_cast<char* const*>(argv.data()));
      ::_exit(127);
    }
    ::close(fds[1]);
    read_fd_ = fds[0];
  }
  ~Child() {
    if (pid_ > 0 && !reaped_) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, nullptr, 0);
    }
    ::close(read_fd_);
  }

  std::string read_line() {
    std::string line;
    char c;
    while (::read(read_fd_, &c, 1) == 1) {
      if (c == '\n') break;
      line += c;
    }
    return line;
  }
  std::string read_rest() {
    std::string s;
    char buf[512];
    for (ssize_t n; (n = ::read(read_fd_, buf, sizeof buf)) > 0;) s.append(buf, static_cast<std::size_t>(n));
    return s;
  }
  void signal(int sig) { ::kill(pid_, sig); }
  int wait() {
    int status = 0;
    ::waitpid(pid_, &status, 0);
    reaped_ = true;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

 private:
  pid_t pid_ = -1;
  int read_fd_ = -1;
  bool reaped_ = false;
};

}  // namespace

TEST(CliUsage, UnknownOperationListsValidOnes) {
  TempDir dir;
  const auto r = run_cli({"search", "--op", "pow", "--out", (dir / "d.jsonl").string(), "--target", "sim://"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("add (+), sub (-), mul (*), div (/)"), std::string::npos) << r.err;
}

TEST(CliUsage, BadArgumentsExitTwo) {
  TempDir dir;
  const auto d = (dir / "d.jsonl").string();
  EXPECT_EQ(run_cli({"search", "--op", "add", "--n", "0", "--out", d, "--target", "sim://"}).code, 2);
  EXPECT_EQ(run_cli({"search", "--op", "add", "--out", d, "--target", "ftp://x"}).code, 2);
  EXPECT_EQ(run_cli({"search", "--op", "add", "--out", d, "--target", "sim://?bogus=1"}).code, 2);
  EXPECT_EQ(run_cli({"attack", "--dataset", (dir / "missing.jsonl").string(), "--out", d, "--target", "sim://"}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"report", "x.jsonl", "--format", "xml"}).code, 2);
}

TEST(CliPipeline, SearchCompressAttackReport) {
  TempDir dir;
  const auto d = (dir / "d.jsonl").string();
  const auto c = (dir / "c.jsonl").string();
  const auto cd = (dir / "cd.jsonl").string();
  const auto res = (dir / "r.jsonl").string();

  auto r = run_cli({"search", "--op", "sub", "--n", "10", "--seed", "3", "--target", "sim://", "--out", d});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Average Search Count"), std::string::npos);
  EXPECT_NE(r.out.find("Wrote 10 prompts"), std::string::npos);
  const auto data = read_dataset(d);
  EXPECT_EQ(data.prompts.size(), 10u);
  EXPECT_EQ(data.header.created_at, kEpochTimestamp);

  r = run_cli({"compress", "--dataset", d, "--compressor", "sim://?ratio=0.6", "--seed", "3", "--out", c,
               "--out-dataset", cd});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Fallback: 0/10"), std::string::npos) << r.out;
  EXPECT_EQ(read_dataset(cd).prompts.size(), 10u);

  r = run_cli({"attack", "--dataset", cd, "--approach", "prefix3", "--lambda", "3", "--compression", c, "--seed", "3",
               "--target", "sim://", "--out", res});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("30 trials (10 prompts x lambda 3)"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("Trigger rate: "), std::string::npos);
  const auto results = read_results(res);
  EXPECT_EQ(results.header.manifest.trials, 30u);
  ASSERT_TRUE(results.header.cr.has_value());

  r = run_cli({"report", res, "--format", "csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("dataset,cr,asr,trigger_rate,avg_search,lambda,prompts,trials,tokenizer_id,config_hash\n", 0), 0u);

  r = run_cli({"report", res, res});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("ASR:"), std::string::npos);
}

TEST(CliPipeline, PrefixAgainstPlainHttpEndpointIsRuntimeError) {
  TempDir dir;
  const auto d = (dir / "d.jsonl").string();
  ASSERT_EQ(run_cli({"search", "--op", "add", "--n", "2", "--seed", "1", "--target", "sim://", "--out", d}).code, 0);
  auto server = SimServer::start(SimBehavior::default_profile(), "127.0.0.1", 0);
  const auto r = run_cli({"attack", "--dataset", d, "--approach", "prefix2", "--target", server->base_url(), "--out",
                          (dir / "r.jsonl").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("prefix"), std::string::npos) << r.err;
  EXPECT_TRUE(server->target().request_log().empty());
}

TEST(CliReport, MixedTokenizersRefused) {
  TempDir dir;
  const auto d = (dir / "d.jsonl").string();
  ASSERT_EQ(run_cli({"search", "--op", "add", "--n", "2", "--seed", "1", "--target", "sim://", "--out", d}).code, 0);
  const auto a = (dir / "a.jsonl").string();
  const auto b = (dir / "b.jsonl").string();
  ASSERT_EQ(run_cli({"attack", "--dataset", d, "--seed", "1", "--target", "sim://", "--out", a}).code, 0);
  auto file = read_results(a);
  file.header.manifest.tokenizer_id = "vocab:other.txt";
  write_results(b, file.header, file.results);
  const auto r = run_cli({"report", a, b});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("ws-punct-v1"), std::string::npos);
  EXPECT_NE(r.err.find("vocab:other.txt"), std::string::npos);
  EXPECT_NE(r.err.find(b), std::string::npos);
}

TEST(CliReport, NoTrialsIsRuntimeError) {
  TempDir dir;
  const auto p = (dir / "empty.jsonl").string();
  ResultsHeader h;
  h.manifest.tokenizer_id = "ws-punct-v1";
  write_results(p, h, {});
  const auto r = run_cli({"report", p});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("no trials"), std::string::npos);
}

TEST(CliSearch, TruncatedSearchExitsOne) {
  TempDir dir;
  const auto d = (dir / "d.jsonl").string();
  const auto r = run_cli({"search", "--op", "add", "--n", "3", "--budget", "2", "--seed", "1", "--target",
                          "sim://?trigger=0", "--out", d});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("Truncated"), std::string::npos);
  EXPECT_EQ(read_dataset(d).header.extra["truncated"], true);
}

TEST(CliConfig, FileSuppliesDefaultsAndCommandLineWins) {
  TempDir dir;
  const auto cfg = (dir / "cfg.json").string();
  write_file(cfg, R"({"defaults": {"seed": 5, "target": "sim://"}, "search": {"n": 4, "op": "mul"}})");
  const auto d = (dir / "d.jsonl").string();
  auto r = run_cli({"--config", cfg, "search", "--out", d});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_dataset(d).prompts.size(), 4u);
  EXPECT_EQ(read_dataset(d).header.op, "*");
  r = run_cli({"--config", cfg, "search", "--n", "2", "--out", d});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_dataset(d).prompts.size(), 2u);
}

TEST(CliConfig, SecretsRefused) {
  TempDir dir;
  const auto cfg = (dir / "cfg.json").string();
  write_file(cfg, R"({"defaults": {"api_key": "sk-123"}})");
  const auto r = run_cli({"--config", cfg, "search", "--op", "add", "--out", (dir / "d.jsonl").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("environment"), std::string::npos);
  EXPECT_EQ(r.err.find("sk-123"), std::string::npos);
}

TEST(CliServeSim, HealthThenCleanShutdown) {
  TempDir dir;
  const auto log = (dir / "log.jsonl").string();
  Child child({"serve-sim", "--port", "0", "--log", log});
  const auto banner = child.read_line();
  const auto at = banner.find("http://");
  ASSERT_NE(at, std::string::npos) << banner;
  HttpTransport t(banner.substr(at), std::chrono::milliseconds(3000));
  EXPECT_EQ(t.get("/health").status, 200);
  ChatRequest req;
  req.messages.push_back({Role::User, "Calculate 9 - 4.", std::nullopt});
  EXPECT_EQ(parse_response(t.post("/chat/completions", serialize_request(req), {}).body).content, "5");
  child.signal(SIGINT);
  EXPECT_NE(child.read_rest().find("Stopped after 1 requests"), std::string::npos);
  EXPECT_EQ(child.wait(), 0);
  EXPECT_NE(read_file(log).find("\"route\":\"seed\""), std::string::npos);
}

TEST(CliServeSim, MalformedProfileReportsPosition) {
  TempDir dir;
  const auto profile = (dir / "bad.json").string();
  write_file(profile, "{\n  \"rng_seed\": 1,\n  \"ops\": ]\n}\n");
  Child child({"serve-sim", "--port", "0", "--profile", profile});
  const auto output = child.read_rest();
  EXPECT_EQ(child.wait(), 1);
  EXPECT_NE(output.find(profile + ":3:"), std::string::npos) << output;
}
