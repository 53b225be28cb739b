// Runs the grs binary as a subprocess.

#include <sys/wait.h>

#include <csignal>
#include <cstdio>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "grs/llm/wire.hpp"
#include "support.hpp"

using grs::testing::read_file;
using grs::testing::TempDir;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(GRS_CLI_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string samples(const std::string& name) { return std::string(GRS_SAMPLES_DIR) + "/" + name; }

// Copies the sample config into `dir` with absolute paths and overrides.
std::string sample_config(const TempDir& dir, const nlohmann::json& patch = nlohmann::json::object()) {
  auto j = nlohmann::json::parse(read_file(samples("config.json")));
  for (auto& [key, value] : j["paths"].items()) value = samples(value.get<std::string>());
  j["paths"]["output_dir"] = (dir / "out").string();
  j["paths"]["index_dump"] = (dir / "out" / "index.jsonl").string();
  for (auto& [name, ep] : j["endpoints"].items()) ep["mock_script"] = samples(ep["mock_script"].get<std::string>());
  j.merge_patch(patch);
  dir.write("config.json", j.dump(2));
  return (dir / "config.json").string();
}

std::string three_doc_config(const TempDir& dir, const std::string& catalog) {
  dir.write("catalog.jsonl", catalog);
  dir.write("config.json", nlohmann::json{{"seed", 1}, {"paths", {{"catalog", "catalog.jsonl"}}}}.dump());
  return (dir / "config.json").string();
}

}  // namespace

TEST(Cli, IndexPrintsStatistics) {
  TempDir dir;
  const auto cfg = three_doc_config(dir, "{\"title\": \"基金 A\"}\n{\"title\": \"基金 B\"}\n{\"title\": \"意外险\"}\n");
  const auto r = run("index --config " + cfg);
  EXPECT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("num_docs=3"), std::string::npos) << r.output;
}

TEST(Cli, IndexErrors) {
  TempDir dir;
  dir.write("config.json", "{\"seed\": 1, \"paths\": {\"catalog\": \"nope.jsonl\"}}");
  auto r = run("index --config " + (dir / "config.json").string());
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.output.find("file not found"), std::string::npos) << r.output;

  TempDir dup;
  const auto cfg = three_doc_config(dup, "{\"title\": \"Same Fund\"}\n{\"title\": \" Same Fund \"}\n");
  r = run("index --config " + cfg);
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.output.find("Same Fund"), std::string::npos) << r.output;

  r = run("index");
  EXPECT_EQ(r.exit_code, 1);
}

TEST(Cli, DistillIsDeterministic) {
  TempDir a, b;
  const auto ra = run("distill --config " + sample_config(a));
  const auto rb = run("distill --config " + sample_config(b));
  ASSERT_EQ(ra.exit_code, 0) << ra.output;
  ASSERT_EQ(rb.exit_code, 0) << rb.output;
  const auto corpus_a = read_file(a / "out" / "corpus.jsonl");
  EXPECT_FALSE(corpus_a.empty());
  EXPECT_EQ(corpus_a, read_file(b / "out" / "corpus.jsonl"));
  const auto stats = nlohmann::json::parse(read_file(a / "out" / "stats.json"));
  EXPECT_EQ(stats["judge_calls"]["judge_a"], stats["judge_calls"]["judge_b"]);
  EXPECT_EQ(stats["judge_calls"]["judge_a"], stats["judged_pairs"]);
}

TEST(Cli, AgentCaseStudies) {
  TempDir dir;
  auto r = run("agent --config " + samples("case_study.json") + " --output " + dir.path().string() +
               " --query 单日意外保险 --query 抗流感基金 --trace");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("单日意外保险\t平安短期综合意外险; 运动意外无忧险\n"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("抗流感基金\t中银创新医疗混合C; 中银创新医疗混合A; 华安医疗创新混合C\n"), std::string::npos)
      << r.output;
  EXPECT_NE(read_file(dir / "agent_trace.jsonl").find("duration: rejected"), std::string::npos);

  r = run("agent --config " + samples("case_study.json") + " --output " + dir.path().string() +
          " --query 单日意外保险 --no-agent");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("1000万全年航空意外险"), std::string::npos) << r.output;
}

TEST(Cli, EmptyGeneratorOutputIsNotAnError) {
  TempDir dir;
  dir.write("blank.json", "{\"rules\": [], \"default_reply\": \"\"}");
  const auto r = run("agent --config " + samples("case_study.json") + " --output " + dir.path().string() +
                     " --mock-script " + (dir / "blank.json").string() + " --query 无人问津");
  EXPECT_EQ(r.exit_code, 0) << r.output;
}

TEST(Cli, EvalReportsAndUndefinedMetric) {
  TempDir dir;
  auto r = run("eval --config " + sample_config(dir) + " --ablate");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto report = nlohmann::json::parse(read_file(dir / "out" / "eval_report.json"));
  ASSERT_EQ(report.size(), 3u);
  EXPECT_NE(r.output.find("w/o decision agent"), std::string::npos);

  TempDir unlabeled;
  unlabeled.write("eval.jsonl", "{\"query\": \"没有的查询\", \"labels\": {}}\n");
  r = run("eval --config " + sample_config(unlabeled) + " --eval-set " + (unlabeled / "eval.jsonl").string());
  EXPECT_EQ(r.exit_code, 2) << r.output;
}

TEST(Cli, ConfigValidate) {
  TempDir dir;
  auto r = run("config validate --config " + sample_config(dir));
  EXPECT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("config ok"), std::string::npos);
  r = run("config validate --config " + sample_config(dir, {{"roles", {{"decision", "ghost"}}}}));
  EXPECT_EQ(r.exit_code, 1) << r.output;
  EXPECT_NE(r.output.find("ghost"), std::string::npos);
}

TEST(Cli, MockServeAnswersRequests) {
  TempDir dir;
  dir.write("script.json", "{\"rules\": [{\"match_type\": \"substring\", \"pattern\": \"ping\", \"reply\": \"pong\"}]}");
  const std::string cmd = std::string(GRS_CLI_PATH) + " mock-serve --script " + (dir / "script.json").string() +
                          " --host 127.0.0.1 --port 0 > " + (dir / "log.txt").string() + " 2>&1 & echo $!";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  ASSERT_NE(pipe, nullptr);
  char pid_buf[32] = {0};
  ASSERT_NE(std::fgets(pid_buf, sizeof pid_buf, pipe), nullptr);
  ::pclose(pipe);
  struct Reaper {
    int pid;
    ~Reaper() {
      if (pid > 0) ::kill(pid, SIGTERM);
    }
  } reaper{std::atoi(pid_buf)};

  // The bound port is only known from the startup line.
  const std::string marker = "listening on http://127.0.0.1:";
  int port = 0;
  for (int i = 0; i < 250 && port == 0; ++i) {
    const auto log = read_file(dir / "log.txt");
    if (auto at = log.find(marker); at != std::string::npos && log.find('\n', at) != std::string::npos) {
      port = std::atoi(log.c_str() + at + marker.size());
    } else {
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  }
  ASSERT_GT(port, 0) << read_file(dir / "log.txt");

  grs::llm::ModelEndpoint ep;
  ep.name = "mock";
  ep.model_id = "m";
  httplib::Client cli("127.0.0.1", port);
  cli.set_connection_timeout(std::chrono::seconds(2));
  cli.set_read_timeout(std::chrono::seconds(2));
  const auto res = cli.Post(grs::llm::wire::kCompletionsPath, grs::llm::wire::request_body(ep, "ping?"),
                            "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_NE(res->body.find("pong"), std::string::npos);
}
