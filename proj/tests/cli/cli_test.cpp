#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(XALIGN_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::map<std::string, std::string> fields(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("xalign_cli_" + std::string(info->name()) + "_" +
                                        std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string corpus(const std::string& name, const std::string& extra = "",
                     const std::string& shape = "--identities 20 --imgs 5 --txts 2 --dim 16") {
    const auto r = run("gen-synthetic " + shape + " --seed 3 " + extra + " --out " + path(name));
    EXPECT_EQ(r.code, 0) << r.out;
    return path(name);
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenSyntheticCountsAndDeterminism) {
  const auto a = run("gen-synthetic --identities 20 --imgs 5 --txts 2 --dim 16 --seed 9 --out " + path("a.jsonl"));
  ASSERT_EQ(a.code, 0) << a.out;
  const auto kv = fields(a.out);
  EXPECT_EQ(kv.at("images"), "100");
  EXPECT_EQ(kv.at("texts"), "40");
  ASSERT_EQ(run("gen-synthetic --identities 20 --imgs 5 --txts 2 --dim 16 --seed 9 --out " + path("b.jsonl")).code, 0);
  EXPECT_EQ(slurp(path("a.jsonl")), slurp(path("b.jsonl")));
  ASSERT_EQ(run("gen-synthetic --identities 20 --imgs 5 --txts 2 --dim 16 --seed 10 --out " + path("c.jsonl")).code, 0);
  EXPECT_NE(slurp(path("a.jsonl")), slurp(path("c.jsonl")));
}

TEST_F(Cli, GenSyntheticRejectsTinyDimension) {
  EXPECT_EQ(run("gen-synthetic --dim 2 --out " + path("x.jsonl")).code, 2);
}

TEST_F(Cli, EvalOnSeparableCorpus) {
  const auto c = corpus("sep.jsonl", "--sigma 0 --map-strength 0");
  const auto r = run("eval --corpus " + c);
  ASSERT_EQ(r.code, 0) << r.out;
  const auto kv = fields(r.out);
  EXPECT_EQ(kv.at("top1"), "1");
  EXPECT_EQ(kv.at("evaluated"), "40");
  EXPECT_EQ(kv.at("excluded"), "0");
}

TEST_F(Cli, ScoreTableFeedsEval) {
  const auto c = corpus("c.jsonl", "--map-strength 2");
  ASSERT_EQ(run("score --corpus " + c + " --beta 1.0 --out " + path("s.tsv")).code, 0);
  const auto from_table = run("eval --corpus " + c + " --scores " + path("s.tsv") + " --ks 1,5,10");
  const auto direct = run("eval --corpus " + c + " --beta 1.0 --ks 1,5,10");
  ASSERT_EQ(from_table.code, 0) << from_table.out;
  ASSERT_EQ(direct.code, 0) << direct.out;
  EXPECT_EQ(from_table.out, direct.out);
  EXPECT_EQ(fields(direct.out).at("direction"), "i2t");
}

TEST_F(Cli, ScoringIsDeterministicAcrossThreadCounts) {
  const auto c = corpus("c.jsonl");
  ASSERT_EQ(run("score --corpus " + c + " --threads 1 --out " + path("a.tsv")).code, 0);
  ASSERT_EQ(run("score --corpus " + c + " --threads 4 --out " + path("b.tsv")).code, 0);
  EXPECT_EQ(slurp(path("a.tsv")), slurp(path("b.tsv")));
}

TEST_F(Cli, RerankReportsBothRankings) {
  const auto c = corpus("c.jsonl", "--map-strength 2");
  const auto r = run("rerank --corpus " + c + " --j 500 --w 0.3");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto kv = fields(r.out);
  EXPECT_EQ(kv.at("j"), "100");
  EXPECT_EQ(kv.at("j_clamped"), "1");
  EXPECT_TRUE(kv.count("base_top1") && kv.count("rerank_top1"));
  EXPECT_EQ(run("rerank --corpus " + c + " --w 1.5").code, 2);
}

TEST_F(Cli, GradcheckPasses) {
  const auto r = run("gradcheck --seeds 20");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto kv = fields(r.out);
  EXPECT_EQ(kv.at("status"), "pass");
  EXPECT_LE(std::stod(kv.at("max_rel_error")), 1e-4);
}

TEST_F(Cli, TrainToyReportsTrace) {
  const auto c = corpus("c.jsonl", "", "--identities 6 --imgs 3 --txts 2 --dim 8");
  const auto r = run("train-toy --corpus " + c + " --epochs 2 --trace");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto kv = fields(r.out);
  EXPECT_EQ(kv.at("epochs"), "2");
  EXPECT_EQ(kv.at("epoch0_loss"), kv.at("initial_loss"));
  EXPECT_EQ(kv.at("epoch2_loss"), kv.at("final_loss"));
}

TEST_F(Cli, TrainToyDivergenceExitsOne) {
  const auto c = corpus("c.jsonl", "", "--identities 6 --imgs 3 --txts 2 --dim 8");
  const auto r = run("train-toy --corpus " + c + " --epochs 30 --lr 1.7e308");
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_NE(r.out.find("diverged"), std::string::npos);
}

TEST_F(Cli, MalformedCorpusNamesRecord) {
  const auto c = corpus("c.jsonl");
  std::ifstream in(c);
  std::ostringstream broken;
  std::string line;
  int n = 0;
  std::string victim;
  while (std::getline(in, line)) {
    if (++n == 4) {
      const auto at = line.find("\"id\":\"");
      victim = line.substr(at + 6, line.find('"', at + 6) - at - 6);
      const auto g = line.find("\"global\":[");
      line.insert(g + 10, "\"oops\",");
    }
    broken << line << '\n';
  }
  std::ofstream(path("bad.jsonl")) << broken.str();
  const auto r = run("eval --corpus " + path("bad.jsonl"));
  EXPECT_EQ(r.code, 2);
  ASSERT_FALSE(victim.empty());
  EXPECT_NE(r.out.find(victim), std::string::npos) << r.out;
}

TEST_F(Cli, MissingFileAndUnknownIdsExitTwo) {
  EXPECT_EQ(run("eval --corpus " + path("nope.jsonl")).code, 2);
  const auto c = corpus("c.jsonl");
  std::ofstream(path("s.tsv")) << "# direction=fused\nghost\tphantom\t0.5\n";
  EXPECT_EQ(run("eval --corpus " + c + " --scores " + path("s.tsv")).code, 2);
}
