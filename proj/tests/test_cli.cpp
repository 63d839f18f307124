#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "cgat/dataset.hpp"
#include "cgat/hashmodel.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(CGAT_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 512> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("cgat_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    const auto r = cli("gen-data --train-count 200 --database-count 400 --query-count 40 --out " + path("data.cgds"));
    ASSERT_EQ(r.code, 0) << r.output;
    const auto t = cli("train-baseline --epochs 3 --data " + path("data.cgds") + " --out " + path("base.ckpt"));
    ASSERT_EQ(t.code, 0) << t.output;
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }
  static std::string path(const std::string& name) { return (dir_ / name).string(); }

  static fs::path dir_;
};

fs::path Cli::dir_;

}  // namespace

TEST_F(Cli, GenDataWritesDatasetAndConfigEcho) {
  const auto ds = cgat::load_dataset(path("data.cgds"));
  EXPECT_EQ(ds.count(cgat::kQuery), 40u);
  const auto echo = read_json(path("data.cgds.config.json"));
  EXPECT_EQ(echo["command"], "gen-data");
  EXPECT_EQ(echo["knobs"]["train-count"], 200);
  EXPECT_EQ(echo["knobs"]["classes"], 8);
}

TEST_F(Cli, TrainingWritesCheckpointLogAndSummary) {
  EXPECT_NO_THROW(cgat::load_checkpoint(path("base.ckpt")));
  std::ifstream log(path("base.ckpt.log.csv"));
  std::string header;
  std::getline(log, header);
  EXPECT_EQ(header, "epoch,batch,L_ori,L_adv,L_cat,wall_ms");
  const auto summary = read_json(path("base.ckpt.summary.json"));
  EXPECT_TRUE(summary.contains("clean_map"));
  EXPECT_EQ(read_json(path("base.ckpt.config.json"))["knobs"]["epochs"], 3);
}

TEST_F(Cli, EvaluateReproducesTrainingSummary) {
  const auto r = cli("evaluate --data " + path("data.cgds") + " --model " + path("base.ckpt") + " --out " +
                     path("eval"));
  ASSERT_EQ(r.code, 0) << r.output;
  const double trained = read_json(path("base.ckpt.summary.json"))["clean_map"];
  const double evaluated = read_json(path("eval.summary.json"))["map"];
  EXPECT_NEAR(evaluated, trained, 1e-9);
  std::ifstream csv(path("eval.metrics.csv"));
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "kind,n,recall,precision,map,queries");
}

TEST_F(Cli, AttackEvaluateAndReport) {
  const auto a = cli("attack --attack-iterations 5 --data " + path("data.cgds") + " --model " + path("base.ckpt") +
                     " --out " + path("adv.cgds"));
  ASSERT_EQ(a.code, 0) << a.output;
  const auto adv = cgat::load_dataset(path("adv.cgds"));
  const auto clean = cgat::load_dataset(path("data.cgds")).gather(cgat::kQuery);
  ASSERT_EQ(adv.size(), clean.size());
  for (std::size_t i = 0; i < adv.features.size(); ++i) {
    ASSERT_LE(std::abs(adv.features[i] - clean.features[i]), 8.0 / 255.0 + 1e-12);
  }
  const auto stats = read_json(path("adv.cgds.stats.json"));
  EXPECT_LE(stats["max_linf"].get<double>(), 8.0 / 255.0 + 1e-12);
  EXPECT_EQ(stats["iterations"], 5);

  const auto e = cli("evaluate --data " + path("data.cgds") + " --model " + path("base.ckpt") + " --queries " +
                     path("adv.cgds") + " --out " + path("eval_adv"));
  ASSERT_EQ(e.code, 0) << e.output;
  ASSERT_EQ(cli("evaluate --data " + path("data.cgds") + " --model " + path("base.ckpt") + " --out " +
                path("eval_clean")).code,
            0);
  const auto rep = cli("report --baseline-clean " + path("eval_clean.metrics.csv") + " --baseline-attacked " +
                       path("eval_adv.metrics.csv") + " --cgat-clean " + path("eval_clean.metrics.csv") +
                       " --cgat-attacked " + path("eval_adv.metrics.csv") + " --out " + path("report"));
  ASSERT_EQ(rep.code, 0) << rep.output;
  std::ifstream table(path("report.table.csv"));
  std::string header;
  std::getline(table, header);
  EXPECT_EQ(header, "model,clean_map,attacked_map,map_drop");
  std::ifstream curves(path("report.curves.csv"));
  std::getline(curves, header);
  EXPECT_EQ(header, "model,condition,kind,n,recall,precision");
}

TEST_F(Cli, FlagsOverrideConfigFileOverDefaults) {
  {
    std::ofstream cfg(path("cfg.json"));
    cfg << R"({"classes": 5, "dim": 7, "query-count": 11, "train-count": 20, "database-count": 40})";
  }
  const auto r = cli("gen-data --config " + path("cfg.json") + " --dim 6 --out " + path("cfg.cgds"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto ds = cgat::load_dataset(path("cfg.cgds"));
  EXPECT_EQ(ds.classes, 5u);
  EXPECT_EQ(ds.dim, 6u);
  const auto echo = read_json(path("cfg.cgds.config.json"));
  EXPECT_EQ(echo["knobs"]["dim"], 6);
  EXPECT_EQ(echo["knobs"]["noise"], 0.05);
}

TEST_F(Cli, FractionFlags) {
  const auto r = cli("attack --attack-epsilon 4/255 --attack-iterations 1 --data " + path("data.cgds") +
                     " --model " + path("base.ckpt") + " --out " + path("adv4.cgds"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_DOUBLE_EQ(read_json(path("adv4.cgds.stats.json"))["epsilon"].get<double>(), 4.0 / 255.0);
}

TEST_F(Cli, ConfigErrorsExitTwo) {
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("no-such-command").code, 2);
  EXPECT_EQ(cli("gen-data").code, 2);
  EXPECT_EQ(cli("gen-data --dim abc --out " + path("x.cgds")).code, 2);
  EXPECT_EQ(cli("gen-data --contrast 2 --out " + path("x.cgds")).code, 2);
  EXPECT_EQ(cli("train-baseline --lr -1 --data " + path("data.cgds") + " --out " + path("x.ckpt")).code, 2);
  {
    std::ofstream cfg(path("bad.json"));
    cfg << R"({"no-such-knob": 1})";
  }
  EXPECT_EQ(cli("gen-data --config " + path("bad.json") + " --out " + path("x.cgds")).code, 2);
  {
    std::ofstream cfg(path("broken.json"));
    cfg << "{ not json";
  }
  EXPECT_EQ(cli("gen-data --config " + path("broken.json") + " --out " + path("x.cgds")).code, 2);
  EXPECT_EQ(cli("evaluate --ap-norm weird --data " + path("data.cgds") + " --model " + path("base.ckpt") +
                " --out " + path("x"))
                .code,
            2);
  EXPECT_FALSE(fs::exists(path("x.cgds")));
}

TEST_F(Cli, DataErrorsExitThree) {
  EXPECT_EQ(cli("evaluate --data " + path("missing.cgds") + " --model " + path("base.ckpt") + " --out " + path("x"))
                .code,
            3);
  {
    std::ofstream junk(path("junk.cgds"), std::ios::binary);
    junk << "CGATDS9 definitely not a dataset";
  }
  EXPECT_EQ(cli("evaluate --data " + path("junk.cgds") + " --model " + path("base.ckpt") + " --out " + path("x"))
                .code,
            3);
  EXPECT_EQ(cli("evaluate --data " + path("data.cgds") + " --model " + path("data.cgds") + " --out " + path("x"))
                .code,
            3);
  // Model trained on 32 features, data with 6.
  EXPECT_EQ(cli("evaluate --data " + path("cfg.cgds") + " --model " + path("base.ckpt") + " --out " + path("x"))
                .code,
            3);
}

TEST_F(Cli, VerificationCommands) {
  const auto c = cli("chcm-check");
  EXPECT_EQ(c.code, 0) << c.output;
  EXPECT_NE(c.output.find("200/200 exact"), std::string::npos) << c.output;
  const auto g = cli("grad-check --grad-models 2 --out " + path("grad.json"));
  EXPECT_EQ(g.code, 0) << g.output;
  EXPECT_TRUE(read_json(path("grad.json"))["passed"].get<bool>());
}

TEST_F(Cli, HelpExitsZero) { EXPECT_EQ(cli("--help").code, 0); }
