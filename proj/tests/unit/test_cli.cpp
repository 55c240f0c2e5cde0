#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>

#include "test_util.hpp"

namespace {

struct Result {
  int code;
  std::string err;
};

Result cli(const testutil::TempDir& dir, const std::string& args) {
  const auto err = (dir.path() / "stderr.txt").string();
  const std::string cmd = std::string("\"") + SIGSURV_CLI_PATH + "\" " + args + " > /dev/null 2> \"" + err + "\"";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, sigsurv::text::read_file(err)};
}

}  // namespace

TEST(Cli, UsageErrors) {
  testutil::TempDir dir("cli");
  EXPECT_NE(cli(dir, "").code, 0);
  EXPECT_NE(cli(dir, "frobnicate").code, 0);
  const auto bad = cli(dir, "--set nonsense=1 ingest");
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("[config]"), std::string::npos) << bad.err;
}

TEST(Cli, StageFailureIsTagged) {
  testutil::TempDir dir("cli");
  const auto r = cli(dir, "--out-dir \"" + dir.file("run") + "\" fit");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("[fit]"), std::string::npos) << r.err;
  const auto missing = cli(dir, "--out-dir \"" + dir.file("run") + "\" ingest --embeddings nowhere.csv --outcomes nowhere.csv");
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.err.find("[ingest]"), std::string::npos) << missing.err;
}

TEST(Cli, SimulateRunPredict) {
  testutil::TempDir dir("cli");
  const auto data = dir.file("data");
  ASSERT_EQ(cli(dir, "-q --out-dir \"" + data + "\" simulate --patients 250").code, 0);
  const auto conf = dir.file("data/sigsurv.conf");
  ASSERT_TRUE(std::filesystem::exists(conf));
  const std::string common = "-q --config \"" + conf + "\" --out-dir \"" + dir.file("run") +
                             "\" --set p_bar=3 --set level=2 --set lambda_points=3 --set cv_folds=3 --set test_folds=2";
  const auto run = cli(dir, common + " run");
  ASSERT_EQ(run.code, 0) << run.err;
  const auto pred = dir.file("pred.csv");
  ASSERT_EQ(cli(dir, "predict --model \"" + dir.file("run/model.txt") + "\" --features \"" + dir.file("run/features.csv") +
                         "\" --times 365 730 -o \"" + pred + "\"")
                .code,
            0);
  const auto text = sigsurv::text::read_file(pred);
  EXPECT_EQ(text.substr(0, text.find('\n')), "patient_id,eta,S_365,S_730");
  EXPECT_EQ(cli(dir, common + " baseline --kind mean").code, 0);
  EXPECT_TRUE(std::filesystem::exists(dir.file("run/baseline_mean/report.json")));
}
