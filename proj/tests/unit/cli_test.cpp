#include "cli.hpp"
#include "rclqr/trace.hpp"
#include "support/fixtures.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

namespace fs = std::filesystem;
using namespace rclqr;
using namespace rclqr::testing;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("rclqr_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "rclqr");
    out_.str("");
    err_.str("");
    return cli::run(args, out_, err_);
  }

  std::string write(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p.string();
  }

  std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  // Number printed after `key` in the last command's stdout.
  double value_after(const std::string& key) {
    const std::string text = out_.str();
    const auto pos = text.find(key);
    if (pos == std::string::npos) throw std::runtime_error("'" + key + "' not in output:\n" + text);
    return std::stod(text.substr(pos + key.size()));
  }

  fs::path dir_;
  std::ostringstream out_;
  std::ostringstream err_;
};

const char* kScalarGauss4 = R"({
  "system": {"A": [[0.5]], "B": [[1]]},
  "cost": {"Q": [[1]], "R": [[1]], "iota": 1e9},
  "noise": {"channels": [{"type": "gaussian", "mean": 0, "variance": 4}], "mc_samples": 1000000},
  "policy0": {"K0": [[0]], "sigma": 0}
})";

}  // namespace

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run({}), cli::kConfigError);
  EXPECT_EQ(run({"frobnicate"}), cli::kConfigError);
  EXPECT_EQ(run({"train"}), cli::kConfigError);
  EXPECT_EQ(run({"--help"}), cli::kSuccess);
  EXPECT_NE(out_.str().find("train"), std::string::npos);
}

TEST_F(CliTest, ConfigErrorCodes) {
  EXPECT_EQ(run({"oracle", "--config", (dir_ / "missing.json").string()}), cli::kConfigError);
  EXPECT_EQ(run({"oracle", "--config", write("bad.json", "{\"system\": [")}), cli::kConfigError);
  EXPECT_NE(err_.str().find("line 1"), std::string::npos) << err_.str();

  std::string dim = kScalarGauss4;
  dim.replace(dim.find("\"K0\": [[0]]"), 11, "\"K0\": [[0, 1]]");
  EXPECT_EQ(run({"train", "--config", write("dim.json", dim), "--out", dir_.string()}), cli::kDimensionMismatch);

  std::string unstable = kScalarGauss4;
  unstable.replace(unstable.find("[[0.5]]"), 7, "[[1.5]]");
  EXPECT_EQ(run({"train", "--config", write("unstable.json", unstable), "--out", dir_.string()}),
            cli::kUnstableInitialPolicy);
}

TEST_F(CliTest, ZeroStepsWritesEmptyTrace) {
  EXPECT_EQ(run({"train", "--config", config_path("scalar"), "--steps", "0", "--out", dir_.string()}), cli::kSuccess)
      << err_.str();
  const TraceFile tf = read_trace_file((dir_ / "trace.csv").string());
  EXPECT_TRUE(tf.rows.empty());
  EXPECT_EQ(tf.meta.config_hash, config("scalar").hash);
  const PolicyRecord rec = read_policy_record((dir_ / "results.json").string());
  EXPECT_EQ(rec.policy.X(), config("scalar").policy0.X());
}

TEST_F(CliTest, TrainIsDeterministicPerSeed) {
  const std::vector<std::string> base = {"train", "--config", config_path("scalar"), "--steps", "5000"};
  auto with_out = [&](const std::string& sub, std::vector<std::string> extra) {
    std::vector<std::string> a = base;
    a.push_back("--out");
    a.push_back((dir_ / sub).string());
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  };
  ASSERT_EQ(run(with_out("a", {})), cli::kSuccess) << err_.str();
  ASSERT_EQ(run(with_out("b", {})), cli::kSuccess);
  ASSERT_EQ(run(with_out("c", {"--seed", "2"})), cli::kSuccess);
  const std::string a = slurp(dir_ / "a" / "trace.csv");
  EXPECT_EQ(a, slurp(dir_ / "b" / "trace.csv"));
  EXPECT_NE(a, slurp(dir_ / "c" / "trace.csv"));
  EXPECT_EQ(read_trace_file((dir_ / "a" / "trace.csv").string()).rows.size(), 50u);
}

TEST_F(CliTest, SeedFanOutAndPlots) {
  ASSERT_EQ(run({"train", "--config", config_path("scalar"), "--steps", "1000", "--seeds", "3..4", "--plots", "--out",
                 dir_.string()}),
            cli::kSuccess)
      << err_.str();
  for (const char* f : {"trace_seed3.csv", "trace_seed4.csv", "results_seed3.json", "trace_seed3.py"}) {
    EXPECT_TRUE(fs::exists(dir_ / f)) << f;
  }
  EXPECT_EQ(read_trace_file((dir_ / "trace_seed4.csv").string()).meta.seed, 4u);
  EXPECT_EQ(run({"train", "--config", config_path("scalar"), "--seeds", "5..2", "--out", dir_.string()}),
            cli::kConfigError);
}

TEST_F(CliTest, BlowUpExitsWithInstability) {
  std::string text = kScalarGauss4;
  text.replace(text.rfind('}'), 1, ", \"run\": {\"steps\": 100, \"blowup_threshold\": 1e-6}}");
  EXPECT_EQ(run({"train", "--config", write("blow.json", text), "--out", dir_.string()}), cli::kInstability);
  EXPECT_NE(slurp(dir_ / "trace.csv").find("aborted"), std::string::npos);
}

TEST_F(CliTest, OracleAndEvaluateAgree) {
  ASSERT_EQ(run({"oracle", "--config", config_path("scalar"), "--out", dir_.string()}), cli::kSuccess) << err_.str();
  const PolicyRecord rec = read_policy_record((dir_ / "oracle.json").string());
  EXPECT_NEAR(rec.policy.K(0, 0), 0.2655644371, 1e-9);
  EXPECT_EQ(rec.mu, 0.0);
  EXPECT_NEAR(value_after("z1 = "), -16.0 / 9.0, 1e-9);

  ASSERT_EQ(run({"evaluate", "--config", config_path("scalar"), "--policy", (dir_ / "oracle.json").string(),
                 "--eval-steps", "200000"}),
            cli::kSuccess)
      << err_.str();
  const double J = value_after("J(X) = ");
  EXPECT_NEAR(J, 1.132782219, 1e-8);
  EXPECT_LT(std::abs(value_after("J estimate = ") - J) / J, 0.03);
}

TEST_F(CliTest, OracleReportsInfeasibleConstraint) {
  EXPECT_EQ(run({"oracle", "--config", config_path("four_state"), "--out", dir_.string()}), cli::kSolverFailure);
  EXPECT_NE(out_.str().find("KKT certificate"), std::string::npos);
}

TEST_F(CliTest, EvaluateRejectsUnstablePolicy) {
  const std::string p = (dir_ / "bad.json").string();
  write_policy_record(p, PolicyRecord{scalar_policy(-2.0, 0.0, 0.0), 0.0, "test", {}});
  EXPECT_EQ(run({"evaluate", "--config", config_path("scalar"), "--policy", p}), cli::kInstability);
  write_policy_record(p, PolicyRecord{Policy(Matrix::Zero(1, 2), Vector::Zero(1), 0.0), 0.0, "test", {}});
  EXPECT_EQ(run({"evaluate", "--config", config_path("scalar"), "--policy", p}), cli::kDimensionMismatch);
}

TEST_F(CliTest, MomentsOfGaussianChannel) {
  ASSERT_EQ(run({"moments", "--config", write("g.json", kScalarGauss4)}), cli::kSuccess) << err_.str();
  // (w^2 - 4)^2 for w ~ N(0, 4): E w^4 - 8 E w^2 + 16 = 48 - 32 + 16.
  EXPECT_LT(std::abs(value_after("m4 = ") - 32.0), 1.0);
}
