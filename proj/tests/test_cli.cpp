#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

namespace fs = std::filesystem;

namespace {

const std::string kCli = QCD_CLI_PATH;
const std::string kConfigs = QCD_CONFIG_DIR;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("qcd_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = kCli + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

TEST(Cli, ModelsList) {
  const auto dir = scratch("models");
  EXPECT_EQ(run("models list", dir / "log"), 0);
  const auto text = slurp(dir / "log");
  for (const char* name : {"ar1-gauss", "ar1-t", "ar-arch-gauss", "lai-2d", "var-rc", "arp-gauss"})
    EXPECT_NE(text.find(name), std::string::npos) << name;
}

TEST(Cli, CalibrateWritesSheetAndManifest) {
  const auto dir = scratch("calibrate");
  const int code = run("calibrate --config " + kConfigs + "/calibrate.conf --out " + (dir / "a").string(), dir / "log");
  EXPECT_EQ(code, 0) << slurp(dir / "log");
  EXPECT_EQ(first_line(dir / "a" / "calibration.csv"), "field,value");
  EXPECT_EQ(first_line(dir / "a" / "manifest.txt"), "tool = qcd");
  const auto sheet = slurp(dir / "a" / "calibration.csv");
  EXPECT_NE(sheet.find("m_star,16"), std::string::npos);
  EXPECT_NE(sheet.find("k_star,32"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "a" / "membership.csv"));
}

TEST(Cli, RiskIsReproducibleAcrossThreadCounts) {
  const auto dir = scratch("risk");
  const std::string base = "risk --config " + kConfigs + "/risk.conf --seed 21 ";
  ASSERT_EQ(run(base + "--threads 1 --out " + (dir / "a").string(), dir / "log_a"), 0) << slurp(dir / "log_a");
  ASSERT_EQ(run(base + "--threads 3 --out " + (dir / "b").string(), dir / "log_b"), 0) << slurp(dir / "log_b");
  EXPECT_EQ(first_line(dir / "a" / "risk.csv"),
            "functional,nu,estimate,se,reps,censored,window_start,window_length,rho,moment,truncation_bound");
  EXPECT_EQ(slurp(dir / "a" / "risk.csv"), slurp(dir / "b" / "risk.csv"));
  EXPECT_EQ(slurp(dir / "a" / "manifest.txt"), slurp(dir / "b" / "manifest.txt"));
  EXPECT_NE(slurp(dir / "a" / "manifest.txt").find("seed = 21"), std::string::npos);
}

TEST(Cli, SweepSummarySchema) {
  const auto dir = scratch("sweep");
  ASSERT_EQ(run("sweep --config " + kConfigs + "/sweep.conf --out " + (dir / "a").string(), dir / "log"), 0)
      << slurp(dir / "log");
  EXPECT_EQ(first_line(dir / "a" / "sweep_summary.csv"), "kind,nu,slope,ci_lo,ci_hi,one_over_I");
  EXPECT_EQ(first_line(dir / "a" / "sweep.csv"), "kind,h,nu,estimate,se,reps,censored,ratio");
}

TEST(Cli, BadInputsExitWithOne) {
  const auto dir = scratch("bad");
  std::ofstream(dir / "bad.conf") << "model.name = ar1-gauss\nmodel.name = ar1-t\n";
  EXPECT_EQ(run("risk --config " + (dir / "bad.conf").string(), dir / "log1"), 1);
  EXPECT_NE(slurp(dir / "log1").find("line 2"), std::string::npos);
  EXPECT_EQ(run("risk --config " + (dir / "missing.conf").string(), dir / "log2"), 1);
  EXPECT_EQ(run("frobnicate", dir / "log3"), 1);
  EXPECT_EQ(run("audit --config " + kConfigs + "/calibrate.conf", dir / "log4"), 1);
}

}  // namespace
