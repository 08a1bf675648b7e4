#include <cmath>
#include <limits>
#include <string>

#include <gtest/gtest.h>

#include "qcd/config.hpp"
#include "qcd/csv.hpp"

namespace {

TEST(Config, MinimalRiskConfig) {
  const auto cfg = qcd::parse_config(
      "# minimal\n"
      "model.name = ar1-gauss\n"
      "model.a0 = 0\n"
      "model.a1 = 0.5   # post-change\n"
      "detector.kind = sr\n"
      "detector.beta = 0.05\n");
  EXPECT_EQ(cfg.kind, qcd::ExperimentKind::kRisk);
  ASSERT_TRUE(cfg.model.has_value());
  EXPECT_EQ(cfg.model->name, "ar1-gauss");
  EXPECT_EQ(cfg.model->params.at("a1"), "0.5");
  EXPECT_EQ(cfg.detector.m_star, 16u);
  EXPECT_EQ(cfg.detector.k_star, 32u);
  ASSERT_TRUE(cfg.sheet.has_value());
  EXPECT_NEAR(cfg.sheet->h_beta, 9771.03, 0.01);
}

TEST(Config, ExplicitWindowOverridesDefaults) {
  const auto cfg = qcd::parse_config("experiment.kind = calibrate\ndetector.beta = 0.05\ndetector.m_star = 4\n"
                                     "detector.k_star = 9\n");
  EXPECT_EQ(cfg.detector.m_star, 4u);
  EXPECT_EQ(cfg.detector.k_star, 9u);
  EXPECT_FALSE(cfg.model.has_value());
}

TEST(Config, ListsAndBudgets) {
  const auto cfg = qcd::parse_config(
      "experiment.kind = sweep\nmodel.name = iid-gauss-shift\nmodel.theta = 1\n"
      "sweep.h = 10, 100, 1000\nsweep.nu = 0,5\nsweep.kinds = cusum\nmc.reps = 50\nrun.seed = 99\n");
  EXPECT_EQ(cfg.kind, qcd::ExperimentKind::kSweep);
  EXPECT_EQ(cfg.sweep_h, (std::vector<double>{10, 100, 1000}));
  EXPECT_EQ(cfg.sweep_nu, (std::vector<std::uint64_t>{0, 5}));
  ASSERT_EQ(cfg.sweep_kinds.size(), 1u);
  EXPECT_EQ(cfg.sweep_kinds[0], qcd::DetectorKind::kCusum);
  EXPECT_EQ(cfg.mc.reps, 50u);
  EXPECT_EQ(cfg.mc.seed, 99u);
}

TEST(Config, DuplicateKeyReportsLine) {
  try {
    qcd::parse_config("model.name = ar1-gauss\n\nmodel.name = ar1-t\n");
    FAIL() << "expected ParseError";
  } catch (const qcd::ParseError& e) {
    EXPECT_EQ(e.line(), 3);
  }
}

TEST(Config, MalformedLines) {
  EXPECT_THROW(qcd::parse_config("model.name ar1-gauss\n"), qcd::ParseError);
  EXPECT_THROW(qcd::parse_config("name = ar1-gauss\n"), qcd::ParseError);
  EXPECT_THROW(qcd::parse_config("model.name =\n"), qcd::ParseError);
  EXPECT_THROW(qcd::parse_config("model. name = x\n"), qcd::ParseError);
}

TEST(Config, ValueErrors) {
  EXPECT_THROW(qcd::parse_config("experiment.kind = calibrate\ndetector.beta = 1.5\n"), qcd::OutOfRange);
  EXPECT_THROW(qcd::parse_config("experiment.kind = calibrate\ndetector.beta = abc\n"), qcd::Error);
  EXPECT_THROW(qcd::parse_config("experiment.kind = bogus\n"), qcd::OutOfRange);
  EXPECT_THROW(qcd::parse_config("experiment.kind = calibrate\n"), qcd::OutOfRange);
  EXPECT_THROW(qcd::parse_config("detector.kind = sr\n"), qcd::OutOfRange);  // risk without a model
  EXPECT_THROW(qcd::parse_config("model.name = nope\n"), qcd::UnknownModel);
}

TEST(Config, UnknownKey) {
  EXPECT_THROW(qcd::parse_config("model.name = ar1-gauss\nmodel.a0 = 0\nmodel.a1 = 0.5\ndetector.colour = red\n"),
               qcd::UnknownKey);
  EXPECT_THROW(qcd::parse_config("model.name = ar1-gauss\nmodel.a0 = 0\nmodel.a1 = 0.5\nmodel.a2 = 1\n"),
               qcd::Error);
}

TEST(Config, ExpectedKindMustAgree) {
  const std::string text = "experiment.kind = calibrate\ndetector.beta = 0.1\n";
  EXPECT_NO_THROW(qcd::parse_config(text, qcd::ExperimentKind::kCalibrate));
  EXPECT_THROW(qcd::parse_config(text, qcd::ExperimentKind::kRisk), qcd::OutOfRange);
  const auto cfg = qcd::parse_config("detector.beta = 0.1\n", qcd::ExperimentKind::kCalibrate);
  EXPECT_EQ(cfg.kind, qcd::ExperimentKind::kCalibrate);
}

TEST(Csv, FormatDouble) {
  EXPECT_EQ(qcd::format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(qcd::format_double(2.0), "2");
  EXPECT_EQ(qcd::format_double(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(qcd::format_double(-std::numeric_limits<double>::infinity()), "-inf");
  EXPECT_EQ(qcd::format_double(std::nan("")), "nan");
  const double x = 1.0 / 3.0;
  EXPECT_EQ(std::stod(qcd::format_double(x)), x);
}

}  // namespace
