#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "qcd/risk.hpp"
#include "qcd/zoo.hpp"

namespace {

using qcd::McBudget;
using qcd::StopOutcome;

struct FixedStop {
  std::uint64_t tau;
  StopOutcome operator()(std::uint64_t, std::uint64_t horizon, qcd::Rng&) const {
    return tau > horizon ? StopOutcome{horizon, true} : StopOutcome{tau, false};
  }
};

struct NeverStop {
  StopOutcome operator()(std::uint64_t, std::uint64_t horizon, qcd::Rng&) const { return {horizon, true}; }
};

struct UniformStop {
  std::uint64_t k_star;
  StopOutcome operator()(std::uint64_t, std::uint64_t horizon, qcd::Rng& rng) const {
    const auto tau = 1 + static_cast<std::uint64_t>(rng.uniform() * static_cast<double>(k_star));
    return tau > horizon ? StopOutcome{horizon, true} : StopOutcome{tau, false};
  }
};

McBudget budget(std::size_t reps, std::uint64_t seed = 1) {
  McBudget b;
  b.reps = reps;
  b.seed = seed;
  b.horizon = 100000;
  return b;
}

TEST(Pfa, DeterministicRules) {
  const double rho = 0.05;
  const auto one = qcd::estimate_pfa(FixedStop{1}, rho, budget(10));
  EXPECT_NEAR(one.estimate + one.truncation_bound, 1.0 - rho, 1e-14);
  EXPECT_LT(one.truncation_bound, 1e-6);
  EXPECT_EQ(one.standard_error, 0.0);
  const auto never = qcd::estimate_pfa(NeverStop{}, rho, budget(10));
  EXPECT_EQ(never.estimate, 0.0);
  EXPECT_THROW(qcd::estimate_pfa(FixedStop{1}, 0.0, budget(10)), qcd::OutOfRange);
  EXPECT_THROW(qcd::estimate_pfa(FixedStop{1}, 0.1, budget(1)), qcd::InsufficientBudget);
}

TEST(Pfa, TruncationPoint) {
  for (double rho : {0.01, 0.05, 0.3}) {
    const auto k = qcd::pfa_truncation(rho);
    EXPECT_LE(std::pow(1.0 - rho, static_cast<double>(k)), 1e-6 * (1 + 1e-12));
    EXPECT_GT(std::pow(1.0 - rho, static_cast<double>(k - 1)), 1e-6);
  }
}

TEST(Pfa, GeometricStopMatchesClosedForm) {
  // tau ~ Geometric(q) on {1, 2, ...}: E(1 - rho)^tau = q(1-rho) / (1 - (1-q)(1-rho)).
  struct GeometricStop {
    double q;
    StopOutcome operator()(std::uint64_t, std::uint64_t horizon, qcd::Rng& rng) const {
      std::uint64_t t = 1;
      while (rng.uniform() >= q && t <= horizon) ++t;
      return t > horizon ? StopOutcome{horizon, true} : StopOutcome{t, false};
    }
  };
  const double rho = 0.1, q = 0.2;
  const auto r = qcd::estimate_pfa(GeometricStop{q}, rho, budget(50000, 3));
  const double oracle = q * (1.0 - rho) / (1.0 - (1.0 - q) * (1.0 - rho));
  EXPECT_NEAR(r.estimate + r.truncation_bound, oracle, 4.0 * r.standard_error + r.truncation_bound);
}

TEST(Pfa, SrAtBayesThresholdMeetsAlpha) {
  auto model = qcd::build_model("ar1-gauss", {{"a0", "0"}, {"a1", "0.5"}});
  const double alpha = 0.05, rho = 0.05;
  const qcd::DetectorRule rule{model.get(), qcd::DetectorConfig::shiryaev_roberts((1 - alpha) / (rho * alpha))};
  const auto r = qcd::estimate_pfa(rule, rho, budget(20000, 2));
  EXPECT_LE(r.estimate, alpha + 3.0 * r.standard_error);
  EXPECT_GE(r.estimate, 0.0);
}

TEST(Lpfa, DeterministicRules) {
  const auto late = qcd::estimate_lpfa(FixedStop{32 + 16}, 32, 16, budget(10));
  EXPECT_EQ(late.lpfa.estimate, 0.0);
  EXPECT_EQ(late.lcpfa.estimate, 0.0);
  for (double p : late.window_probabilities) EXPECT_EQ(p, 0.0);

  const auto first = qcd::estimate_lpfa(FixedStop{1}, 10, 5, budget(10), false);
  EXPECT_EQ(first.lpfa.estimate, 1.0);
  EXPECT_EQ(first.lpfa.window_start, 1u);
  EXPECT_TRUE(first.conditional_degenerate);
  EXPECT_THROW(qcd::estimate_lpfa(FixedStop{1}, 10, 5, budget(10)), qcd::DegenerateConditioning);
  EXPECT_THROW(qcd::estimate_lpfa(FixedStop{1}, 5, 5, budget(10)), qcd::OutOfRange);
}

TEST(Lpfa, UniformStopHasWindowProbabilityMOverK) {
  const std::uint64_t k = 40, m = 8;
  const std::size_t reps = 40000;
  const auto r = qcd::estimate_lpfa(UniformStop{k}, k, m, budget(reps, 5));
  const double p = static_cast<double>(m) / static_cast<double>(k);
  const double se = std::sqrt(p * (1 - p) / static_cast<double>(reps));
  ASSERT_EQ(r.window_probabilities.size(), k - m);
  for (double w : r.window_probabilities) {
    EXPECT_NEAR(w, p, 4.0 * se);
    EXPECT_LE(w, r.lpfa.estimate);
  }
  for (double w : r.conditional_window_probabilities) EXPECT_LE(w, r.lcpfa.estimate);
  // P(k < tau < k + m | tau > k) = (m - 1) / (K - k) for tau uniform on 1..K
  const std::uint64_t last = k - m;
  EXPECT_NEAR(r.conditional_window_probabilities[last - 1], (m - 1.0) / static_cast<double>(k - last), 0.02);
}

TEST(Delay, DeterministicRules) {
  const auto at0 = qcd::estimate_delay(FixedStop{7}, 0, budget(10));
  EXPECT_EQ(at0.positive_part.estimate, 7.0);
  ASSERT_TRUE(at0.conditional.has_value());
  EXPECT_EQ(at0.conditional->estimate, 7.0);

  qcd::DelayOptions loose{1, false};
  for (std::uint64_t nu : {7u, 8u, 100u}) {
    const auto late = qcd::estimate_delay(FixedStop{7}, nu, budget(10), loose);
    EXPECT_EQ(late.positive_part.estimate, 0.0);
    EXPECT_FALSE(late.conditional.has_value());
  }
  EXPECT_THROW(qcd::estimate_delay(FixedStop{7}, 7, budget(10)), qcd::DegenerateConditioning);

  const auto sq = qcd::estimate_delay(FixedStop{7}, 2, budget(10), {2, true});
  EXPECT_EQ(sq.positive_part.estimate, 25.0);
  EXPECT_EQ(sq.positive_part.id(), "MomentR(2)");
  EXPECT_THROW(qcd::estimate_delay(FixedStop{7}, 0, budget(10), {0, true}), qcd::OutOfRange);
}

TEST(Delay, ExcessCensoring) {
  McBudget b = budget(1000);
  b.horizon = 50;
  EXPECT_THROW(qcd::estimate_delay(FixedStop{60}, 0, b), qcd::ExcessCensoring);
  b.horizon = 60;
  EXPECT_NO_THROW(qcd::estimate_delay(FixedStop{60}, 0, b));
}

TEST(Delay, RatioIdentityAndJensen) {
  auto model = qcd::build_model("ar1-gauss", {{"a0", "0"}, {"a1", "0.5"}});
  const qcd::DetectorRule rule{model.get(), qcd::DetectorConfig::shiryaev_roberts(100.0)};
  for (std::uint64_t nu : {0u, 10u, 40u}) {
    const auto d1 = qcd::estimate_delay(rule, nu, budget(4000, 6));
    ASSERT_TRUE(d1.conditional.has_value());
    EXPECT_NEAR(d1.conditional->estimate * d1.prob_no_false_alarm, d1.positive_part.estimate,
                1e-12 * d1.positive_part.estimate);
    const auto d2 = qcd::estimate_delay(rule, nu, budget(4000, 6), {2, true});
    EXPECT_LE(d1.positive_part.estimate * d1.positive_part.estimate,
              d2.positive_part.estimate + 3.0 * d2.positive_part.standard_error);
    EXPECT_GE(d1.positive_part.censored_fraction, 0.0);
    EXPECT_LE(d1.positive_part.censored_fraction, 0.001);
  }
}

TEST(Delay, MatchesDefinitionLevelReimplementation) {
  // SR on iid N(0,1) -> N(theta,1), tau recomputed from the sum over change
  // points on the same draws.
  const double theta = 1.0, h = 50.0;
  const std::uint64_t nu = 5;
  auto model = qcd::build_model("iid-gauss-shift", {{"theta", "1"}});
  const qcd::DetectorRule rule{model.get(), qcd::DetectorConfig::shiryaev_roberts(h)};
  const McBudget b = budget(1000, 17);
  const auto report = qcd::estimate_delay(rule, nu, b, {1, false});

  double total = 0.0;
  for (std::size_t i = 0; i < b.reps; ++i) {
    qcd::Rng rng = qcd::make_stream(b.seed, i, qcd::StreamTag::kReplicate);
    std::vector<double> z;
    std::uint64_t tau = 0;
    for (std::uint64_t n = 1; n <= b.horizon; ++n) {
      const double y = (n > nu ? theta : 0.0) + rng.normal();
      z.push_back(theta * y - 0.5 * theta * theta);
      double r = 0.0;
      for (std::size_t k = 0; k < z.size(); ++k) {
        double s = 0.0;
        for (std::size_t j = k; j < z.size(); ++j) s += z[j];
        r += std::exp(s);
      }
      if (r >= h) {
        tau = n;
        break;
      }
    }
    if (tau > nu) total += static_cast<double>(tau - nu);
  }
  EXPECT_NEAR(report.positive_part.estimate, total / static_cast<double>(b.reps), 1e-12);
}

TEST(Risk, ReproducibleAcrossThreadCounts) {
  auto model = qcd::build_model("ar1-gauss", {{"a0", "0"}, {"a1", "0.5"}});
  const qcd::DetectorRule rule{model.get(), qcd::DetectorConfig::shiryaev_roberts(200.0)};
  McBudget b1 = budget(3000, 9), b4 = b1;
  b1.threads = 1;
  b4.threads = 4;
  const auto a = qcd::estimate_delay(rule, 3, b1);
  const auto c = qcd::estimate_delay(rule, 3, b4);
  EXPECT_EQ(a.positive_part.estimate, c.positive_part.estimate);
  EXPECT_EQ(a.positive_part.standard_error, c.positive_part.standard_error);
  const auto p1 = qcd::estimate_pfa(rule, 0.1, b1);
  const auto p4 = qcd::estimate_pfa(rule, 0.1, b4);
  EXPECT_EQ(p1.estimate, p4.estimate);
}

TEST(Sweep, SyntheticLogThresholdRule) {
  const double c = 0.5;
  auto rule_for = [c](double h) {
    return FixedStop{static_cast<std::uint64_t>(std::ceil(std::log(h) / c - 1e-9))};
  };
  const std::vector<double> grid = {std::exp(1.0), std::exp(3.0), std::exp(6.0)};
  const auto res = qcd::sweep_thresholds(rule_for, grid, {0}, budget(10));
  ASSERT_EQ(res.fits.size(), 1u);
  EXPECT_NEAR(res.fits[0].slope, 1.0 / c, 1e-12);
  EXPECT_EQ(res.fits[0].standard_error, 0.0);
  EXPECT_THROW(qcd::sweep_thresholds(rule_for, {10.0, 100.0}, {0}, budget(10)), qcd::OutOfRange);
}

TEST(Sweep, FitDelaySlope) {
  const auto f = qcd::fit_delay_slope({10.0, 100.0, 1000.0},
                                      {std::log(10.0) * 3 + 1, std::log(100.0) * 3 + 1, std::log(1000.0) * 3 + 1},
                                      {0.1, 0.1, 0.1});
  EXPECT_NEAR(f.slope, 3.0, 1e-12);
  EXPECT_NEAR(f.intercept, 1.0, 1e-12);
  EXPECT_NEAR(f.standard_error, 0.1 * std::sqrt(2.0) / (2.0 * std::log(10.0)), 1e-12);
}

TEST(Sweep, DetectorSweepSharesPaths) {
  auto model = qcd::build_model("ar1-gauss", {{"a0", "0"}, {"a1", "0.5"}});
  const auto res = qcd::sweep_thresholds(qcd::DetectorKind::kShiryaevRoberts, *model, {10.0, 100.0, 1000.0}, {0, 20},
                                         budget(2000, 4));
  ASSERT_EQ(res.rows.size(), 6u);
  EXPECT_NEAR(res.one_over_i, 6.0, 1e-12);
  for (const auto& f : res.fits) {
    EXPECT_GT(f.slope, 0.0);
    EXPECT_LT(f.ci_lo, f.slope);
    EXPECT_GT(f.ci_hi, f.slope);
  }
  for (std::size_t i = 1; i < 3; ++i)
    EXPECT_GT(res.rows[i].delay.positive_part.estimate, res.rows[i - 1].delay.positive_part.estimate);
}

}  // namespace
