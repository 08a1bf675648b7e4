#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "qcd/audit.hpp"
#include "qcd/zoo.hpp"

namespace {

qcd::IncrementSource gaussian_increments(double mean, double sd) {
  return [=](std::uint64_t, std::uint64_t n, qcd::Rng& rng, std::vector<double>& z) {
    z.resize(n);
    for (auto& v : z) v = mean + sd * rng.normal();
  };
}

qcd::AuditConfig small_audit(double kl) {
  qcd::AuditConfig c;
  c.kl = kl;
  c.eps = {0.1, 0.3};
  c.k_grid = {0, 1, 5};
  c.n_max = 200;
  c.reps = 10000;
  c.slope_lo = 10;
  c.slope_hi = 100;
  c.seed = 3;
  return c;
}

TEST(Audit, ConstantIncrementsNeverDeviate) {
  const auto a = qcd::audit_complete_convergence(gaussian_increments(0.3, 0.0), small_audit(0.3));
  for (std::size_t e = 0; e < a.eps.size(); ++e)
    for (std::uint64_t n = 1; n <= a.n_max; ++n) EXPECT_EQ(a.sup_prob(e, n), 0.0);
  EXPECT_TRUE(std::isnan(a.slope[0]));
}

TEST(Audit, GaussianIncrementsMatchTheNormalTail) {
  const double kl = 0.5, sd = 0.8;
  const auto a = qcd::audit_complete_convergence(gaussian_increments(kl, sd), small_audit(kl));
  const double reps = static_cast<double>(a.reps);
  for (std::size_t e = 0; e < a.eps.size(); ++e)
    for (std::uint64_t n : {1u, 2u, 5u, 10u, 20u, 50u, 100u, 200u}) {
      const double oracle = 2.0 * qcd::normal_sf(a.eps[e] * std::sqrt(static_cast<double>(n)) / sd);
      const double se = std::sqrt(oracle * (1.0 - oracle) / reps);
      EXPECT_NEAR(a.prob(e, 0, n), oracle, 3.0 * se + 1e-12) << "eps " << a.eps[e] << " n " << n;
    }
}

TEST(Audit, TableInvariants) {
  auto model = qcd::build_model("ar1-gauss", {{"a0", "0"}, {"a1", "0.5"}});
  const auto a = qcd::audit_complete_convergence(*model, small_audit(1.0 / 6.0));
  for (std::uint64_t n = 1; n <= a.n_max; ++n) {
    for (std::size_t k = 0; k < a.k_grid.size(); ++k) {
      EXPECT_GE(a.prob(0, k, n), a.prob(1, k, n));  // nested events in eps
      EXPECT_LE(a.prob(0, k, n), a.sup_prob(0, n));
      EXPECT_GE(a.prob(0, k, n), 0.0);
      EXPECT_LE(a.prob(0, k, n), 1.0);
    }
    if (n > 1) {
      EXPECT_GE(a.partial_r1[0][n - 1], a.partial_r1[0][n - 2]);
      EXPECT_GE(a.partial_r2[0][n - 1], a.partial_r2[0][n - 2]);
    }
  }
  EXPECT_LT(a.slope[0], 0.0);
}

TEST(Audit, DeterministicAcrossThreadCounts) {
  auto model = qcd::build_model("ar1-gauss", {{"a0", "0"}, {"a1", "0.5"}});
  auto c1 = small_audit(1.0 / 6.0), c3 = c1;
  c1.threads = 1;
  c3.threads = 3;
  const auto a = qcd::audit_complete_convergence(*model, c1);
  const auto b = qcd::audit_complete_convergence(*model, c3);
  EXPECT_EQ(a.p, b.p);
}

TEST(Audit, Errors) {
  auto c = small_audit(0.5);
  c.reps = 9999;
  EXPECT_THROW(qcd::audit_complete_convergence(gaussian_increments(0.5, 1.0), c), qcd::InsufficientBudget);
  c = small_audit(0.0);
  EXPECT_THROW(qcd::audit_complete_convergence(gaussian_increments(0.5, 1.0), c), qcd::OutOfRange);
}

TEST(Audit, LogGrid) {
  const auto g = qcd::log_grid(50, 800);
  EXPECT_EQ(g.front(), 50u);
  EXPECT_EQ(g.back(), 800u);
  EXPECT_EQ(g.size(), 17u);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_GT(g[i], g[i - 1]);
}

TEST(Drift, Ar1RatioMatchesClosedForm) {
  qcd::Ar1Model m(0.0, 0.5, qcd::Innovation::gaussian());
  const auto d = qcd::check_drift(m, qcd::DriftSpec{});
  EXPECT_EQ(d.q_star, 1.0);
  for (std::size_t i = 0; i < d.grid.size(); ++i) {
    const double x = d.grid[i];
    EXPECT_NEAR(d.ratio[i], (2.0 + 0.25 * x * x) / (1.0 + x * x), 1e-12);
  }
  EXPECT_NEAR(d.large_x_ratio, 0.25, 1e-3);
  EXPECT_TRUE(d.pass);
  EXPECT_GT(d.rho, 0.0);
  for (std::size_t i = 0; i < d.grid.size(); ++i) {
    const double v = 1.0 + d.grid[i] * d.grid[i];
    EXPECT_LE(d.ratio[i] * v, (1.0 - d.rho) * v + (d.in_c[i] ? d.d : 0.0) + 1e-9);
  }
}

TEST(Drift, QStarForAr1) {
  qcd::Ar1Model m(0.9, -0.8, qcd::Innovation::gaussian());
  const auto d = qcd::check_drift(m, qcd::DriftSpec{});
  EXPECT_NEAR(d.q_star, (std::abs(0.64 - 0.81) + 1.7 * 1.7 + 1.0) / 2.0, 1e-15);
}

TEST(Drift, WhiteNoiseHasConstantExpectation) {
  qcd::Ar1Model m(0.0, 0.0, qcd::Innovation::gaussian());
  const auto d = qcd::check_drift(m, qcd::DriftSpec{});
  for (std::size_t i = 0; i < d.grid.size(); ++i)
    EXPECT_NEAR(d.ratio[i] * (1.0 + d.grid[i] * d.grid[i]), 2.0, 1e-12);
  EXPECT_LE(d.d, 2.0 * d.q_star);
}

TEST(Drift, SmallSetTooSmallHasNoValidRho) {
  qcd::Ar1Model m(0.0, 0.5, qcd::Innovation::gaussian());
  qcd::DriftSpec spec;
  spec.c_half_width = 1.0;
  // (2 + x^2 / 4) / (1 + x^2) >= 1 for |x| <= 2 / sqrt(3)
  for (int i = -500; i <= 500; ++i) spec.grid.push_back(0.01 * i);
  EXPECT_THROW(qcd::check_drift(m, spec), qcd::NoValidRho);
}

TEST(Drift, ArchLimitIsKappaCheck) {
  qcd::ArArchModel m(0.0, 0.5, 0.5, qcd::Innovation::gaussian());
  qcd::DriftSpec spec;
  spec.iota = 1.0;
  spec.large_x = 1e7;
  spec.c_half_width = 5.0;
  const auto d = qcd::check_drift(m, spec);
  const double mu = 0.5, sigma = 0.5;
  const double oracle = sigma * std::sqrt(2.0 / std::numbers::pi) * std::exp(-mu * mu / (2 * sigma * sigma)) +
                        mu * (1.0 - 2.0 * qcd::normal_cdf(-mu / sigma));
  EXPECT_NEAR(d.large_x_ratio, oracle, 1e-6);
  EXPECT_TRUE(d.pass);
}

TEST(Drift, StudentTAr1) {
  qcd::Ar1Model m(0.0, 0.5, qcd::Innovation::student_t(6.0));
  const auto d = qcd::check_drift(m, qcd::DriftSpec{});
  EXPECT_NEAR(d.large_x_ratio, 0.25, 1e-3);
  EXPECT_TRUE(d.pass);
}

TEST(Drift, QuadraticFormForVectorModels) {
  auto lai = qcd::build_model("lai-2d",
                              {{"lambda1", "0.9"}, {"lambda2", "0.3"}, {"sigma1", "0.2"}, {"sigma2", "0.5"}, {"rho", "2"}});
  qcd::DriftSpec spec;
  spec.k_star = 50.0;
  const auto d = qcd::check_drift(*lai, spec);
  EXPECT_TRUE(d.pass);
  EXPECT_LT(d.large_x_ratio, 1.0);
  auto arp = qcd::build_model("arp-gauss", {{"a0", "0.5,0.2"}, {"a1", "0.3,-0.2"}});
  EXPECT_TRUE(qcd::check_drift(*arp, spec).pass);
}

TEST(Minorization, Ar1Square) {
  qcd::Ar1Model m(0.0, 0.5, qcd::Innovation::gaussian());
  const auto r = qcd::check_minorization(m, 1.0);
  EXPECT_NEAR(r.f_star, qcd::normal_pdf(1.5), 1e-6);
  EXPECT_NEAR(r.f_star, 0.12952, 1e-5);
  EXPECT_EQ(std::abs(r.x_at_min), 1.0);
  EXPECT_EQ(r.y_at_min, -r.x_at_min);
  EXPECT_TRUE(r.pass);
  EXPECT_GT(r.slack, 0.0);
}

TEST(Minorization, SinglePoint) {
  qcd::Ar1Model m(0.0, 0.5, qcd::Innovation::gaussian());
  const auto r = qcd::check_minorization(m, 0.0);
  EXPECT_NEAR(r.f_star, 1.0 / std::sqrt(2.0 * std::numbers::pi), 1e-15);
  EXPECT_TRUE(r.pass);
}

TEST(Minorization, HeavyTailPasses) {
  qcd::Ar1Model m(0.0, 0.9, qcd::Innovation::student_t(5.0));
  for (double c : {1.0, 3.0, 6.0}) EXPECT_TRUE(qcd::check_minorization(m, c, 401).pass);
}

TEST(Minorization, VectorModelsHaveNoScalarDensity) {
  auto v = qcd::build_model("var-rc", {{"p", "1"}, {"a0", "0"}, {"a1", "0.5"}, {"q0", "1"}, {"q1", "0.1"}});
  EXPECT_THROW(qcd::check_minorization(*v, 1.0), qcd::NoDensity);
}

std::shared_ptr<qcd::ChangePointModel> demo_model() {
  return qcd::build_model("lai-2d",
                          {{"lambda1", "0.95"}, {"lambda2", "0.2"}, {"sigma1", "0.05"}, {"sigma2", "0.7"}, {"rho", "3"}});
}

double demo_kl(const qcd::ChangePointModel& m) {
  qcd::ErgodicMcOptions o;
  o.horizon = 200000;
  o.seed = 4;
  return qcd::kl_ergodic_mc(m, o).value;
}

TEST(DemoLai, ZeroThresholdIsRarelyMissed) {
  const auto m = demo_model();
  qcd::LaiDemoConfig c;
  c.kl = demo_kl(*m);
  c.eps = c.kl;
  c.n = 20;
  c.reps = 5000;
  c.x2_grid = {0.0, 1.0};
  const auto r = qcd::demo_lai_failure(*m, c);
  for (const auto& row : r.rows) EXPECT_LT(row.probability, 0.02) << row.x2;
  EXPECT_EQ(r.threshold, 0.0);
}

TEST(DemoLai, ShortfallFromOriginMatchesAuditAtKZero) {
  const auto m = demo_model();
  const double kl = demo_kl(*m);
  qcd::LaiDemoConfig c;
  c.kl = kl;
  c.eps = 0.5;
  c.n = 200;
  c.reps = 10000;
  c.x2_grid = {0.0};
  const auto d = qcd::demo_lai_failure(*m, c);
  qcd::AuditConfig a;
  a.kl = kl;
  a.eps = {0.5};
  a.k_grid = {0};
  a.n_max = 200;
  a.reps = 10000;
  a.slope_lo = 10;
  a.slope_hi = 100;
  const auto audit = qcd::audit_complete_convergence(*m, a);
  // the shortfall is one side of the two-sided exceedance
  const double se = std::hypot(d.rows[0].standard_error, std::sqrt(0.25 / 10000.0));
  EXPECT_LE(d.rows[0].probability, audit.prob(0, 0, 200) + 3.0 * se);
  EXPECT_LT(d.rows[0].probability, 0.1);
}

TEST(DemoLai, ShortfallGrowsWithTheSecondCoordinate) {
  const auto m = demo_model();
  qcd::LaiDemoConfig c;
  c.kl = demo_kl(*m);
  c.n = 20;
  c.reps = 20000;
  c.x2_grid = {10.0, 100.0, 1000.0};
  const auto r = qcd::demo_lai_failure(*m, c);
  EXPECT_TRUE(r.nondecreasing);
  EXPECT_TRUE(r.above_floor);
}

TEST(DemoLai, Errors) {
  const auto m = demo_model();
  qcd::LaiDemoConfig c;
  c.kl = 1.0;
  c.reps = 999;
  EXPECT_THROW(qcd::demo_lai_failure(*m, c), qcd::InsufficientBudget);
  auto scalar = qcd::build_model("ar1-gauss", {{"a0", "0"}, {"a1", "0.5"}});
  c.reps = 1000;
  EXPECT_THROW(qcd::demo_lai_failure(*scalar, c), qcd::DimensionMismatch);
}

}  // namespace
