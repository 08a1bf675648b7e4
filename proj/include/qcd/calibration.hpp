#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "qcd/detectors.hpp"
#include "qcd/errors.hpp"
#include "qcd/risk.hpp"

namespace qcd {

/// SR/Shiryaev threshold h = (1 - alpha) / (rho alpha) for a weighted
/// false-alarm level alpha under a geometric(rho) prior.
inline double bayes_threshold(double alpha, double rho) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw OutOfRange("alpha must lie in (0,1)");
  if (!(rho > 0.0 && rho < 1.0)) throw OutOfRange("rho must lie in (0,1)");
  return (1.0 - alpha) / (rho * alpha);
}

struct CalibrationSheet {
  double beta = 0.0;
  std::uint64_t m_star = 0;
  std::uint64_t k_star = 0;
  double rho1 = 0.0;
  double rho2 = 0.0;
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  double alpha3 = 0.0;
  double h_beta = 0.0;       // threshold for the local class, from (alpha2, rho2)
  double h_star_beta = 0.0;  // threshold for the conditional class, from (alpha3, rho2)
  double m_star_lower_bound = 0.0;
};

/// Window length 1 + floor((1 + |log beta|)^2).
inline std::uint64_t default_window(double beta) {
  const double l = 1.0 + std::abs(std::log(beta));
  return 1 + static_cast<std::uint64_t>(std::floor(l * l));
}

/// Derived prior rates, bridged false-alarm levels and class thresholds for a
/// target local false-alarm level beta. Logs are natural.
inline CalibrationSheet calibrate_for_beta(double beta, std::optional<std::uint64_t> m_star = std::nullopt,
                                           std::optional<std::uint64_t> k_star = std::nullopt) {
  if (!(beta > 0.0 && beta < 1.0)) throw OutOfRange("beta must lie in (0,1)");
  CalibrationSheet s;
  s.beta = beta;
  const double log_beta = std::abs(std::log(beta));
  s.rho1 = 1.0 / (1.0 + log_beta);
  s.rho2 = s.rho1 / (1.0 + std::abs(std::log(log_beta)));
  s.m_star = m_star.value_or(default_window(beta));
  s.k_star = k_star.value_or(2 * s.m_star);
  s.m_star_lower_bound = std::abs(std::log1p(-beta)) / std::abs(std::log1p(-s.rho1)) - 1.0;
  // The bound stays below 1 on (0,1), so in practice this rejects m* = 0.
  if (s.m_star < 1 || static_cast<double>(s.m_star) < s.m_star_lower_bound)
    throw WindowTooSmall("m* = " + std::to_string(s.m_star) + " is below the lower bound " +
                         std::to_string(s.m_star_lower_bound));
  if (s.k_star <= s.m_star) throw OutOfRange("k* must exceed m*");

  s.alpha1 = beta + std::pow(1.0 - s.rho1, static_cast<double>(s.m_star + 1));
  s.alpha2 = beta * std::pow(1.0 - s.rho2, static_cast<double>(s.k_star));
  s.alpha3 = s.alpha2 / (1.0 + beta);
  s.h_beta = (1.0 - s.alpha2) / (s.rho2 * s.alpha2);
  s.h_star_beta = (1.0 - s.alpha3) / (s.rho2 * s.alpha3);
  return s;
}

enum class LocalClass { kLocal, kConditional };

inline std::string to_string(LocalClass c) { return c == LocalClass::kLocal ? "H" : "H*"; }

struct InclusionReport {
  LocalClass target = LocalClass::kLocal;
  RiskReport estimate;  // LPFA or LCPFA, matching `target`
  bool member = false;  // estimate + 3 SE <= beta
};

/// Empirical membership of a stopping rule in the local class H(beta, k*, m*)
/// or the conditional class H*(beta, k*, m*).
template <StoppingRule Rule>
InclusionReport check_inclusions(const CalibrationSheet& sheet, const Rule& rule, LocalClass target,
                                 const McBudget& budget) {
  const auto lp = estimate_lpfa(rule, sheet.k_star, sheet.m_star, budget, target == LocalClass::kConditional);
  InclusionReport r;
  r.target = target;
  r.estimate = target == LocalClass::kLocal ? lp.lpfa : lp.lcpfa;
  const double band = 3.0 * r.estimate.standard_error;
  if (band >= sheet.beta)
    throw InsufficientBudget("3 SE = " + std::to_string(band) + " cannot resolve beta = " + std::to_string(sheet.beta));
  r.member = r.estimate.estimate + band <= sheet.beta;
  return r;
}

/// SR at h_beta (local class) or h*_beta (conditional class) on a model.
inline InclusionReport check_inclusions(const CalibrationSheet& sheet, const ChangePointModel& model,
                                        LocalClass target, const McBudget& budget) {
  const double h = target == LocalClass::kLocal ? sheet.h_beta : sheet.h_star_beta;
  return check_inclusions(sheet, DetectorRule{&model, DetectorConfig::shiryaev_roberts(h)}, target, budget);
}

}  // namespace qcd
