#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qcd/detectors.hpp"
#include "qcd/errors.hpp"
#include "qcd/parallel.hpp"
#include "qcd/rng.hpp"
#include "qcd/zoo.hpp"

namespace qcd {

/// Anything that produces a (possibly censored) stopping time for a path with
/// change point nu, looking at most `horizon` observations ahead.
template <class R>
concept StoppingRule = requires(const R& rule, std::uint64_t nu, std::uint64_t horizon, Rng& rng) {
  { rule(nu, horizon, rng) } -> std::same_as<StopOutcome>;
};

enum class Functional { kPfa, kLpfa, kLcpfa, kDelay, kConditionalDelay };

inline std::string to_string(Functional f) {
  switch (f) {
    case Functional::kPfa: return "PFA";
    case Functional::kLpfa: return "LPFA";
    case Functional::kLcpfa: return "LCPFA";
    case Functional::kDelay: return "Rnu";
    case Functional::kConditionalDelay: return "RnuStar";
  }
  return "?";
}

struct RiskReport {
  Functional functional = Functional::kPfa;
  double estimate = 0.0;
  double standard_error = 0.0;
  std::size_t replicates = 0;
  double censored_fraction = 0.0;

  // parameters; which ones are meaningful depends on the functional
  std::uint64_t nu = 0;
  std::uint64_t window_start = 0;  // argmax window for LPFA/LCPFA
  std::uint64_t window_length = 0;
  double rho = 0.0;
  int moment = 1;
  double truncation_bound = 0.0;  // PFA: bound on the dropped geometric tail

  /// Functional id as written to reports, e.g. "MomentR(2)" for r = 2 delays.
  std::string id() const {
    if (moment != 1 && (functional == Functional::kDelay || functional == Functional::kConditionalDelay))
      return (functional == Functional::kDelay ? "MomentR(" : "MomentRStar(") + std::to_string(moment) + ")";
    return to_string(functional);
  }
};

struct McBudget {
  std::size_t reps = 10000;
  std::uint64_t horizon = 100000;  // N_max for delay runs
  double censor_cap = 0.001;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

/// One stopping time per replicate; replicate i always uses stream i, so
/// different nu (or thresholds) see common random numbers.
template <StoppingRule Rule>
std::vector<StopOutcome> simulate_stops(const Rule& rule, std::uint64_t nu, std::uint64_t horizon,
                                        const McBudget& budget) {
  std::vector<StopOutcome> out(budget.reps);
  parallel_for(budget.reps, budget.threads, [&](std::size_t i) {
    Rng rng = make_stream(budget.seed, i, StreamTag::kReplicate);
    out[i] = rule(nu, horizon, rng);
  });
  return out;
}

namespace detail {
struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& v) {
  MeanSe r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() < 2) return r;
  double ss = 0.0;
  for (double x : v) ss += (x - r.mean) * (x - r.mean);
  const double n = static_cast<double>(v.size());
  r.se = std::sqrt(ss / (n - 1.0) / n);
  return r;
}

inline void require_reps(const McBudget& b) {
  if (b.reps < 2) throw InsufficientBudget("need at least 2 replicates");
}
}  // namespace detail

/// Truncation point K = ceil(log(1e-6) / log(1 - rho)) of the geometric prior.
inline std::uint64_t pfa_truncation(double rho) {
  return static_cast<std::uint64_t>(std::ceil(std::log(1e-6) / std::log1p(-rho)));
}

/// Weighted false-alarm probability sum_{k>=1} rho (1-rho)^k P_inf(tau <= k).
///
/// Each replicate contributes sum_{k=tau}^{K} rho (1-rho)^k
/// = (1-rho)^tau - (1-rho)^{K+1}, so the standard error comes straight from
/// replicate-level values. The neglected tail is reported in truncation_bound.
template <StoppingRule Rule>
RiskReport estimate_pfa(const Rule& rule, double rho, const McBudget& budget) {
  if (!(rho > 0.0 && rho < 1.0)) throw OutOfRange("PFA prior rate rho must lie in (0,1)");
  detail::require_reps(budget);
  const std::uint64_t k_max = pfa_truncation(rho);
  const double tail = std::pow(1.0 - rho, static_cast<double>(k_max + 1));
  const auto stops = simulate_stops(rule, kNoChange, k_max, budget);
  std::vector<double> values(stops.size(), 0.0);
  std::size_t censored = 0;
  for (std::size_t i = 0; i < stops.size(); ++i) {
    if (stops[i].censored) {
      ++censored;
      continue;
    }
    values[i] = std::pow(1.0 - rho, static_cast<double>(stops[i].tau)) - tail;
  }
  const auto ms = detail::mean_se(values);
  RiskReport r;
  r.functional = Functional::kPfa;
  r.estimate = ms.mean;
  r.standard_error = ms.se;
  r.replicates = stops.size();
  // Censoring at K is part of the estimator, not a loss of information.
  r.censored_fraction = 0.0;
  r.rho = rho;
  r.nu = kNoChange;
  r.truncation_bound = tail;
  (void)censored;
  return r;
}

struct LocalFalseAlarmReport {
  RiskReport lpfa;   // sup_k P_inf(k <= tau < k + m*)
  RiskReport lcpfa;  // sup_k P_inf(tau < k + m* | tau > k)
  std::vector<double> window_probabilities;
  std::vector<double> conditional_window_probabilities;
  bool conditional_degenerate = false;
};

/// Local (conditional) false-alarm probabilities over windows
/// k = 1, ..., k* - m*, scored on one P_inf path per replicate.
///
/// Throws DegenerateConditioning when some P_inf(tau > k) estimate falls
/// below 0.01 and `require_conditional` is set; otherwise the conditional
/// part is flagged and left at zero.
template <StoppingRule Rule>
LocalFalseAlarmReport estimate_lpfa(const Rule& rule, std::uint64_t k_star, std::uint64_t m_star,
                                    const McBudget& budget, bool require_conditional = true) {
  if (!(m_star >= 1 && k_star > m_star)) throw OutOfRange("need k* > m* >= 1");
  detail::require_reps(budget);
  const std::uint64_t windows = k_star - m_star;
  const auto stops = simulate_stops(rule, kNoChange, k_star, budget);

  std::vector<std::uint64_t> in_window(windows + 1, 0), in_open_window(windows + 1, 0), alive(windows + 1, 0);
  for (const auto& s : stops) {
    for (std::uint64_t k = 1; k <= windows; ++k) {
      const bool after_k = s.censored || s.tau > k;
      if (after_k) ++alive[k];
      if (s.censored) continue;
      if (s.tau >= k && s.tau < k + m_star) ++in_window[k];
      if (s.tau > k && s.tau < k + m_star) ++in_open_window[k];
    }
  }

  const double n = static_cast<double>(stops.size());
  LocalFalseAlarmReport out;
  out.window_probabilities.resize(windows);
  out.conditional_window_probabilities.resize(windows);
  std::uint64_t best = 1, best_cond = 1;
  for (std::uint64_t k = 1; k <= windows; ++k) {
    const double p = static_cast<double>(in_window[k]) / n;
    out.window_probabilities[k - 1] = p;
    if (p > out.window_probabilities[best - 1]) best = k;
    const double alive_frac = static_cast<double>(alive[k]) / n;
    if (alive_frac < 0.01) {
      out.conditional_degenerate = true;
      out.conditional_window_probabilities[k - 1] = 0.0;
      continue;
    }
    const double q = static_cast<double>(in_open_window[k]) / static_cast<double>(alive[k]);
    out.conditional_window_probabilities[k - 1] = q;
    if (q > out.conditional_window_probabilities[best_cond - 1]) best_cond = k;
  }
  if (out.conditional_degenerate && require_conditional)
    throw DegenerateConditioning("P_inf(tau > k) < 0.01 for some window start k");

  auto& l = out.lpfa;
  l.functional = Functional::kLpfa;
  l.estimate = out.window_probabilities[best - 1];
  l.standard_error = std::sqrt(l.estimate * (1.0 - l.estimate) / n);
  l.replicates = stops.size();
  l.window_start = best;
  l.window_length = m_star;
  l.nu = kNoChange;

  auto& c = out.lcpfa;
  c.functional = Functional::kLcpfa;
  c.estimate = out.conditional_window_probabilities[best_cond - 1];
  const double alive_best = std::max<double>(1.0, static_cast<double>(alive[best_cond]));
  c.standard_error = std::sqrt(c.estimate * (1.0 - c.estimate) / alive_best);
  c.replicates = stops.size();
  c.window_start = best_cond;
  c.window_length = m_star;
  c.nu = kNoChange;
  return out;
}

struct DelayReport {
  RiskReport positive_part;               // E_nu[((tau - nu)^+)^r]
  std::optional<RiskReport> conditional;  // E_nu[(tau - nu)^r | tau > nu]
  double prob_no_false_alarm = 0.0;       // estimate of P_inf(tau > nu)
};

struct DelayOptions {
  int moment = 1;
  bool require_conditional = true;
};

/// Positive-part and conditional delay risks at change point nu, computed from
/// the same replicates: R* = R / P(tau > nu) exactly.
inline DelayReport aggregate_delays(const std::vector<StopOutcome>& stops, std::uint64_t nu,
                                    const McBudget& budget, const DelayOptions& opt) {
  const double n = static_cast<double>(stops.size());
  std::vector<double> contribution(stops.size(), 0.0), no_alarm(stops.size(), 0.0);
  std::size_t censored = 0;
  for (std::size_t i = 0; i < stops.size(); ++i) {
    const auto& s = stops[i];
    if (s.censored) ++censored;
    if (s.tau <= nu && !s.censored) continue;
    no_alarm[i] = 1.0;
    contribution[i] = std::pow(static_cast<double>(s.tau - nu), opt.moment);
  }
  const double censored_fraction = static_cast<double>(censored) / n;
  if (censored_fraction > budget.censor_cap)
    throw ExcessCensoring("censored fraction " + std::to_string(censored_fraction) + " exceeds cap " +
                          std::to_string(budget.censor_cap) + " at N_max = " + std::to_string(budget.horizon));

  const auto d = detail::mean_se(contribution);
  const auto a = detail::mean_se(no_alarm);

  DelayReport out;
  out.prob_no_false_alarm = a.mean;
  auto& r = out.positive_part;
  r.functional = Functional::kDelay;
  r.estimate = d.mean;
  r.standard_error = d.se;
  r.replicates = stops.size();
  r.censored_fraction = censored_fraction;
  r.nu = nu;
  r.moment = opt.moment;

  if (a.mean < 0.01) {
    if (opt.require_conditional)
      throw DegenerateConditioning("P_inf(tau > nu) estimate " + std::to_string(a.mean) + " < 0.01 at nu = " +
                                   std::to_string(nu));
    return out;
  }
  RiskReport c = r;
  c.functional = Functional::kConditionalDelay;
  c.estimate = d.mean / a.mean;
  // delta method for a ratio of replicate means
  double ss = 0.0;
  for (std::size_t i = 0; i < stops.size(); ++i) {
    const double e = contribution[i] - c.estimate * no_alarm[i];
    ss += e * e;
  }
  c.standard_error = stops.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) / a.mean : 0.0;
  out.conditional = c;
  return out;
}

template <StoppingRule Rule>
DelayReport estimate_delay(const Rule& rule, std::uint64_t nu, const McBudget& budget, const DelayOptions& opt = {}) {
  if (opt.moment < 1) throw OutOfRange("delay moment order r must be >= 1");
  if (budget.horizon <= nu) throw OutOfRange("N_max must exceed nu");
  detail::require_reps(budget);
  return aggregate_delays(simulate_stops(rule, nu, budget.horizon, budget), nu, budget, opt);
}

/// Largest R_nu over a finite grid of change points; a lower bound on sup_nu.
template <StoppingRule Rule>
RiskReport estimate_max_delay(const Rule& rule, const std::vector<std::uint64_t>& nus, const McBudget& budget,
                              bool conditional = false) {
  if (nus.empty()) throw OutOfRange("empty nu grid");
  std::optional<RiskReport> best;
  for (auto nu : nus) {
    DelayOptions opt;
    opt.require_conditional = conditional;
    auto rep = estimate_delay(rule, nu, budget, opt);
    const RiskReport& r = conditional ? *rep.conditional : rep.positive_part;
    if (!best || r.estimate > best->estimate) best = r;
  }
  return *best;
}

struct SlopeFit {
  double slope = 0.0;
  double standard_error = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double intercept = 0.0;
};

struct SweepRow {
  double h = 0.0;
  std::uint64_t nu = 0;
  DelayReport delay;
  double ratio_to_first_order = 0.0;  // delay / (log h / I), when I is known
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<std::uint64_t> nus;
  std::vector<SlopeFit> fits;  // one per nu
  double one_over_i = 0.0;     // 0 when I is unknown
};

namespace detail {
/// OLS weights w_i with slope = sum_i w_i y_i.
inline std::vector<double> ols_weights(const std::vector<double>& x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double sxx = 0.0;
  for (double v : x) sxx += (v - mean) * (v - mean);
  std::vector<double> w(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) w[i] = (x[i] - mean) / sxx;
  return w;
}

inline void validate_grid(const std::vector<double>& h_grid) {
  if (h_grid.size() < 2) throw OutOfRange("threshold grid needs at least 2 points");
  const auto [lo, hi] = std::minmax_element(h_grid.begin(), h_grid.end());
  if (!(*lo > 1.0) || !(*hi / *lo >= 100.0 * (1.0 - 1e-12)))
    throw OutOfRange("threshold grid must be > 1 and span at least 2 decades");
}
}  // namespace detail

/// OLS of delay on log h given independent per-point standard errors.
inline SlopeFit fit_delay_slope(const std::vector<double>& h_grid, const std::vector<double>& delays,
                                const std::vector<double>& ses) {
  std::vector<double> x(h_grid.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::log(h_grid[i]);
  const auto w = detail::ols_weights(x);
  SlopeFit f;
  double var = 0.0, xm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    f.slope += w[i] * delays[i];
    var += w[i] * w[i] * ses[i] * ses[i];
    xm += x[i];
    ym += delays[i];
  }
  xm /= static_cast<double>(x.size());
  ym /= static_cast<double>(x.size());
  f.intercept = ym - f.slope * xm;
  f.standard_error = std::sqrt(var);
  f.ci_lo = f.slope - 1.96 * f.standard_error;
  f.ci_hi = f.slope + 1.96 * f.standard_error;
  return f;
}

/// Threshold sweep for a generic rule family; thresholds are simulated
/// independently of each other.
template <class RuleFactory>
SweepResult sweep_thresholds(RuleFactory&& rule_for, const std::vector<double>& h_grid,
                             const std::vector<std::uint64_t>& nus, const McBudget& budget, double kl = 0.0) {
  detail::validate_grid(h_grid);
  SweepResult out;
  out.nus = nus;
  out.one_over_i = kl > 0.0 ? 1.0 / kl : 0.0;
  for (auto nu : nus) {
    std::vector<double> d, se;
    for (double h : h_grid) {
      const auto rule = rule_for(h);
      SweepRow row{h, nu, estimate_delay(rule, nu, budget, DelayOptions{1, false}), 0.0};
      if (kl > 0.0) row.ratio_to_first_order = row.delay.positive_part.estimate / (std::log(h) / kl);
      d.push_back(row.delay.positive_part.estimate);
      se.push_back(row.delay.positive_part.standard_error);
      out.rows.push_back(std::move(row));
    }
    out.fits.push_back(fit_delay_slope(h_grid, d, se));
  }
  return out;
}

/// Threshold sweep of one detector kind on a model. All thresholds run on the
/// same path in each replicate, and the slope standard error is computed from
/// replicate-level slopes, which accounts for the shared randomness.
/// CUSUM uses a = log h so every kind is indexed by the same log h.
inline SweepResult sweep_thresholds(DetectorKind kind, const ChangePointModel& model, const std::vector<double>& h_grid,
                                    const std::vector<std::uint64_t>& nus, const McBudget& budget, double rho = 0.0) {
  detail::validate_grid(h_grid);
  detail::require_reps(budget);
  std::vector<DetectorConfig> configs;
  for (double h : h_grid) {
    switch (kind) {
      case DetectorKind::kShiryaevRoberts: configs.push_back(DetectorConfig::shiryaev_roberts(h)); break;
      case DetectorKind::kCusum: configs.push_back(DetectorConfig::cusum(std::log(h))); break;
      case DetectorKind::kShiryaev: configs.push_back(DetectorConfig::shiryaev(rho, h)); break;
    }
  }
  std::optional<double> kl;
  if (model.degenerate())
    kl = 0.0;
  else
    kl = model.kl_closed_form();

  std::vector<double> x(h_grid.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::log(h_grid[i]);
  const auto w = detail::ols_weights(x);

  SweepResult out;
  out.nus = nus;
  out.one_over_i = kl && *kl > 0.0 ? 1.0 / *kl : 0.0;
  for (auto nu : nus) {
    if (budget.horizon <= nu) throw OutOfRange("N_max must exceed nu");
    std::vector<std::vector<StopOutcome>> per_rep(budget.reps);
    parallel_for(budget.reps, budget.threads, [&](std::size_t i) {
      Rng rng = make_stream(budget.seed, i, StreamTag::kReplicate);
      per_rep[i] = run_detectors_to_stop(configs, model, nu, budget.horizon, rng);
    });

    std::vector<double> rep_slopes(budget.reps, 0.0);
    std::vector<double> delays;
    for (std::size_t j = 0; j < h_grid.size(); ++j) {
      std::vector<StopOutcome> stops(budget.reps);
      for (std::size_t i = 0; i < budget.reps; ++i) {
        stops[i] = per_rep[i][j];
        const double d = stops[i].tau > nu || stops[i].censored ? static_cast<double>(stops[i].tau - nu) : 0.0;
        rep_slopes[i] += w[j] * d;
      }
      SweepRow row{h_grid[j], nu, aggregate_delays(stops, nu, budget, DelayOptions{1, false}), 0.0};
      if (out.one_over_i > 0.0) row.ratio_to_first_order = row.delay.positive_part.estimate / (x[j] * out.one_over_i);
      delays.push_back(row.delay.positive_part.estimate);
      out.rows.push_back(std::move(row));
    }
    SlopeFit f;
    const auto ms = detail::mean_se(rep_slopes);
    f.slope = ms.mean;
    f.standard_error = ms.se;
    f.ci_lo = f.slope - 1.96 * f.standard_error;
    f.ci_hi = f.slope + 1.96 * f.standard_error;
    double xm = 0.0, ym = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      xm += x[j];
      ym += delays[j];
    }
    f.intercept = (ym - f.slope * xm) / static_cast<double>(x.size());
    out.fits.push_back(f);
  }
  return out;
}

}  // namespace qcd
