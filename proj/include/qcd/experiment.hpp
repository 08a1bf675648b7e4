#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "qcd/audit.hpp"
#include "qcd/calibration.hpp"
#include "qcd/config.hpp"
#include "qcd/csv.hpp"
#include "qcd/detectors.hpp"
#include "qcd/errors.hpp"
#include "qcd/risk.hpp"
#include "qcd/zoo.hpp"

namespace qcd {

inline constexpr const char* kVersion = "1.0.0";

struct RunOutcome {
  int exit_code = 0;  // 0 ok, 2 a checked claim was not met
  std::vector<std::filesystem::path> files;
  std::vector<std::string> notes;
};

/// Detector from the config: an explicit threshold wins, then beta (h_beta, or
/// h*_beta when only the conditional class is targeted), then (alpha, rho).
/// CUSUM thresholds derived from h use a = log h.
inline DetectorConfig resolve_detector(const ExperimentConfig& cfg) {
  const auto& d = cfg.detector;
  std::optional<double> h;
  double rho = d.rho.value_or(0.0);
  if (d.threshold) {
    if (d.kind == DetectorKind::kCusum) return DetectorConfig::cusum(*d.threshold);
    h = d.threshold;
  } else if (cfg.sheet) {
    const bool conditional_only = d.classes.size() == 1 && d.classes.front() == LocalClass::kConditional;
    h = conditional_only ? cfg.sheet->h_star_beta : cfg.sheet->h_beta;
    if (!d.rho) rho = cfg.sheet->rho2;
  } else if (d.alpha && d.rho) {
    h = bayes_threshold(*d.alpha, *d.rho);
  } else {
    throw OutOfRange("detector needs detector.threshold, detector.beta, or detector.alpha with detector.rho");
  }
  switch (d.kind) {
    case DetectorKind::kShiryaevRoberts: return DetectorConfig::shiryaev_roberts(*h);
    case DetectorKind::kCusum: return DetectorConfig::cusum(std::log(*h));
    case DetectorKind::kShiryaev: return DetectorConfig::shiryaev(rho, *h);
  }
  return DetectorConfig::shiryaev_roberts(*h);
}

/// I from the config, else the model's closed form, else ergodic Monte Carlo.
inline double resolve_kl(const ExperimentConfig& cfg, const ChangePointModel& model, RunOutcome& outcome) {
  if (cfg.kl) return *cfg.kl;
  if (model.degenerate()) return 0.0;
  if (auto i = model.kl_closed_form()) return *i;
  ErgodicMcOptions opt = cfg.kl_mc;
  opt.seed = cfg.mc.seed;
  opt.threads = cfg.mc.threads;
  const auto est = kl_ergodic_mc(model, opt);
  outcome.notes.push_back("I estimated by ergodic Monte Carlo: " + format_double(est.value) + " (se " +
                          format_double(est.standard_error) + ")");
  return est.value;
}

namespace detail {

inline std::string nu_text(std::uint64_t nu) { return nu == kNoChange ? "inf" : std::to_string(nu); }

inline void write_manifest(const ExperimentConfig& cfg, const std::filesystem::path& dir, RunOutcome& outcome) {
  const auto path = dir / "manifest.txt";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "tool = qcd\n";
  out << "version = " << kVersion << "\n";
  out << "experiment = " << to_string(cfg.kind) << "\n";
  out << "seed = " << cfg.mc.seed << "\n";
  out << "[config]\n";
  for (const auto& [key, value] : cfg.entries) {
    if (key == "run.seed" || key == "run.threads" || key == "run.out") continue;
    out << key << " = " << value << "\n";
  }
  outcome.files.push_back(path);
}

inline void write_risk_row(CsvWriter& csv, const RiskReport& r) {
  csv.row(r.id(), nu_text(r.nu), r.estimate, r.standard_error, r.replicates, r.censored_fraction, r.window_start,
          r.window_length, r.rho, r.moment, r.truncation_bound);
}

inline std::vector<std::string> risk_header() {
  return {"functional", "nu", "estimate", "se", "reps", "censored", "window_start", "window_length",
          "rho", "moment", "truncation_bound"};
}

inline void run_calibrate(const ExperimentConfig& cfg, const std::filesystem::path& dir, RunOutcome& outcome) {
  const auto& s = *cfg.sheet;
  {
    CsvWriter csv(dir / "calibration.csv", {"field", "value"});
    csv.row("beta", s.beta);
    csv.row("m_star", s.m_star);
    csv.row("k_star", s.k_star);
    csv.row("m_star_lower_bound", s.m_star_lower_bound);
    csv.row("rho1", s.rho1);
    csv.row("rho2", s.rho2);
    csv.row("alpha1", s.alpha1);
    csv.row("alpha2", s.alpha2);
    csv.row("alpha3", s.alpha3);
    csv.row("h_beta", s.h_beta);
    csv.row("h_star_beta", s.h_star_beta);
    if (cfg.detector.alpha && cfg.detector.rho) csv.row("h", bayes_threshold(*cfg.detector.alpha, *cfg.detector.rho));
    outcome.files.push_back(csv.path());
  }
  if (!cfg.calibrate_check) return;
  const auto model = build_model(*cfg.model);
  CsvWriter csv(dir / "membership.csv",
                {"class", "functional", "threshold", "estimate", "se", "reps", "window_start", "window_length", "beta",
                 "member"});
  for (auto c : cfg.detector.classes) {
    const auto r = check_inclusions(s, *model, c, cfg.mc);
    csv.row(to_string(c), r.estimate.id(), c == LocalClass::kLocal ? s.h_beta : s.h_star_beta, r.estimate.estimate,
            r.estimate.standard_error, r.estimate.replicates, r.estimate.window_start, r.estimate.window_length, s.beta,
            r.member);
    if (!r.member) outcome.exit_code = 2;
  }
  outcome.files.push_back(csv.path());
}

inline void run_risk(const ExperimentConfig& cfg, const std::filesystem::path& dir, RunOutcome& outcome) {
  const auto model = build_model(*cfg.model);
  const DetectorRule rule{model.get(), resolve_detector(cfg)};
  CsvWriter csv(dir / "risk.csv", risk_header());
  for (const auto& f : cfg.risk_functionals) {
    if (f == "pfa") {
      std::optional<double> rho = cfg.pfa_rho ? cfg.pfa_rho : cfg.detector.rho;
      if (!rho && cfg.sheet) rho = cfg.sheet->rho2;
      if (!rho) throw OutOfRange("pfa needs risk.pfa_rho, detector.rho or detector.beta");
      write_risk_row(csv, estimate_pfa(rule, *rho, cfg.mc));
    } else if (f == "lpfa" || f == "lcpfa") {
      if (!cfg.detector.m_star || !cfg.detector.k_star)
        throw OutOfRange(f + " needs detector.beta or detector.m_star and detector.k_star");
      const auto lp = estimate_lpfa(rule, cfg.detector.k_star, cfg.detector.m_star, cfg.mc, f == "lcpfa");
      write_risk_row(csv, f == "lpfa" ? lp.lpfa : lp.lcpfa);
    } else {
      for (auto nu : cfg.risk_nu) {
        const auto d = estimate_delay(rule, nu, cfg.mc, DelayOptions{cfg.risk_moment, false});
        write_risk_row(csv, d.positive_part);
        if (d.conditional) write_risk_row(csv, *d.conditional);
      }
    }
  }
  outcome.files.push_back(csv.path());
}

inline void run_sweep(const ExperimentConfig& cfg, const std::filesystem::path& dir, RunOutcome& outcome) {
  const auto model = build_model(*cfg.model);
  CsvWriter rows(dir / "sweep.csv", {"kind", "h", "nu", "estimate", "se", "reps", "censored", "ratio"});
  CsvWriter summary(dir / "sweep_summary.csv", {"kind", "nu", "slope", "ci_lo", "ci_hi", "one_over_I"});
  double one_over_i = 0.0;
  if (!model->kl_closed_form() && !model->degenerate()) one_over_i = 1.0 / resolve_kl(cfg, *model, outcome);
  for (auto kind : cfg.sweep_kinds) {
    double rho = 0.0;
    if (kind == DetectorKind::kShiryaev) {
      if (cfg.detector.rho)
        rho = *cfg.detector.rho;
      else if (cfg.sheet)
        rho = cfg.sheet->rho2;
      else
        throw OutOfRange("a Shiryaev sweep needs detector.rho or detector.beta");
    }
    auto res = sweep_thresholds(kind, *model, cfg.sweep_h, cfg.sweep_nu, cfg.mc, rho);
    if (res.one_over_i == 0.0 && one_over_i > 0.0) {
      res.one_over_i = one_over_i;
      for (auto& row : res.rows) row.ratio_to_first_order = row.delay.positive_part.estimate / (std::log(row.h) * one_over_i);
    }
    for (const auto& row : res.rows) {
      const auto& r = row.delay.positive_part;
      rows.row(to_string(kind), row.h, row.nu, r.estimate, r.standard_error, r.replicates, r.censored_fraction,
               row.ratio_to_first_order);
    }
    for (std::size_t i = 0; i < res.nus.size(); ++i) {
      const auto& f = res.fits[i];
      summary.row(to_string(kind), res.nus[i], f.slope, f.ci_lo, f.ci_hi, res.one_over_i);
    }
  }
  outcome.files.push_back(rows.path());
  outcome.files.push_back(summary.path());
}

inline void write_audit(const ConvergenceAudit& a, const std::filesystem::path& dir, RunOutcome& outcome) {
  const auto grid = log_grid(1, a.n_max);
  {
    CsvWriter csv(dir / "audit.csv", {"eps", "k", "n", "p"});
    for (std::size_t e = 0; e < a.eps.size(); ++e)
      for (std::size_t k = 0; k < a.k_grid.size(); ++k)
        for (auto n : grid) csv.row(a.eps[e], a.k_grid[k], n, a.prob(e, k, n));
    outcome.files.push_back(csv.path());
  }
  {
    CsvWriter csv(dir / "audit_sup.csv", {"eps", "n", "sup_p", "partial_r1", "partial_r2"});
    for (std::size_t e = 0; e < a.eps.size(); ++e)
      for (auto n : grid) csv.row(a.eps[e], n, a.sup_prob(e, n), a.partial_r1[e][n - 1], a.partial_r2[e][n - 1]);
    outcome.files.push_back(csv.path());
  }
  CsvWriter csv(dir / "audit_summary.csv",
                {"eps", "kl", "reps", "n_max", "slope", "slope_points", "last_decade_increase_r1", "partial_r1",
                 "partial_r2"});
  for (std::size_t e = 0; e < a.eps.size(); ++e)
    csv.row(a.eps[e], a.kl, a.reps, a.n_max, a.slope[e], a.slope_points[e], a.last_decade_increase_r1[e],
            a.partial_r1[e].back(), a.partial_r2[e].back());
  outcome.files.push_back(csv.path());
}

inline void run_audit(const ExperimentConfig& cfg, const std::filesystem::path& dir, RunOutcome& outcome) {
  const auto model = build_model(*cfg.model);
  AuditConfig ac = cfg.audit;
  ac.kl = resolve_kl(cfg, *model, outcome);
  ac.seed = cfg.mc.seed;
  ac.threads = cfg.mc.threads;
  write_audit(audit_complete_convergence(*model, ac), dir, outcome);

  if (cfg.audit_drift) {
    CsvWriter summary(dir / "drift_summary.csv",
                      {"lyapunov", "q_star", "iota", "c", "rho", "D", "large_x", "large_x_ratio", "pass"});
    try {
      const auto dc = check_drift(*model, cfg.drift);
      CsvWriter grid(dir / "drift.csv", {"x", "ratio", "in_c"});
      for (std::size_t i = 0; i < dc.grid.size(); ++i) grid.row(dc.grid[i], dc.ratio[i], static_cast<bool>(dc.in_c[i]));
      outcome.files.push_back(grid.path());
      summary.row(dc.lyapunov, dc.q_star, dc.iota, dc.c_size, dc.rho, dc.d, dc.large_x, dc.large_x_ratio, dc.pass);
    } catch (const NoValidRho& e) {
      summary.row("-", 0.0, cfg.drift.iota, cfg.drift.c_half_width, 0.0, 0.0, cfg.drift.large_x, 0.0, false);
      outcome.notes.push_back(e.what());
      outcome.exit_code = 2;
    } catch (const NoClosedForm& e) {
      outcome.notes.push_back(e.what());
    }
    outcome.files.push_back(summary.path());

    try {
      const auto mc = check_minorization(*model, cfg.minorization_c, cfg.minorization_resolution);
      CsvWriter csv(dir / "minorization.csv",
                    {"c", "resolution", "f_star", "x", "y", "lipschitz", "slack", "certified", "pass"});
      csv.row(mc.c_half_width, mc.resolution, mc.f_star, mc.x_at_min, mc.y_at_min, mc.lipschitz, mc.slack,
              mc.certified, mc.pass);
      outcome.files.push_back(csv.path());
      if (!mc.pass) outcome.exit_code = 2;
    } catch (const NoDensity& e) {
      outcome.notes.push_back(e.what());
    }
  }
}

inline void run_demo(const ExperimentConfig& cfg, const std::filesystem::path& dir, RunOutcome& outcome) {
  const auto model = build_model(*cfg.model);
  LaiDemoConfig dc = cfg.demo;
  dc.kl = resolve_kl(cfg, *model, outcome);
  dc.seed = cfg.mc.seed;
  dc.threads = cfg.mc.threads;
  const auto res = demo_lai_failure(*model, dc);
  {
    CsvWriter csv(dir / "demo_lai.csv", {"x2", "n", "eps", "threshold", "probability", "se"});
    for (const auto& r : res.rows) csv.row(r.x2, dc.n, dc.eps, res.threshold, r.probability, r.standard_error);
    outcome.files.push_back(csv.path());
  }
  double slope = std::numeric_limits<double>::quiet_NaN();
  if (cfg.demo_audit) {
    AuditConfig ac = cfg.audit;
    ac.kl = dc.kl;
    ac.seed = cfg.mc.seed;
    ac.threads = cfg.mc.threads;
    const auto audit = audit_complete_convergence(*model, ac);
    write_audit(audit, dir, outcome);
    slope = audit.slope.front();
  }
  CsvWriter csv(dir / "demo_summary.csv", {"kl", "nondecreasing", "above_floor", "floor", "audit_slope"});
  csv.row(dc.kl, res.nondecreasing, res.above_floor, dc.floor, slope);
  outcome.files.push_back(csv.path());
  if (!res.nondecreasing || (cfg.demo_audit && !(slope < 0.0))) outcome.exit_code = 2;
}

}  // namespace detail

/// Runs one experiment, writing the manifest and CSV reports into cfg.out.
inline RunOutcome run_experiment(const ExperimentConfig& cfg) {
  RunOutcome outcome;
  std::filesystem::create_directories(cfg.out);
  detail::write_manifest(cfg, cfg.out, outcome);
  if (cfg.model) {
    const auto model = build_model(*cfg.model);
    auto* rc = dynamic_cast<const VarRandomCoefficientModel*>(model.get());
    if (rc != nullptr && !rc->information_norm_looks_bounded())
      outcome.notes.push_back("warning: |G^{-1/2}(x)(A1 - A0)x| keeps growing on the radius grid; the KL number and "
                              "audits assume it is bounded");
  }
  switch (cfg.kind) {
    case ExperimentKind::kCalibrate: detail::run_calibrate(cfg, cfg.out, outcome); break;
    case ExperimentKind::kRisk: detail::run_risk(cfg, cfg.out, outcome); break;
    case ExperimentKind::kSweep: detail::run_sweep(cfg, cfg.out, outcome); break;
    case ExperimentKind::kAudit: detail::run_audit(cfg, cfg.out, outcome); break;
    case ExperimentKind::kDemoLai: detail::run_demo(cfg, cfg.out, outcome); break;
  }
  return outcome;
}

}  // namespace qcd
