#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qcd/errors.hpp"
#include "qcd/model.hpp"
#include "qcd/models/scalar.hpp"
#include "qcd/models/vector.hpp"
#include "qcd/parallel.hpp"
#include "qcd/quadrature.hpp"
#include "qcd/rng.hpp"

namespace qcd {

/// Fills `z` with the n LLR increments z_{k+1}, ..., z_{k+n} of a path whose
/// change happens at k.
using IncrementSource = std::function<void(std::uint64_t k, std::uint64_t n, Rng& rng, std::vector<double>& z)>;

/// Increment source for a model: X_0 from the initial law, k pre-change
/// steps, then n post-change steps scored by the LLR.
inline IncrementSource model_increments(const ChangePointModel& model) {
  return [&model](std::uint64_t k, std::uint64_t n, Rng& rng, std::vector<double>& z) {
    MarkovState x = model.initial_state(rng);
    MarkovState y(model.dimension());
    for (std::uint64_t i = 0; i < k; ++i) {
      model.transition(Regime::kPre, x, y, rng);
      std::swap(x, y);
    }
    z.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      model.transition(Regime::kPost, x, y, rng);
      z[i] = model.llr(y, x);
      std::swap(x, y);
    }
  };
}

struct AuditConfig {
  double kl = 0.0;
  std::vector<double> eps = {0.05};
  std::vector<std::uint64_t> k_grid = {0, 1, 2, 5, 10, 20, 50};
  std::uint64_t n_max = 20000;
  std::size_t reps = 10000;
  std::uint64_t slope_lo = 50;
  std::uint64_t slope_hi = 800;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

/// Exceedance probabilities p_k(n, eps) = P_k(|Z^k_{k+n} / n - I| > eps) for
/// every n in 1..n_max, with their k-grid maximum, the partial sums
/// sum_{m<=n} m^{r-1} sup_k p_k(m, eps) for r = 1, 2, and the log-log decay
/// slope of sup_k p over [slope_lo, slope_hi].
struct ConvergenceAudit {
  double kl = 0.0;
  std::size_t reps = 0;
  std::uint64_t n_max = 0;
  std::vector<double> eps;
  std::vector<std::uint64_t> k_grid;
  // p[e][ki][n - 1]
  std::vector<std::vector<std::vector<double>>> p;
  // sup_p[e][n - 1], partial_r1[e][n - 1], partial_r2[e][n - 1]
  std::vector<std::vector<double>> sup_p, partial_r1, partial_r2;
  std::vector<double> slope;             // per eps; NaN with fewer than two usable points
  std::vector<std::size_t> slope_points;  // points that passed the p >= 10 / reps filter
  std::vector<double> last_decade_increase_r1;  // partial_r1(n_max) / partial_r1(n_max / 10) - 1

  double prob(std::size_t e, std::size_t ki, std::uint64_t n) const { return p[e][ki][n - 1]; }
  double sup_prob(std::size_t e, std::uint64_t n) const { return sup_p[e][n - 1]; }
};

/// Log-spaced horizons lo * 2^{j/4}, rounded and deduplicated, up to hi.
inline std::vector<std::uint64_t> log_grid(std::uint64_t lo, std::uint64_t hi) {
  std::vector<std::uint64_t> out;
  for (int j = 0;; ++j) {
    const auto n = static_cast<std::uint64_t>(std::llround(static_cast<double>(lo) * std::exp2(j / 4.0)));
    if (n > hi) break;
    if (out.empty() || out.back() != n) out.push_back(n);
  }
  if (out.empty() || out.back() != hi) out.push_back(hi);
  return out;
}

/// Least-squares slope of log y on log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

/// One path per (k, replicate) is scored at every n, so the table for a given
/// k has replicate-level correlation across n but independent replicates.
inline ConvergenceAudit audit_complete_convergence(const IncrementSource& source, const AuditConfig& cfg) {
  if (cfg.reps < 10000) throw InsufficientBudget("audit needs at least 1e4 replicates per cell");
  if (!(cfg.kl > 0.0) || !std::isfinite(cfg.kl)) throw OutOfRange("audit needs a finite I > 0");
  if (cfg.eps.empty() || cfg.k_grid.empty()) throw OutOfRange("audit needs non-empty eps and k grids");
  for (double e : cfg.eps)
    if (!(e > 0.0)) throw OutOfRange("audit eps must be > 0");
  if (cfg.n_max < 10) throw OutOfRange("audit n_max must be >= 10");
  if (!(cfg.slope_lo >= 1 && cfg.slope_lo < cfg.slope_hi && cfg.slope_hi <= cfg.n_max))
    throw OutOfRange("audit slope range must satisfy 1 <= lo < hi <= n_max");

  const std::size_t ne = cfg.eps.size(), nk = cfg.k_grid.size();
  const std::uint64_t nmax = cfg.n_max;
  ConvergenceAudit out;
  out.kl = cfg.kl;
  out.reps = cfg.reps;
  out.n_max = nmax;
  out.eps = cfg.eps;
  out.k_grid = cfg.k_grid;
  out.p.assign(ne, std::vector<std::vector<double>>(nk, std::vector<double>(nmax, 0.0)));

  constexpr std::size_t kChunks = 64;
  const std::size_t chunk = (cfg.reps + kChunks - 1) / kChunks;
  for (std::size_t ki = 0; ki < nk; ++ki) {
    std::vector<std::vector<std::uint32_t>> counts(kChunks);
    parallel_for(kChunks, cfg.threads, [&](std::size_t c) {
      auto& cnt = counts[c];
      cnt.assign(ne * nmax, 0);
      std::vector<double> z;
      const std::size_t begin = c * chunk, end = std::min(cfg.reps, begin + chunk);
      for (std::size_t rep = begin; rep < end; ++rep) {
        Rng rng = make_stream(cfg.seed, ki * cfg.reps + rep, StreamTag::kAuditCell);
        source(cfg.k_grid[ki], nmax, rng, z);
        if (z.size() != nmax) throw DimensionMismatch("increment source returned the wrong length");
        double s = 0.0;
        for (std::uint64_t n = 1; n <= nmax; ++n) {
          s += z[n - 1];
          const double dev = std::abs(s / static_cast<double>(n) - cfg.kl);
          for (std::size_t e = 0; e < ne; ++e)
            if (dev > cfg.eps[e]) ++cnt[e * nmax + n - 1];
        }
      }
    });
    for (std::size_t e = 0; e < ne; ++e)
      for (std::uint64_t n = 0; n < nmax; ++n) {
        std::uint64_t total = 0;
        for (const auto& cnt : counts) total += cnt[e * nmax + n];
        out.p[e][ki][n] = static_cast<double>(total) / static_cast<double>(cfg.reps);
      }
  }

  const auto fit_n = log_grid(cfg.slope_lo, cfg.slope_hi);
  const double floor = 10.0 / static_cast<double>(cfg.reps);
  out.sup_p.assign(ne, std::vector<double>(nmax, 0.0));
  out.partial_r1 = out.sup_p;
  out.partial_r2 = out.sup_p;
  for (std::size_t e = 0; e < ne; ++e) {
    double s1 = 0.0, s2 = 0.0;
    for (std::uint64_t n = 1; n <= nmax; ++n) {
      double sup = 0.0;
      for (std::size_t ki = 0; ki < nk; ++ki) sup = std::max(sup, out.p[e][ki][n - 1]);
      out.sup_p[e][n - 1] = sup;
      s1 += sup;
      s2 += static_cast<double>(n) * sup;
      out.partial_r1[e][n - 1] = s1;
      out.partial_r2[e][n - 1] = s2;
    }
    std::vector<double> xs, ys;
    for (auto n : fit_n) {
      const double v = out.sup_p[e][n - 1];
      if (v >= floor) {
        xs.push_back(static_cast<double>(n));
        ys.push_back(v);
      }
    }
    out.slope.push_back(loglog_slope(xs, ys));
    out.slope_points.push_back(xs.size());
    const double base = out.partial_r1[e][nmax / 10 - 1];
    out.last_decade_increase_r1.push_back(base > 0.0 ? s1 / base - 1.0 : 0.0);
  }
  return out;
}

inline ConvergenceAudit audit_complete_convergence(const ChangePointModel& model, const AuditConfig& cfg) {
  return audit_complete_convergence(model_increments(model), cfg);
}

struct DriftCheck {
  std::string lyapunov;  // "q*(1+|x|^iota)" or "c(1+x'Tx)"
  double q_star = 1.0;
  double iota = 2.0;
  double c_size = 0.0;  // half-width n of C = [-n, n], or K* for {x'Tx <= K*}
  std::vector<double> grid;    // scalar grid points, or radii for the quadratic form
  std::vector<double> ratio;   // E_x V(X_1) / V(x) at each grid point
  std::vector<bool> in_c;
  double rho = 0.0;
  double d = 0.0;
  double large_x = 0.0;
  double large_x_ratio = 0.0;
  bool pass = false;
};

struct DriftSpec {
  double iota = 2.0;
  std::optional<double> q_star;  // default: max(1, (|a1^2 - a0^2| + (a1 - a0)^2 + 1) / 2) for AR(1)
  double c_half_width = 2.0;     // scalar C = [-n, n]
  double k_star = 10.0;          // quadratic C = {x'Tx <= K*}
  std::vector<double> grid;      // empty: 401 points on [-50, 50] (or radii 0..50)
  double large_x = 100.0;
  std::size_t gh_order = 64;
};

namespace detail {

/// E|m + s W|^iota under the innovation law. Gauss–Hermite is exact for the
/// Gaussian even-integer case; everything else is integrated adaptively with
/// a breakpoint at the kink w = -m / s.
inline double expect_abs_power(const Innovation& psi, double m, double s, double iota, std::size_t gh_order) {
  const bool even_integer = iota == std::floor(iota) && std::fmod(iota, 2.0) == 0.0;
  auto f = [&](double w) { return std::pow(std::abs(m + s * w), iota); };
  if (psi.is_gaussian() && even_integer) {
    const std::size_t order = std::max<std::size_t>(gh_order, static_cast<std::size_t>(iota / 2.0) + 1);
    return order == 64 ? gauss_hermite_64().expectation(f) : GaussHermite(order).expectation(f);
  }
  auto g = [&](double w) { return f(w) * psi.pdf(w); };
  const double kink = -m / s;
  return integrate_adaptive(g, -std::numeric_limits<double>::infinity(), kink, 1e-13).first +
         integrate_adaptive(g, kink, std::numeric_limits<double>::infinity(), 1e-13).first;
}

inline void fit_drift(DriftCheck& out, const std::vector<double>& ev, const std::vector<double>& v) {
  double worst_outside = -std::numeric_limits<double>::infinity();
  bool any_outside = false;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!out.in_c[i]) {
      any_outside = true;
      worst_outside = std::max(worst_outside, out.ratio[i]);
    }
  if (!any_outside) throw OutOfRange("drift grid has no points outside C");
  out.rho = 1.0 - worst_outside;
  if (!(out.rho > 0.0))
    throw NoValidRho("E_x V(X_1) / V(x) reaches " + std::to_string(worst_outside) + " outside C");
  out.d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (out.in_c[i]) out.d = std::max(out.d, ev[i] - (1.0 - out.rho) * v[i]);
  out.pass = true;
}

inline std::vector<double> default_drift_grid() {
  std::vector<double> g;
  for (int i = -200; i <= 200; ++i) g.push_back(0.25 * i);
  return g;
}

}  // namespace detail

/// Foster–Lyapunov drift check E_x V(X_1) <= (1 - rho) V(x) + D 1_C(x) under
/// the post-change law, with V(x) = q* (1 + |x|^iota) for scalar models.
/// rho is the largest value valid on every grid point outside C, and D the
/// smallest value then valid inside C.
inline DriftCheck check_drift(const ScalarModel& model, const DriftSpec& spec) {
  if (!(spec.iota > 0.0)) throw OutOfRange("drift: iota must be > 0");
  if (!(spec.c_half_width >= 0.0)) throw OutOfRange("drift: C half-width must be >= 0");
  DriftCheck out;
  out.lyapunov = "q*(1+|x|^iota)";
  out.iota = spec.iota;
  out.c_size = spec.c_half_width;
  if (spec.q_star) {
    out.q_star = *spec.q_star;
  } else if (auto* ar = dynamic_cast<const Ar1Model*>(&model)) {
    const double a0 = ar->a0(), a1 = ar->a1();
    out.q_star = std::max(1.0, (std::abs(a1 * a1 - a0 * a0) + (a1 - a0) * (a1 - a0) + 1.0) / 2.0);
  }
  out.grid = spec.grid.empty() ? detail::default_drift_grid() : spec.grid;

  auto expect_v = [&](double x) {
    const double m = model.location(Regime::kPost, x), s = model.scale(x);
    const double e = detail::expect_abs_power(model.innovation(), m, s, spec.iota, spec.gh_order);
    if (!std::isfinite(e)) throw QuadratureFailure("non-finite E_x V(X_1) at x = " + std::to_string(x));
    return out.q_star * (1.0 + e);
  };
  auto v = [&](double x) { return out.q_star * (1.0 + std::pow(std::abs(x), spec.iota)); };

  std::vector<double> ev, vv;
  for (double x : out.grid) {
    ev.push_back(expect_v(x));
    vv.push_back(v(x));
    out.ratio.push_back(ev.back() / vv.back());
    out.in_c.push_back(std::abs(x) <= spec.c_half_width);
  }
  out.large_x = spec.large_x;
  out.large_x_ratio = expect_v(spec.large_x) / v(spec.large_x);
  detail::fit_drift(out, ev, vv);
  return out;
}

/// Quadratic-form variant V(x) = 1 + x'Tx with C = {x'Tx <= K*}, evaluated
/// along the coordinate axes and the pairwise diagonals at the given radii.
inline DriftCheck check_drift(const QuadraticDriftModel& model, const DriftSpec& spec,
                              std::optional<Eigen::MatrixXd> t = std::nullopt) {
  const auto p = static_cast<Eigen::Index>(model.dimension());
  const Eigen::MatrixXd tm = t ? *t : model.default_lyapunov_matrix();
  if (tm.rows() != p || tm.cols() != p) throw DimensionMismatch("drift: T must be p x p");
  DriftCheck out;
  out.lyapunov = "c(1+x'Tx)";
  out.q_star = spec.q_star.value_or(1.0);
  out.iota = 2.0;
  out.c_size = spec.k_star;

  std::vector<double> radii = spec.grid;
  if (radii.empty())
    for (int i = 0; i <= 200; ++i) radii.push_back(0.25 * i);
  std::vector<Eigen::VectorXd> dirs;
  for (Eigen::Index i = 0; i < p; ++i) {
    dirs.push_back(Eigen::VectorXd::Unit(p, i));
    for (Eigen::Index j = i + 1; j < p; ++j) {
      dirs.push_back((Eigen::VectorXd::Unit(p, i) + Eigen::VectorXd::Unit(p, j)) / std::numbers::sqrt2);
      dirs.push_back((Eigen::VectorXd::Unit(p, i) - Eigen::VectorXd::Unit(p, j)) / std::numbers::sqrt2);
    }
  }
  auto v = [&](const Eigen::VectorXd& x) { return out.q_star * (1.0 + x.dot(tm * x)); };
  auto ev_at = [&](const Eigen::VectorXd& x) { return out.q_star * (1.0 + model.expect_next_quadratic(x, tm)); };

  std::vector<double> ev, vv;
  for (double r : radii)
    for (const auto& dir : dirs) {
      const Eigen::VectorXd x = r * dir;
      out.grid.push_back(r);
      ev.push_back(ev_at(x));
      vv.push_back(v(x));
      out.ratio.push_back(ev.back() / vv.back());
      out.in_c.push_back(x.dot(tm * x) <= spec.k_star);
    }
  out.large_x = spec.large_x;
  out.large_x_ratio = 0.0;
  for (const auto& dir : dirs)
    out.large_x_ratio = std::max(out.large_x_ratio, ev_at(spec.large_x * dir) / v(spec.large_x * dir));
  detail::fit_drift(out, ev, vv);
  return out;
}

/// Dispatches on the model family; models without a supported Lyapunov
/// family raise NoClosedForm.
inline DriftCheck check_drift(const ChangePointModel& model, const DriftSpec& spec) {
  if (auto* s = dynamic_cast<const ScalarModel*>(&model)) return check_drift(*s, spec);
  if (auto* q = dynamic_cast<const QuadraticDriftModel*>(&model)) return check_drift(*q, spec);
  throw NoClosedForm(model.name() + " has no drift-check Lyapunov family");
}

struct MinorizationCheck {
  double c_half_width = 0.0;
  std::size_t resolution = 0;
  double f_star = 0.0;  // grid minimum of f_1(y|x) over C x C
  double x_at_min = 0.0;
  double y_at_min = 0.0;
  double lipschitz = 0.0;
  double slack = 0.0;
  double certified = 0.0;  // min over nodes of f - local slack
  bool pass = false;
};

/// Grid minimum of the post-change transition density over C x C with
/// C = [-n, n]. Each node is discounted by its largest finite-difference
/// change to a neighbour (a local L * h); `slack` is the discount at the node
/// that sets the certified lower bound, and `lipschitz` the largest slope on
/// the grid.
inline MinorizationCheck check_minorization(const ChangePointModel& model, double c_half_width,
                                            std::size_t resolution = 201) {
  auto* s = dynamic_cast<const ScalarModel*>(&model);
  if (s == nullptr) throw NoDensity(model.name() + " has no scalar closed-form transition density");
  if (!(c_half_width >= 0.0)) throw OutOfRange("minorization: C half-width must be >= 0");
  if (resolution < 2) throw OutOfRange("minorization: resolution must be >= 2");
  MinorizationCheck out;
  out.c_half_width = c_half_width;
  const std::size_t m = c_half_width == 0.0 ? 1 : resolution;
  out.resolution = m;
  const double h = m == 1 ? 0.0 : 2.0 * c_half_width / static_cast<double>(m - 1);
  auto pt = [&](std::size_t i) { return m == 1 ? 0.0 : -c_half_width + h * static_cast<double>(i); };

  std::vector<double> f(m * m);
  out.f_star = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double v = s->transition_density(pt(j), pt(i));
      f[i * m + j] = v;
      if (v < out.f_star) {
        out.f_star = v;
        out.x_at_min = pt(i);
        out.y_at_min = pt(j);
      }
    }
  out.certified = out.f_star;
  if (m > 1) {
    out.certified = std::numeric_limits<double>::infinity();
    auto diff = [&](std::size_t a, std::size_t b) { return std::abs(f[a] - f[b]); };
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const std::size_t at = i * m + j;
        double local = 0.0;
        if (i > 0) local = std::max(local, diff(at, at - m));
        if (i + 1 < m) local = std::max(local, diff(at, at + m));
        if (j > 0) local = std::max(local, diff(at, at - 1));
        if (j + 1 < m) local = std::max(local, diff(at, at + 1));
        out.lipschitz = std::max(out.lipschitz, local / h);
        if (f[at] - local < out.certified) {
          out.certified = f[at] - local;
          out.slack = local;
        }
      }
  }
  out.pass = out.certified > 0.0;
  return out;
}

struct LaiDemoConfig {
  double kl = 0.0;
  double eps = 0.0;
  std::uint64_t n = 20;
  std::vector<double> x2_grid = {10.0, 100.0, 1000.0};
  std::size_t reps = 100000;
  double floor = 0.5;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

struct LaiDemoRow {
  double x2 = 0.0;
  double probability = 0.0;
  double standard_error = 0.0;
};

struct LaiDemoResult {
  std::vector<LaiDemoRow> rows;
  bool nondecreasing = false;  // probabilities nondecreasing along the x2 grid
  bool above_floor = false;    // max over the grid >= floor
  double threshold = 0.0;      // (I - eps) n
};

/// P_0(sum_{j<=n} Y_j < (I - eps) n | X_0 = (0, x2)) for a two-dimensional
/// model observed post-change from time 1. Replicate i uses the same stream
/// for every x2.
inline LaiDemoResult demo_lai_failure(const ChangePointModel& model, const LaiDemoConfig& cfg) {
  if (model.dimension() != 2) throw DimensionMismatch("demo_lai_failure needs a two-dimensional model");
  if (cfg.reps < 1000) throw InsufficientBudget("demo_lai_failure needs at least 1e3 replicates");
  if (cfg.n < 1 || cfg.x2_grid.empty()) throw OutOfRange("demo_lai_failure needs n >= 1 and a non-empty x2 grid");
  if (!std::isfinite(cfg.kl) || !(cfg.eps >= 0.0)) throw OutOfRange("demo_lai_failure needs finite I and eps >= 0");
  LaiDemoResult out;
  out.threshold = (cfg.kl - cfg.eps) * static_cast<double>(cfg.n);
  for (double x2 : cfg.x2_grid) {
    std::vector<std::uint8_t> hit(cfg.reps, 0);
    parallel_for(cfg.reps, cfg.threads, [&](std::size_t i) {
      Rng rng = make_stream(cfg.seed, i, StreamTag::kDemo);
      MarkovState x{0.0, x2};
      MarkovState y(2);
      double s = 0.0;
      for (std::uint64_t j = 0; j < cfg.n; ++j) {
        model.transition(Regime::kPost, x, y, rng);
        s += model.llr(y, x);
        std::swap(x, y);
      }
      hit[i] = s < out.threshold ? 1 : 0;
    });
    std::size_t count = 0;
    for (auto h : hit) count += h;
    const double p = static_cast<double>(count) / static_cast<double>(cfg.reps);
    out.rows.push_back({x2, p, std::sqrt(p * (1.0 - p) / static_cast<double>(cfg.reps))});
  }
  out.nondecreasing = true;
  double best = 0.0;
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    best = std::max(best, out.rows[i].probability);
    if (i > 0 && out.rows[i].probability < out.rows[i - 1].probability) out.nondecreasing = false;
  }
  out.above_floor = best >= cfg.floor;
  return out;
}

}  // namespace qcd
