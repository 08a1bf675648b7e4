#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "qcd/errors.hpp"
#include "qcd/model.hpp"
#include "qcd/models/scalar.hpp"
#include "qcd/models/vector.hpp"
#include "qcd/parallel.hpp"
#include "qcd/rng.hpp"

namespace qcd {

/// Change point meaning "never" (the P_infinity regime).
inline constexpr std::uint64_t kNoChange = std::numeric_limits<std::uint64_t>::max();

struct ModelInfo {
  std::string name;
  std::string parameters;
  std::string description;
};

inline const std::vector<ModelInfo>& model_catalog() {
  static const std::vector<ModelInfo> catalog = {
      {"ar1-gauss", "a0, a1", "AR(1) coefficient change a0 -> a1, N(0,1) innovations"},
      {"ar1-t", "a0, a1, df", "AR(1) coefficient change, unit-variance Student-t innovations"},
      {"ar-arch-gauss", "a0, a1, sigma", "AR(1) with ARCH(1) errors, N(0,1) innovations"},
      {"ar-arch-t", "a0, a1, sigma, df", "AR(1) with ARCH(1) errors, Student-t innovations"},
      {"lai-2d", "lambda1, lambda2, sigma1, sigma2, rho", "2-d random-coefficient AR whose mean matrix switches off"},
      {"var-rc", "a0, a1, q0, q1 (p x p matrices, rows ';' entries ',')",
       "multivariate linear difference equation with Gaussian random coefficients"},
      {"arp-gauss", "a0, a1 (comma lists of length p)", "AR(p) coefficient change, companion-state embedding"},
      {"arp-t", "a0, a1, df", "AR(p) coefficient change, Student-t innovations"},
      {"iid-gauss-shift", "theta", "iid N(0,1) -> N(theta,1) mean shift"},
  };
  return catalog;
}

/// Builds a model from its name and parameters. Every model also accepts
/// `init = zero | stationary` for the law of X_0.
inline std::shared_ptr<ChangePointModel> build_model(const ModelSpec& spec) {
  ParamReader p(spec);
  std::shared_ptr<ChangePointModel> model;
  const std::string& n = spec.name;
  if (n == "ar1-gauss") {
    model = std::make_shared<Ar1Model>(p.number("a0"), p.number("a1"), Innovation::gaussian());
  } else if (n == "ar1-t") {
    model = std::make_shared<Ar1Model>(p.number("a0"), p.number("a1"), Innovation::student_t(p.number("df")));
  } else if (n == "ar-arch-gauss") {
    model = std::make_shared<ArArchModel>(p.number("a0"), p.number("a1"), p.number("sigma"), Innovation::gaussian());
  } else if (n == "ar-arch-t") {
    model = std::make_shared<ArArchModel>(p.number("a0"), p.number("a1"), p.number("sigma"),
                                          Innovation::student_t(p.number("df")));
  } else if (n == "lai-2d") {
    model = std::make_shared<Lai2dModel>(p.number("lambda1"), p.number("lambda2"), p.number("sigma1"),
                                         p.number("sigma2"), p.number("rho"));
  } else if (n == "var-rc") {
    const double pd = p.number("p");
    if (!(pd >= 1.0 && pd <= 16.0 && pd == std::floor(pd))) throw OutOfRange("var-rc: p must be an integer in [1, 16]");
    const auto dim = static_cast<std::size_t>(pd);
    model = std::make_shared<VarRandomCoefficientModel>(p.matrix("a0", dim), p.matrix("a1", dim), p.matrix("q0", dim),
                                                        p.matrix("q1", dim));
  } else if (n == "arp-gauss") {
    model = std::make_shared<ArpModel>(p.vector("a0"), p.vector("a1"), Innovation::gaussian());
  } else if (n == "arp-t") {
    model = std::make_shared<ArpModel>(p.vector("a0"), p.vector("a1"), Innovation::student_t(p.number("df")));
  } else if (n == "iid-gauss-shift") {
    model = std::make_shared<IidGaussShiftModel>(p.number("theta"));
  } else {
    throw UnknownModel("'" + n + "'");
  }
  const std::string init = p.text("init", "zero");
  if (init == "zero")
    model->set_initial_law(InitialLaw::kZero);
  else if (init == "stationary")
    model->set_initial_law(InitialLaw::kPreStationary);
  else
    throw OutOfRange(n + ": init must be 'zero' or 'stationary', got '" + init + "'");
  p.finish();
  return model;
}

inline std::shared_ptr<ChangePointModel> build_model(const std::string& name,
                                                     std::map<std::string, std::string> params = {}) {
  return build_model(ModelSpec{name, std::move(params)});
}

/// Path X_0, X_1, ..., X_N with X_n drawn from f_0 for n <= nu and from f_1
/// for n > nu. nu = kNoChange gives a pure pre-change path, nu = 0 a pure
/// post-change one.
inline std::vector<MarkovState> sample_path(const ChangePointModel& model, std::uint64_t nu, std::size_t horizon,
                                            Rng& rng) {
  if (horizon < 1) throw OutOfRange("sample_path: horizon must be >= 1");
  std::vector<MarkovState> path;
  path.reserve(horizon + 1);
  path.push_back(model.initial_state(rng));
  for (std::size_t n = 1; n <= horizon; ++n) {
    MarkovState next(model.dimension());
    const Regime regime = n <= nu ? Regime::kPre : Regime::kPost;
    model.transition(regime, path.back(), next, rng);
    path.push_back(std::move(next));
  }
  return path;
}

struct KlEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

struct ErgodicMcOptions {
  std::size_t burn_in = 1000;
  std::size_t horizon = 1'000'000;
  std::size_t reps = 1;
  std::size_t batches = 50;  // per replicate, for batch-means SE
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

/// Closed-form Kullback–Leibler number; NoClosedForm if the model has none.
inline KlEstimate kl_closed_form(const ChangePointModel& model) {
  if (model.degenerate()) return {0.0, 0.0};
  if (auto i = model.kl_closed_form()) return {*i, 0.0};
  throw NoClosedForm(model.name() + " has no closed-form Kullback-Leibler number");
}

/// Long-run average of the LLR drift along post-change paths, with a
/// batch-means standard error. Models whose drift needs quadrature per state
/// (non-Gaussian innovations) average g(X_j, X_{j-1}) instead, which has the
/// same stationary mean.
inline KlEstimate kl_ergodic_mc(const ChangePointModel& model, const ErgodicMcOptions& opt) {
  if (opt.burn_in < 1000) throw OutOfRange("ergodic_mc: burn_in must be >= 1000");
  if (opt.horizon < 10 * opt.burn_in) throw OutOfRange("ergodic_mc: horizon must be >= 10 * burn_in");
  if (opt.reps < 1 || opt.batches < 2) throw OutOfRange("ergodic_mc: need reps >= 1 and batches >= 2");

  bool cheap_drift = true;
  if (auto* s = dynamic_cast<const ScalarModel*>(&model)) cheap_drift = s->innovation().is_gaussian();
  if (auto* a = dynamic_cast<const ArpModel*>(&model)) cheap_drift = a->kl_closed_form().has_value();

  const std::size_t batch_len = opt.horizon / opt.batches;
  std::vector<double> batch_means(opt.reps * opt.batches, 0.0);
  parallel_for(opt.reps, opt.threads, [&](std::size_t rep) {
    Rng rng = make_stream(opt.seed, rep, StreamTag::kKlEstimate);
    MarkovState x = model.initial_state(rng);
    MarkovState y(model.dimension());
    for (std::size_t i = 0; i < opt.burn_in; ++i) {
      model.transition(Regime::kPost, x, y, rng);
      std::swap(x, y);
    }
    for (std::size_t b = 0; b < opt.batches; ++b) {
      double sum = 0.0;
      for (std::size_t i = 0; i < batch_len; ++i) {
        model.transition(Regime::kPost, x, y, rng);
        sum += cheap_drift ? model.drift(x) : model.llr(y, x);
        std::swap(x, y);
      }
      batch_means[rep * opt.batches + b] = sum / static_cast<double>(batch_len);
    }
  });

  double mean = 0.0;
  for (double m : batch_means) mean += m;
  mean /= static_cast<double>(batch_means.size());
  double ss = 0.0;
  for (double m : batch_means) ss += (m - mean) * (m - mean);
  const double count = static_cast<double>(batch_means.size());
  return {mean, std::sqrt(ss / (count - 1.0) / count)};
}

/// Kullback–Leibler number of the Gaussian AR-ARCH(1) model via
/// I = (a1 - a0)^2 / sqrt(2 pi) * E G(v), where v^2 = 1 + sum_{j>=2} prod_{l<j} u_l^2
/// with u_l iid N(a1, sigma^2). The expectation is Monte Carlo over v,
/// G itself is a one-dimensional adaptive quadrature.
inline KlEstimate kl_arch_quadrature(const ArArchModel& model, std::size_t samples, std::uint64_t seed,
                                     unsigned threads = 0) {
  if (!model.innovation().is_gaussian()) throw NoClosedForm("G(z) representation needs Gaussian innovations");
  if (samples < 2) throw OutOfRange("kl_arch_quadrature: samples must be >= 2");
  std::vector<double> g(samples);
  parallel_for(samples, threads, [&](std::size_t i) {
    Rng rng = make_stream(seed, i, StreamTag::kKlEstimate);
    double sum = 1.0;
    double prod = 1.0;
    for (int j = 0; j < 100000; ++j) {
      const double u = model.a1() + model.sigma() * rng.normal();
      prod *= u * u;
      sum += prod;
      if (prod < 1e-17 * sum) break;
    }
    g[i] = model.g_function(std::sqrt(sum));
  });
  double mean = 0.0;
  for (double v : g) mean += v;
  mean /= static_cast<double>(samples);
  double ss = 0.0;
  for (double v : g) ss += (v - mean) * (v - mean);
  const double d = model.a1() - model.a0();
  const double c = d * d / std::sqrt(2.0 * std::numbers::pi);
  const double n = static_cast<double>(samples);
  return {c * mean, c * std::sqrt(ss / (n - 1.0) / n)};
}

}  // namespace qcd
