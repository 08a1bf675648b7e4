#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>

#include "qcd/errors.hpp"
#include "qcd/innovation.hpp"
#include "qcd/model.hpp"
#include "qcd/quadrature.hpp"

namespace qcd {

/// Scalar chain X_n = m_i(X_{n-1}) + s(X_{n-1}) w_n with w_n ~ psi.
///
/// Covers the AR(1) correlation change, AR(1) with ARCH(1) errors and the iid
/// mean shift. The density is f_i(y|x) = psi((y - m_i(x)) / s(x)) / s(x).
class ScalarModel : public ChangePointModel {
 public:
  explicit ScalarModel(Innovation psi) : psi_(psi) {}

  std::size_t dimension() const override { return 1; }

  virtual double location(Regime regime, double x) const = 0;
  virtual double scale(double /*x*/) const { return 1.0; }

  const Innovation& innovation() const noexcept { return psi_; }

  void transition(Regime regime, const MarkovState& x, MarkovState& next, Rng& rng) const override {
    next[0] = location(regime, x[0]) + scale(x[0]) * psi_.sample(rng);
  }

  double log_density(Regime regime, const MarkovState& y, const MarkovState& x) const override {
    return scalar_log_density(regime, y[0], x[0]);
  }

  double scalar_log_density(Regime regime, double y, double x) const {
    const double s = scale(x);
    return psi_.log_pdf((y - location(regime, x)) / s) - std::log(s);
  }

  double llr(const MarkovState& y, const MarkovState& x) const override { return scalar_llr(y[0], x[0]); }

  double scalar_llr(double y, double x) const {
    const double s = scale(x);
    const double l0 = (y - location(Regime::kPre, x)) / s;
    const double l1 = (y - location(Regime::kPost, x)) / s;
    if (psi_.is_gaussian()) return 0.5 * (l0 * l0 - l1 * l1);
    return psi_.log_pdf(l1) - psi_.log_pdf(l0);
  }

  /// Generic g~(x) by quadrature over the innovation.
  double drift(const MarkovState& x) const override {
    const double x0 = x[0];
    const double m1 = location(Regime::kPost, x0);
    const double s = scale(x0);
    return psi_.expectation([&](double w) { return scalar_llr(m1 + s * w, x0); });
  }

  /// E[f(X_1) | X_0 = x] under the post-change law. Gaussian innovations use
  /// a Gauss–Hermite rule of the given order.
  double expect_next(double x, const std::function<double(double)>& f, std::size_t order = 64) const {
    const double m1 = location(Regime::kPost, x);
    const double s = scale(x);
    auto shifted = [&](double w) { return f(m1 + s * w); };
    if (psi_.is_gaussian()) {
      if (order == 64) return gauss_hermite_64().expectation(shifted);
      return GaussHermite(order).expectation(shifted);
    }
    return psi_.expectation(shifted);
  }

  double transition_density(double y, double x) const {
    return std::exp(scalar_log_density(Regime::kPost, y, x));
  }

 protected:
  Innovation psi_;
};

/// AR(1) with a change in the autoregression coefficient a0 -> a1.
class Ar1Model final : public ScalarModel {
 public:
  Ar1Model(double a0, double a1, Innovation psi) : ScalarModel(psi), a0_(a0), a1_(a1) {
    if (!(std::abs(a0) < 1.0)) throw UnstableParameters("|a0| < 1 violated (a0 = " + std::to_string(a0) + ")");
    if (!(std::abs(a1) < 1.0)) throw UnstableParameters("|a1| < 1 violated (a1 = " + std::to_string(a1) + ")");
  }

  std::string name() const override { return psi_.is_gaussian() ? "ar1-gauss" : "ar1-t"; }
  double a0() const noexcept { return a0_; }
  double a1() const noexcept { return a1_; }

  double location(Regime regime, double x) const override { return (regime == Regime::kPre ? a0_ : a1_) * x; }

  double drift(const MarkovState& x) const override {
    if (!psi_.is_gaussian()) return ScalarModel::drift(x);
    const double d = a1_ - a0_;
    return 0.5 * d * d * x[0] * x[0];
  }

  std::optional<double> kl_closed_form() const override {
    if (!psi_.is_gaussian()) return std::nullopt;
    const double d = a1_ - a0_;
    return d * d / (2.0 * (1.0 - a1_ * a1_));
  }

  bool degenerate() const override { return a0_ == a1_; }

  std::optional<MarkovState> sample_pre_stationary(Rng& rng) const override {
    if (!psi_.is_gaussian()) return std::nullopt;
    return MarkovState{rng.normal() / std::sqrt(1.0 - a0_ * a0_)};
  }

 private:
  double a0_, a1_;
};

/// AR(1) with ARCH(1) errors: X_n = a_i X_{n-1} + sqrt(1 + sigma^2 X_{n-1}^2) w_n.
class ArArchModel final : public ScalarModel {
 public:
  ArArchModel(double a0, double a1, double sigma, Innovation psi)
      : ScalarModel(psi), a0_(a0), a1_(a1), sigma_(sigma) {
    if (!(sigma > 0.0)) throw UnstableParameters("sigma > 0 violated");
    if (!(a0 * a0 + sigma * sigma < 1.0)) throw UnstableParameters("a0^2 + sigma^2 < 1 violated");
    if (!(a1 * a1 + sigma * sigma < 1.0)) throw UnstableParameters("a1^2 + sigma^2 < 1 violated");
  }

  std::string name() const override { return psi_.is_gaussian() ? "ar-arch-gauss" : "ar-arch-t"; }
  double a0() const noexcept { return a0_; }
  double a1() const noexcept { return a1_; }
  double sigma() const noexcept { return sigma_; }

  double location(Regime regime, double x) const override { return (regime == Regime::kPre ? a0_ : a1_) * x; }
  double scale(double x) const override { return std::sqrt(1.0 + sigma_ * sigma_ * x * x); }

  double drift(const MarkovState& x) const override {
    if (!psi_.is_gaussian()) return ScalarModel::drift(x);
    const double d = a1_ - a0_;
    const double xx = x[0] * x[0];
    return 0.5 * d * d * xx / (1.0 + sigma_ * sigma_ * xx);
  }

  bool degenerate() const override { return a0_ == a1_; }

  /// kappa(x) = E|a1 + sigma w|^x, the large-|x| growth rate of E_x |X_1|^x / |x|^x.
  double kappa_check(double power) const {
    auto f = [&](double w) { return std::pow(std::abs(a1_ + sigma_ * w), power); };
    if (power == std::floor(power) && std::fmod(power, 2.0) == 0.0) return psi_.expectation(f);
    // |.|^power has a kink at w = -a1 / sigma; integrate each side separately.
    auto g = [&](double w) { return f(w) * psi_.pdf(w); };
    const double kink = -a1_ / sigma_;
    return integrate_adaptive(g, -std::numeric_limits<double>::infinity(), kink, 1e-13).first +
           integrate_adaptive(g, kink, std::numeric_limits<double>::infinity(), 1e-13).first;
  }

  /// G(z) = (1/z) * integral_0^inf y^2 exp(-y^2 / 2z^2) / (1 + sigma^2 y^2) dy,
  /// integrated adaptively on [0, 40 z]; the dropped tail is below e^{-800}.
  double g_function(double z) const {
    auto integrand = [&](double y) {
      const double u = y / z;
      return y * y * std::exp(-0.5 * u * u) / (1.0 + sigma_ * sigma_ * y * y);
    };
    return integrate_adaptive(integrand, 0.0, 40.0 * z, 1e-12).first / z;
  }

 private:
  double a0_, a1_, sigma_;
};

/// iid observations N(0,1) -> N(theta,1); the state carries the last observation.
class IidGaussShiftModel final : public ScalarModel {
 public:
  explicit IidGaussShiftModel(double theta) : ScalarModel(Innovation::gaussian()), theta_(theta) {}

  std::string name() const override { return "iid-gauss-shift"; }
  double theta() const noexcept { return theta_; }

  double location(Regime regime, double) const override { return regime == Regime::kPre ? 0.0 : theta_; }

  double llr(const MarkovState& y, const MarkovState&) const override { return theta_ * y[0] - 0.5 * theta_ * theta_; }
  double drift(const MarkovState&) const override { return 0.5 * theta_ * theta_; }
  std::optional<double> kl_closed_form() const override { return 0.5 * theta_ * theta_; }
  bool degenerate() const override { return theta_ == 0.0; }

  std::optional<MarkovState> sample_pre_stationary(Rng& rng) const override { return MarkovState{rng.normal()}; }

 private:
  double theta_;
};

}  // namespace qcd
