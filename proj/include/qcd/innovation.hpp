#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "qcd/errors.hpp"
#include "qcd/quadrature.hpp"
#include "qcd/rng.hpp"

namespace qcd {

/// Zero-mean, unit-variance innovation law psi: standard Gaussian or a
/// Student-t rescaled to unit variance (df > 4 keeps the fourth moment finite).
class Innovation {
 public:
  static Innovation gaussian() { return Innovation(0.0); }

  static Innovation student_t(double df) {
    if (!(df > 4.0) || !std::isfinite(df))
      throw OutOfRange("Student-t innovations need finite df > 4, got " + std::to_string(df));
    return Innovation(df);
  }

  bool is_gaussian() const noexcept { return df_ == 0.0; }
  double df() const noexcept { return df_; }
  std::string describe() const { return is_gaussian() ? "gauss" : "t(" + std::to_string(df_) + ")"; }

  double sample(Rng& rng) const {
    if (is_gaussian()) return rng.normal();
    std::student_t_distribution<double> t(df_);
    return scale_ * t(rng);
  }

  double log_pdf(double w) const {
    if (is_gaussian()) return -0.5 * w * w - kLogSqrt2Pi;
    const double u = w / scale_;
    return log_norm_ - 0.5 * (df_ + 1.0) * std::log1p(u * u / df_) - std::log(scale_);
  }

  double pdf(double w) const { return std::exp(log_pdf(w)); }

  /// E f(W). Gaussian: 64-node Gauss–Hermite. Student-t: adaptive
  /// Gauss–Kronrod over the real line (Hermite weights do not fit power tails).
  template <class F>
  double expectation(F&& f) const {
    if (is_gaussian()) return gauss_hermite_64().expectation(f);
    auto integrand = [&](double w) { return f(w) * pdf(w); };
    return integrate_adaptive(integrand, -std::numeric_limits<double>::infinity(),
                              std::numeric_limits<double>::infinity(), 1e-11)
        .first;
  }

 private:
  static constexpr double kLogSqrt2Pi = 0.91893853320467274178;

  explicit Innovation(double df) : df_(df) {
    if (df_ > 0.0) {
      scale_ = std::sqrt((df_ - 2.0) / df_);
      log_norm_ = std::lgamma(0.5 * (df_ + 1.0)) - std::lgamma(0.5 * df_) -
                  0.5 * std::log(df_ * std::numbers::pi);
    }
  }

  double df_ = 0.0;  // 0 encodes Gaussian
  double scale_ = 1.0;
  double log_norm_ = 0.0;
};

}  // namespace qcd
