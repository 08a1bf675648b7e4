#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "qcd/errors.hpp"

namespace qcd {

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

/// Upper tail 1 - Phi(x), accurate far into the tail.
inline double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Gauss–Hermite rule rescaled for expectations under N(0,1):
/// E f(W) ~= sum_i weight_i * f(node_i), with the weights summing to 1.
class GaussHermite {
 public:
  explicit GaussHermite(std::size_t order) : nodes_(order), weights_(order) {
    if (order == 0) throw QuadratureFailure("Gauss-Hermite order must be positive");
    build_physicists(order);
  }

  std::size_t order() const noexcept { return nodes_.size(); }
  const std::vector<double>& nodes() const noexcept { return nodes_; }
  const std::vector<double>& weights() const noexcept { return weights_; }

  template <class F>
  double expectation(F&& f) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) sum += weights_[i] * f(nodes_[i]);
    return sum;
  }

 private:
  // Newton iteration on the orthonormal Hermite recurrence (weight e^{-x^2}),
  // followed by the change of variables x -> sqrt(2) x for the standard normal.
  void build_physicists(std::size_t n) {
    constexpr double kPim4 = 0.7511255444649425;  // pi^{-1/4}
    constexpr int kMaxIter = 100;
    const std::size_t m = (n + 1) / 2;
    const double nd = static_cast<double>(n);
    double z = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (i == 0)
        z = std::sqrt(2.0 * nd + 1.0) - 1.85575 * std::pow(2.0 * nd + 1.0, -0.16667);
      else if (i == 1)
        z -= 1.14 * std::pow(nd, 0.426) / z;
      else if (i == 2)
        z = 1.86 * z - 0.86 * nodes_[0];
      else if (i == 3)
        z = 1.91 * z - 0.91 * nodes_[1];
      else
        z = 2.0 * z - nodes_[i - 2];

      double pp = 0.0;
      int iter = 0;
      for (; iter < kMaxIter; ++iter) {
        double p1 = kPim4;
        double p2 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double p3 = p2;
          p2 = p1;
          const double jd = static_cast<double>(j);
          p1 = z * std::sqrt(2.0 / (jd + 1.0)) * p2 - std::sqrt(jd / (jd + 1.0)) * p3;
        }
        pp = std::sqrt(2.0 * nd) * p2;
        const double z1 = z;
        z = z1 - p1 / pp;
        if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
      }
      if (iter == kMaxIter) throw QuadratureFailure("Gauss-Hermite root iteration did not converge");
      nodes_[i] = z;
      nodes_[n - 1 - i] = -z;
      weights_[i] = 2.0 / (pp * pp);
      weights_[n - 1 - i] = weights_[i];
    }
    const double scale = 1.0 / std::sqrt(std::numbers::pi);
    for (std::size_t i = 0; i < n; ++i) {
      nodes_[i] *= std::numbers::sqrt2;
      weights_[i] *= scale;
    }
  }

  std::vector<double> nodes_;
  std::vector<double> weights_;
};

/// 64-node rule shared by the model zoo.
inline const GaussHermite& gauss_hermite_64() {
  static const GaussHermite rule(64);
  return rule;
}

/// Adaptive Gauss–Kronrod (61 points) on [a, b]; infinite limits allowed.
/// Returns {value, error estimate}.
template <class F>
std::pair<double, double> integrate_adaptive(F&& f, double a, double b, double tol = 1e-12,
                                             unsigned max_depth = 20) {
  double error = 0.0;
  const double value =
      boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, max_depth, tol, &error);
  if (!std::isfinite(value)) throw QuadratureFailure("adaptive quadrature produced a non-finite value");
  return {value, error};
}

}  // namespace qcd
