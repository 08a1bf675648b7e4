#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qcd/errors.hpp"
#include "qcd/innovation.hpp"
#include "qcd/model.hpp"

namespace qcd {

/// Models whose drift check uses a quadratic Lyapunov function
/// V(x) = c (1 + x'Tx) and which can evaluate E[X_1' T X_1 | X_0 = x]
/// exactly under the post-change law.
class QuadraticDriftModel : public ChangePointModel {
 public:
  virtual double expect_next_quadratic(const Eigen::VectorXd& x, const Eigen::MatrixXd& t) const = 0;

  /// T solving T = I + L(T), where L(T) is the quadratic part of
  /// x -> E[X_1' T X_1 | x]. Then x'L(T)x = x'Tx - |x|^2.
  virtual Eigen::MatrixXd default_lyapunov_matrix() const = 0;
};

inline Eigen::Map<const Eigen::VectorXd> as_vector(const MarkovState& s) {
  return {s.data(), static_cast<Eigen::Index>(s.dimension())};
}

/// Fixed-point iteration T <- I + op(T), stopping at relative change 1e-14.
template <class Op>
Eigen::MatrixXd solve_lyapunov_series(Eigen::Index p, Op&& op) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Identity(p, p);
  for (int iter = 0; iter < 100000; ++iter) {
    Eigen::MatrixXd next = Eigen::MatrixXd::Identity(p, p) + op(t);
    const double change = (next - t).norm();
    t = std::move(next);
    if (change <= 1e-14 * t.norm()) return t;
  }
  throw UnstableParameters("Lyapunov series did not converge");
}

/// Multivariate linear difference equation with random coefficients:
/// X_n = (A_i + B_n) X_{n-1} + w_n, w_n ~ N(0, Q0), vec(B_n) Gaussian with
/// independent entries of variance Q1(r, c).
///
/// Conditionally on X_{n-1} = x, X_n ~ N(A_i x, G(x)) with
/// G(x) = Q0 + diag_r(sum_c Q1(r,c) x_c^2).
class VarRandomCoefficientModel : public QuadraticDriftModel {
 public:
  VarRandomCoefficientModel(Eigen::MatrixXd a0, Eigen::MatrixXd a1, Eigen::MatrixXd q0, Eigen::MatrixXd q1,
                            std::string name = "var-rc")
      : a0_(std::move(a0)), a1_(std::move(a1)), q0_(std::move(q0)), q1_(std::move(q1)), name_(std::move(name)) {
    const auto p = a0_.rows();
    if (p < 1 || a0_.cols() != p || a1_.rows() != p || a1_.cols() != p || q0_.rows() != p || q0_.cols() != p ||
        q1_.rows() != p || q1_.cols() != p)
      throw DimensionMismatch("var-rc: all matrices must be p x p");
    if ((q1_.array() < 0.0).any()) throw UnstableParameters("coefficient variances Q1 must be >= 0");
    if (!q0_.isApprox(q0_.transpose(), 1e-12)) throw UnstableParameters("Q0 must be symmetric");
    q0_llt_.compute(q0_);
    if (q0_llt_.info() != Eigen::Success) throw UnstableParameters("Q0 must be positive definite");
    q0_chol_ = q0_llt_.matrixL();
    q1_sd_ = q1_.cwiseSqrt();
    if (const double r = second_moment_radius(a0_); !(r < 1.0))
      throw UnstableParameters("spectral radius of E[A0n (x) A0n] < 1 violated (" + std::to_string(r) + ")");
    if (const double r = second_moment_radius(a1_); !(r < 1.0))
      throw UnstableParameters("spectral radius of E[A1n (x) A1n] < 1 violated (" + std::to_string(r) + ")");
  }

  std::string name() const override { return name_; }
  std::size_t dimension() const override { return static_cast<std::size_t>(a0_.rows()); }

  const Eigen::MatrixXd& mean_matrix(Regime r) const { return r == Regime::kPre ? a0_ : a1_; }

  /// Spectral radius of E[(A + B) (x) (A + B)] = A (x) A + E[B (x) B].
  double second_moment_radius(const Eigen::MatrixXd& a) const {
    const auto p = a.rows();
    Eigen::MatrixXd k(p * p, p * p);
    for (Eigen::Index i = 0; i < p; ++i)
      for (Eigen::Index j = 0; j < p; ++j) k.block(i * p, j * p, p, p) = a(i, j) * a;
    for (Eigen::Index i = 0; i < p; ++i)
      for (Eigen::Index j = 0; j < p; ++j) k(i * p + i, j * p + j) += q1_(i, j);
    return spectral_radius(k);
  }

  Eigen::MatrixXd conditional_covariance(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd g = q0_;
    const Eigen::VectorXd x2 = x.array().square();
    g.diagonal() += q1_ * x2;
    return g;
  }

  void transition(Regime regime, const MarkovState& x, MarkovState& next, Rng& rng) const override {
    const auto p = a0_.rows();
    const auto xv = as_vector(x);
    const Eigen::MatrixXd& a = mean_matrix(regime);
    Eigen::VectorXd z(p);
    for (Eigen::Index i = 0; i < p; ++i) z(i) = rng.normal();
    Eigen::VectorXd y = q0_chol_ * z;
    for (Eigen::Index r = 0; r < p; ++r) {
      double acc = 0.0;
      for (Eigen::Index c = 0; c < p; ++c) acc += (a(r, c) + q1_sd_(r, c) * rng.normal()) * xv(c);
      next[static_cast<std::size_t>(r)] = acc + y(r);
    }
  }

  double log_density(Regime regime, const MarkovState& y, const MarkovState& x) const override {
    const auto xv = as_vector(x);
    Eigen::LLT<Eigen::MatrixXd> llt(conditional_covariance(xv));
    const Eigen::VectorXd r = as_vector(y) - mean_matrix(regime) * xv;
    const Eigen::VectorXd l = llt.matrixL().solve(r);
    const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double p = static_cast<double>(a0_.rows());
    return -0.5 * l.squaredNorm() - 0.5 * log_det - 0.5 * p * std::log(2.0 * std::numbers::pi);
  }

  /// (|l0|^2 - |l1|^2) / 2 with l_i = G^{-1/2}(x)(y - A_i x).
  double llr(const MarkovState& y, const MarkovState& x) const override {
    const auto xv = as_vector(x);
    const auto yv = as_vector(y);
    Eigen::LLT<Eigen::MatrixXd> llt(conditional_covariance(xv));
    const Eigen::VectorXd l0 = llt.matrixL().solve(yv - a0_ * xv);
    const Eigen::VectorXd l1 = llt.matrixL().solve(yv - a1_ * xv);
    return 0.5 * (l0.squaredNorm() - l1.squaredNorm());
  }

  /// g~(x) = x'(A1 - A0)' G(x)^{-1} (A1 - A0) x / 2.
  double drift(const MarkovState& x) const override { return 0.5 * information_norm(as_vector(x)) * information_norm(as_vector(x)); }

  /// |G^{-1/2}(x)(A1 - A0)x|; bounded in x is the standing assumption for
  /// this family and is only checked numerically.
  double information_norm(const Eigen::VectorXd& x) const {
    Eigen::LLT<Eigen::MatrixXd> llt(conditional_covariance(x));
    return llt.matrixL().solve((a1_ - a0_) * x).norm();
  }

  bool degenerate() const override { return a0_ == a1_; }

  /// Largest information_norm over the axes and pairwise diagonals at radius r.
  double max_information_norm(double r) const {
    const auto p = a0_.rows();
    double best = 0.0;
    for (Eigen::Index i = 0; i < p; ++i) {
      best = std::max(best, information_norm(r * Eigen::VectorXd::Unit(p, i)));
      for (Eigen::Index j = i + 1; j < p; ++j) {
        best = std::max(best, information_norm(r * (Eigen::VectorXd::Unit(p, i) + Eigen::VectorXd::Unit(p, j))));
        best = std::max(best, information_norm(r * (Eigen::VectorXd::Unit(p, i) - Eigen::VectorXd::Unit(p, j))));
      }
    }
    return best;
  }

  /// Grid check of the boundedness assumption: false when the norm keeps
  /// growing between radius 1e2 and 1e4.
  bool information_norm_looks_bounded() const {
    return max_information_norm(1e4) <= 2.0 * max_information_norm(1e2) + 1e-9;
  }

  double expect_next_quadratic(const Eigen::VectorXd& x, const Eigen::MatrixXd& t) const override {
    const Eigen::VectorXd m = a1_ * x;
    return m.dot(t * m) + (t * conditional_covariance(x)).trace();
  }

  Eigen::MatrixXd default_lyapunov_matrix() const override {
    const auto p = a0_.rows();
    return solve_lyapunov_series(p, [&](const Eigen::MatrixXd& t) {
      // E[(A+B)' T (A+B)] = A'TA + diag_c(sum_r Q1(r,c) T(r,r))
      Eigen::MatrixXd out = a1_.transpose() * t * a1_;
      out.diagonal() += q1_.transpose() * t.diagonal();
      return out;
    });
  }

 protected:
  Eigen::MatrixXd a0_, a1_, q0_, q1_, q0_chol_, q1_sd_;
  Eigen::LLT<Eigen::MatrixXd> q0_llt_;
  std::string name_;
};

/// Two-dimensional AR process with Lambda switched off at the change:
/// pre-change mean Lambda x, post-change mean 0, random diagonal coefficients
/// sigma_i eta_i and noise N(0, [[1+rho^2, rho], [rho, 1]]).
class Lai2dModel final : public VarRandomCoefficientModel {
 public:
  Lai2dModel(double lambda1, double lambda2, double sigma1, double sigma2, double rho)
      : VarRandomCoefficientModel(validated_lambda(lambda1, lambda2, sigma1, sigma2, rho), Eigen::MatrixXd::Zero(2, 2),
                                  noise(rho), coefficient_variances(sigma1, sigma2), "lai-2d"),
        lambda1_(lambda1), lambda2_(lambda2), sigma1_(sigma1), sigma2_(sigma2), rho_(rho) {}

  double lambda1() const noexcept { return lambda1_; }
  double lambda2() const noexcept { return lambda2_; }
  double sigma1() const noexcept { return sigma1_; }
  double sigma2() const noexcept { return sigma2_; }
  double rho() const noexcept { return rho_; }

  /// kappa(x) = x' Lambda G^{-1}(x) Lambda x / 2; equals g~(x).
  double kappa(const Eigen::Vector2d& x) const {
    const Eigen::Vector2d lx(lambda1_ * x(0), lambda2_ * x(1));
    Eigen::LLT<Eigen::MatrixXd> llt(conditional_covariance(x));
    return 0.5 * lx.dot(llt.solve(Eigen::VectorXd(lx)));
  }

  /// kappa_1(x1) = lim_{|x2| -> inf} kappa(x1, x2).
  double kappa_limit(double x1) const {
    const double s = 1.0 + rho_ * rho_ + sigma1_ * sigma1_ * x1 * x1;
    return 0.5 * lambda1_ * lambda1_ * x1 * x1 / s + 0.5 * lambda2_ * lambda2_ / (sigma2_ * sigma2_);
  }

  /// Upper bound on I_1 = E kappa_1(zeta_1).
  double i1_upper_bound() const {
    return 0.5 * lambda1_ * lambda1_ / (1.0 - sigma1_ * sigma1_) + 0.5 * lambda2_ * lambda2_ / (sigma2_ * sigma2_);
  }

 private:
  static Eigen::MatrixXd validated_lambda(double l1, double l2, double s1, double s2, double rho) {
    if (!(s1 * s1 > 0.0 && s1 * s1 < 1.0)) throw UnstableParameters("0 < sigma1^2 < 1 violated");
    if (!(s2 * s2 > 0.0 && s2 * s2 < 1.0)) throw UnstableParameters("0 < sigma2^2 < 1 violated");
    if (!(rho > 0.0)) throw UnstableParameters("rho > 0 violated");
    if (!(l1 * l1 + s1 * s1 < 1.0)) throw UnstableParameters("lambda1^2 + sigma1^2 < 1 (pre-change stability) violated");
    if (!(l2 * l2 + s2 * s2 < 1.0)) throw UnstableParameters("lambda2^2 + sigma2^2 < 1 (pre-change stability) violated");
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
    m(0, 0) = l1;
    m(1, 1) = l2;
    return m;
  }
  static Eigen::MatrixXd noise(double rho) {
    Eigen::MatrixXd q(2, 2);
    q << 1.0 + rho * rho, rho, rho, 1.0;
    return q;
  }
  static Eigen::MatrixXd coefficient_variances(double s1, double s2) {
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(2, 2);
    q(0, 0) = s1 * s1;
    q(1, 1) = s2 * s2;
    return q;
  }

  double lambda1_, lambda2_, sigma1_, sigma2_, rho_;
};

/// Companion matrix of AR coefficients a = (a_1, ..., a_p).
inline Eigen::MatrixXd companion_matrix(const std::vector<double>& a) {
  const auto p = static_cast<Eigen::Index>(a.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) m(0, j) = a[static_cast<std::size_t>(j)];
  for (Eigen::Index i = 1; i < p; ++i) m(i, i - 1) = 1.0;
  return m;
}

/// AR(p) with a change in the coefficient vector, observed through the
/// Markov embedding (X_n, ..., X_{n-p+1}).
///
/// The densities are taken with respect to the measure carried by
/// consistent shifts, so log f_i(y|x) = log psi(y_0 - a_i'x).
class ArpModel final : public QuadraticDriftModel {
 public:
  ArpModel(std::vector<double> a0, std::vector<double> a1, Innovation psi)
      : a0_(std::move(a0)), a1_(std::move(a1)), psi_(psi) {
    if (a0_.empty() || a0_.size() != a1_.size()) throw DimensionMismatch("arp: a0 and a1 must have the same length p >= 1");
    companion0_ = companion_matrix(a0_);
    companion1_ = companion_matrix(a1_);
    if (const double r = spectral_radius(companion0_); !(r < 1.0))
      throw UnstableParameters("spectral radius of the pre-change companion matrix < 1 violated (" + std::to_string(r) + ")");
    if (const double r = spectral_radius(companion1_); !(r < 1.0))
      throw UnstableParameters("spectral radius of the post-change companion matrix A < 1 violated (" + std::to_string(r) + ")");
    stationary_cov0_ = stationary_covariance(companion0_);
    stationary_cov1_ = stationary_covariance(companion1_);
  }

  std::string name() const override { return psi_.is_gaussian() ? "arp-gauss" : "arp-t"; }
  std::size_t dimension() const override { return a0_.size(); }
  bool has_scalar_density() const override { return false; }

  const std::vector<double>& coefficients(Regime r) const { return r == Regime::kPre ? a0_ : a1_; }
  const Eigen::MatrixXd& companion(Regime r) const { return r == Regime::kPre ? companion0_ : companion1_; }

  /// F = sum_l A^l B A'^l with B = e1 e1'.
  const Eigen::MatrixXd& stationary_covariance(Regime r) const {
    return r == Regime::kPre ? stationary_cov0_ : stationary_cov1_;
  }

  double predictor(Regime regime, const MarkovState& x) const {
    const auto& a = coefficients(regime);
    double acc = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) acc += a[j] * x[j];
    return acc;
  }

  /// Companion step X' = A X + (w, 0, ..., 0)'.
  void advance(Regime regime, const MarkovState& x, double w, MarkovState& next) const {
    const std::size_t p = a0_.size();
    const double head = predictor(regime, x) + w;
    for (std::size_t j = p - 1; j > 0; --j) next[j] = x[j - 1];
    next[0] = head;
  }

  void transition(Regime regime, const MarkovState& x, MarkovState& next, Rng& rng) const override {
    advance(regime, x, psi_.sample(rng), next);
  }

  double log_density(Regime regime, const MarkovState& y, const MarkovState& x) const override {
    return psi_.log_pdf(y[0] - predictor(regime, x));
  }

  double llr(const MarkovState& y, const MarkovState& x) const override {
    const double l0 = y[0] - predictor(Regime::kPre, x);
    const double l1 = y[0] - predictor(Regime::kPost, x);
    if (psi_.is_gaussian()) return 0.5 * (l0 * l0 - l1 * l1);
    return psi_.log_pdf(l1) - psi_.log_pdf(l0);
  }

  double drift(const MarkovState& x) const override {
    const double m1 = predictor(Regime::kPost, x);
    const double shift = m1 - predictor(Regime::kPre, x);
    if (psi_.is_gaussian()) return 0.5 * shift * shift;
    return psi_.expectation([&](double w) { return psi_.log_pdf(w) - psi_.log_pdf(w + shift); });
  }

  /// I = abar' F abar / 2 with abar = a1 - a0 and F the post-change
  /// stationary covariance (Gaussian innovations only).
  std::optional<double> kl_closed_form() const override {
    if (!psi_.is_gaussian()) return std::nullopt;
    Eigen::VectorXd d(static_cast<Eigen::Index>(a0_.size()));
    for (std::size_t j = 0; j < a0_.size(); ++j) d(static_cast<Eigen::Index>(j)) = a1_[j] - a0_[j];
    return 0.5 * d.dot(stationary_cov1_ * d);
  }

  bool degenerate() const override { return a0_ == a1_; }

  std::optional<MarkovState> sample_pre_stationary(Rng& rng) const override {
    if (!psi_.is_gaussian()) return std::nullopt;
    const auto p = static_cast<Eigen::Index>(a0_.size());
    Eigen::LDLT<Eigen::MatrixXd> ldlt(stationary_cov0_);
    Eigen::VectorXd z(p);
    for (Eigen::Index i = 0; i < p; ++i) z(i) = rng.normal();
    const Eigen::VectorXd d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
    const Eigen::VectorXd v = ldlt.transpositionsP().transpose() * (Eigen::MatrixXd(ldlt.matrixL()) * d.asDiagonal() * z);
    return MarkovState(std::vector<double>(v.data(), v.data() + p));
  }

  double expect_next_quadratic(const Eigen::VectorXd& x, const Eigen::MatrixXd& t) const override {
    const Eigen::VectorXd m = companion1_ * x;
    return m.dot(t * m) + t(0, 0);
  }

  Eigen::MatrixXd default_lyapunov_matrix() const override {
    return solve_lyapunov_series(companion1_.rows(),
                                 [&](const Eigen::MatrixXd& t) -> Eigen::MatrixXd { return companion1_.transpose() * t * companion1_; });
  }

 private:
  static Eigen::MatrixXd stationary_covariance(const Eigen::MatrixXd& a) {
    const auto p = a.rows();
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(p, p);
    b(0, 0) = 1.0;
    Eigen::MatrixXd f = b;
    Eigen::MatrixXd term = b;
    for (int l = 0; l < 100000; ++l) {
      term = a * term * a.transpose();
      f += term;
      if (term.norm() <= 1e-17 * f.norm()) break;
    }
    return f;
  }

  std::vector<double> a0_, a1_;
  Innovation psi_;
  Eigen::MatrixXd companion0_, companion1_, stationary_cov0_, stationary_cov1_;
};

}  // namespace qcd
