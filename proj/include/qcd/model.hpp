#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qcd/errors.hpp"
#include "qcd/rng.hpp"
#include "qcd/state.hpp"

namespace qcd {

enum class Regime { kPre, kPost };

/// How X_0 is chosen before the first observation.
enum class InitialLaw {
  kZero,           // X_0 = 0
  kPreStationary,  // draw from the pre-change stationary law
};

/// Name plus key=value parameters, as written in experiment configs.
struct ModelSpec {
  std::string name;
  std::map<std::string, std::string> params;
};

/// Typed access to ModelSpec parameters. Every key must be consumed by the
/// model builder; leftovers are reported as UnknownKey by finish().
class ParamReader {
 public:
  explicit ParamReader(const ModelSpec& spec) : spec_(spec) {}

  double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
    auto it = find(key);
    if (it == spec_.params.end()) {
      if (!fallback) throw OutOfRange(spec_.name + ": missing parameter '" + key + "'");
      return *fallback;
    }
    return parse_number(key, it->second);
  }

  std::string text(const std::string& key, const std::string& fallback) {
    auto it = find(key);
    return it == spec_.params.end() ? fallback : it->second;
  }

  /// Comma-separated list.
  std::vector<double> vector(const std::string& key) {
    auto it = find(key);
    if (it == spec_.params.end()) throw OutOfRange(spec_.name + ": missing parameter '" + key + "'");
    return parse_list(key, it->second);
  }

  /// Rows separated by ';', entries by ','. Must be square of size p.
  Eigen::MatrixXd matrix(const std::string& key, std::size_t p) {
    auto it = find(key);
    if (it == spec_.params.end()) throw OutOfRange(spec_.name + ": missing parameter '" + key + "'");
    Eigen::MatrixXd m(p, p);
    std::stringstream rows(it->second);
    std::string row;
    std::size_t r = 0;
    while (std::getline(rows, row, ';')) {
      auto entries = parse_list(key, row);
      if (r >= p || entries.size() != p)
        throw OutOfRange(spec_.name + ": parameter '" + key + "' must be a " + std::to_string(p) + "x" +
                         std::to_string(p) + " matrix");
      for (std::size_t c = 0; c < p; ++c) m(r, c) = entries[c];
      ++r;
    }
    if (r != p)
      throw OutOfRange(spec_.name + ": parameter '" + key + "' must have " + std::to_string(p) + " rows");
    return m;
  }

  void finish() const {
    for (const auto& [key, value] : spec_.params)
      if (!used_.contains(key)) throw UnknownKey(spec_.name + ": unknown model parameter '" + key + "'");
  }

 private:
  std::map<std::string, std::string>::const_iterator find(const std::string& key) {
    used_.insert(key);
    return spec_.params.find(key);
  }

  double parse_number(const std::string& key, std::string s) const {
    const auto first = s.find_first_not_of(" \t");
    const auto last = s.find_last_not_of(" \t");
    s = first == std::string::npos ? std::string() : s.substr(first, last - first + 1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v))
      throw OutOfRange(spec_.name + ": parameter '" + key + "' is not a finite number: '" + s + "'");
    return v;
  }

  std::vector<double> parse_list(const std::string& key, const std::string& s) const {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number(key, item));
    if (out.empty()) throw OutOfRange(spec_.name + ": parameter '" + key + "' is empty");
    return out;
  }

  const ModelSpec& spec_;
  std::set<std::string> used_;
};

/// Pre/post-change Markov transition laws with their conditional log-densities.
///
/// Implementations are immutable after construction; every random draw goes
/// through the caller's Rng, so one instance can serve any number of threads.
class ChangePointModel {
 public:
  virtual ~ChangePointModel() = default;

  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;

  /// Draws X_n given X_{n-1} = x. `next` must already have dimension().
  virtual void transition(Regime regime, const MarkovState& x, MarkovState& next, Rng& rng) const = 0;

  /// log f_i(y | x).
  virtual double log_density(Regime regime, const MarkovState& y, const MarkovState& x) const = 0;

  /// One-step LLR g(y, x) = log f_1(y|x) - log f_0(y|x).
  virtual double llr(const MarkovState& y, const MarkovState& x) const {
    return log_density(Regime::kPost, y, x) - log_density(Regime::kPre, y, x);
  }

  /// Post-change drift of the LLR, g~(x) = E[g(X_1, x) | X_0 = x] under f_1.
  virtual double drift(const MarkovState& x) const = 0;

  /// Closed-form Kullback–Leibler number, when one exists.
  virtual std::optional<double> kl_closed_form() const { return std::nullopt; }

  /// True when pre- and post-change transition laws coincide.
  virtual bool degenerate() const { return false; }

  /// 1-d models with an explicit scalar transition density f_1(y|x).
  virtual bool has_scalar_density() const { return dimension() == 1; }

  /// Exact draw from the pre-change stationary law, if the model has one in
  /// closed form.
  virtual std::optional<MarkovState> sample_pre_stationary(Rng&) const { return std::nullopt; }

  InitialLaw initial_law() const noexcept { return initial_law_; }

  /// X_0 under the configured initial law. Without a closed-form stationary
  /// law, kPreStationary falls back to a 1000-step pre-change burn-in from 0.
  MarkovState initial_state(Rng& rng) const {
    if (initial_override_) return *initial_override_;
    if (initial_law_ == InitialLaw::kZero) return MarkovState(dimension());
    if (auto s = sample_pre_stationary(rng)) return *s;
    MarkovState x(dimension()), y(dimension());
    for (int i = 0; i < 1000; ++i) {
      transition(Regime::kPre, x, y, rng);
      std::swap(x, y);
    }
    return x;
  }

  void set_initial_law(InitialLaw law) { initial_law_ = law; }

  /// Fixes X_0 to a given point (used by conditional experiments).
  void set_initial_state(std::optional<MarkovState> x0) {
    if (x0) require_dimension(*x0, dimension(), "initial state");
    initial_override_ = std::move(x0);
  }

 private:
  InitialLaw initial_law_ = InitialLaw::kZero;
  std::optional<MarkovState> initial_override_;
};

using ModelPtr = std::shared_ptr<const ChangePointModel>;

/// g(x_new, x_prev) with dimension checks.
inline double llr_step(const ChangePointModel& model, const MarkovState& x_prev, const MarkovState& x_new) {
  require_dimension(x_prev, model.dimension(), "llr_step x_prev");
  require_dimension(x_new, model.dimension(), "llr_step x_new");
  return model.llr(x_new, x_prev);
}

/// Spectral radius of a real square matrix.
inline double spectral_radius(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(m, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace qcd
