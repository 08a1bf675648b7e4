#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qcd/errors.hpp"
#include "qcd/model.hpp"
#include "qcd/rng.hpp"
#include "qcd/zoo.hpp"

namespace qcd {

enum class DetectorKind { kShiryaevRoberts, kCusum, kShiryaev };

inline std::string to_string(DetectorKind k) {
  switch (k) {
    case DetectorKind::kShiryaevRoberts: return "sr";
    case DetectorKind::kCusum: return "cusum";
    case DetectorKind::kShiryaev: return "shiryaev";
  }
  return "?";
}

/// log(1 + e^x) without overflow; softplus(-inf) = 0.
inline double log1p_exp(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

/// Detector kind plus stopping threshold.
///
/// `threshold` is on the natural scale of each statistic: h for SR (R_n >= h)
/// and Shiryaev (Lambda_n >= h), a in nats for CUSUM (W_n >= a). +inf means
/// never stop.
struct DetectorConfig {
  DetectorKind kind = DetectorKind::kShiryaevRoberts;
  double threshold = std::numeric_limits<double>::infinity();
  double rho = 0.0;  // Shiryaev only

  static DetectorConfig shiryaev_roberts(double h) { return {DetectorKind::kShiryaevRoberts, h, 0.0}; }
  static DetectorConfig cusum(double a) { return {DetectorKind::kCusum, a, 0.0}; }
  static DetectorConfig shiryaev(double rho, double h) { return {DetectorKind::kShiryaev, h, rho}; }
  /// Shiryaev rule stopping when the posterior reaches 1 - alpha,
  /// i.e. Lambda_n >= (1 - alpha) / (rho alpha).
  static DetectorConfig shiryaev_for_alpha(double alpha, double rho) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw OutOfRange("alpha must lie in (0,1)");
    return shiryaev(rho, (1.0 - alpha) / (rho * alpha));
  }
};

/// Running detection statistic in log space: log R_n (SR), W_n (CUSUM) or
/// log Lambda_n (Shiryaev). A plain value; copy it to branch a run.
class DetectorState {
 public:
  explicit DetectorState(const DetectorConfig& config) : kind_(config.kind), rho_(config.rho) {
    if (kind_ == DetectorKind::kShiryaev && !(rho_ > 0.0 && rho_ < 1.0))
      throw InvalidRho("rho must lie in (0,1), got " + std::to_string(rho_));
    if (std::isnan(config.threshold)) throw OutOfRange("threshold is NaN");
    if (kind_ == DetectorKind::kCusum) {
      log_threshold_ = config.threshold;
      value_ = 0.0;
    } else {
      if (!(config.threshold > 0.0)) throw OutOfRange("SR/Shiryaev threshold must be > 0");
      log_threshold_ = std::log(config.threshold);
      value_ = -std::numeric_limits<double>::infinity();
    }
    if (kind_ == DetectorKind::kShiryaev) log_inflation_ = -std::log1p(-rho_);
  }

  DetectorKind kind() const noexcept { return kind_; }
  double rho() const noexcept { return rho_; }
  std::uint64_t steps() const noexcept { return n_; }
  bool stopped() const noexcept { return stop_time_.has_value(); }
  std::optional<std::uint64_t> stop_time() const noexcept { return stop_time_; }

  /// log R_n, W_n or log Lambda_n.
  double statistic() const noexcept { return value_; }
  /// Threshold on the statistic() scale.
  double log_threshold() const noexcept { return log_threshold_; }

  /// Statistic on its natural scale (R_n, W_n or Lambda_n).
  double natural_value() const { return kind_ == DetectorKind::kCusum ? value_ : std::exp(value_); }

  /// Feeds one LLR increment; returns true once the detector has stopped.
  bool update(double z) {
    if (stopped()) throw AlreadyStopped("detector stopped at n = " + std::to_string(*stop_time_));
    switch (kind_) {
      case DetectorKind::kShiryaevRoberts:
        // R_n = (1 + R_{n-1}) e^z
        value_ = z + log1p_exp(value_);
        break;
      case DetectorKind::kCusum:
        // W_n = max(W_{n-1}, 0) + z
        value_ = std::max(value_, 0.0) + z;
        break;
      case DetectorKind::kShiryaev:
        // Lambda_n = (Lambda_{n-1} + 1) e^z / (1 - rho)
        value_ = log_inflation_ + z + log1p_exp(value_);
        break;
    }
    ++n_;
    if (value_ >= log_threshold_) stop_time_ = n_;
    return stopped();
  }

 private:
  DetectorKind kind_;
  double rho_ = 0.0;
  double log_threshold_ = 0.0;
  double log_inflation_ = 0.0;
  double value_ = 0.0;
  std::uint64_t n_ = 0;
  std::optional<std::uint64_t> stop_time_;
};

namespace detail {
inline void require_kind(const DetectorState& s, DetectorKind k) {
  if (s.kind() != k) throw OutOfRange("detector is " + to_string(s.kind()) + ", expected " + to_string(k));
}
}  // namespace detail

inline DetectorState& sr_update(DetectorState& s, double z) {
  detail::require_kind(s, DetectorKind::kShiryaevRoberts);
  s.update(z);
  return s;
}

inline DetectorState& cusum_update(DetectorState& s, double z) {
  detail::require_kind(s, DetectorKind::kCusum);
  s.update(z);
  return s;
}

inline DetectorState& shiryaev_update(DetectorState& s, double z) {
  detail::require_kind(s, DetectorKind::kShiryaev);
  s.update(z);
  return s;
}

/// Result of running a stopping rule up to a finite horizon. When censored,
/// `tau` holds the horizon and the true stopping time exceeds it.
struct StopOutcome {
  std::uint64_t tau = 0;
  bool censored = false;
};

/// Runs several detectors on one simulated path (common random numbers) until
/// all have stopped or the horizon is reached.
inline std::vector<StopOutcome> run_detectors_to_stop(std::span<const DetectorConfig> configs,
                                                      const ChangePointModel& model, std::uint64_t nu,
                                                      std::uint64_t horizon, Rng& rng) {
  std::vector<DetectorState> states;
  states.reserve(configs.size());
  for (const auto& c : configs) states.emplace_back(c);
  std::vector<StopOutcome> out(configs.size(), StopOutcome{horizon, true});

  MarkovState x = model.initial_state(rng);
  MarkovState y(model.dimension());
  std::size_t running = configs.size();
  for (std::uint64_t n = 1; n <= horizon && running > 0; ++n) {
    model.transition(n <= nu ? Regime::kPre : Regime::kPost, x, y, rng);
    const double z = model.llr(y, x);
    for (std::size_t i = 0; i < states.size(); ++i) {
      if (states[i].stopped()) continue;
      if (states[i].update(z)) {
        out[i] = StopOutcome{n, false};
        --running;
      }
    }
    std::swap(x, y);
  }
  return out;
}

/// Feeds llr_step increments from a path with change point nu into a fresh
/// detector until it stops or `horizon` observations have been used.
inline StopOutcome run_to_stop(const DetectorConfig& config, const ChangePointModel& model, std::uint64_t nu,
                               std::uint64_t horizon, Rng& rng) {
  return run_detectors_to_stop(std::span(&config, 1), model, nu, horizon, rng).front();
}

/// Stopping rule backed by a detector on a model; usable wherever the risk
/// estimators expect a callable (nu, horizon, rng) -> StopOutcome.
struct DetectorRule {
  const ChangePointModel* model;
  DetectorConfig config;

  StopOutcome operator()(std::uint64_t nu, std::uint64_t horizon, Rng& rng) const {
    return run_to_stop(config, *model, nu, horizon, rng);
  }
};

}  // namespace qcd
