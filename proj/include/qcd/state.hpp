#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "qcd/errors.hpp"

namespace qcd {

/// Point of the Markov state space: a fixed-dimension real vector.
class MarkovState {
 public:
  MarkovState() = default;
  explicit MarkovState(std::size_t dimension) : coords_(dimension, 0.0) {}
  MarkovState(std::initializer_list<double> coords) : coords_(coords) {}
  explicit MarkovState(std::vector<double> coords) : coords_(std::move(coords)) {}

  std::size_t dimension() const noexcept { return coords_.size(); }

  double& operator[](std::size_t i) { return coords_[i]; }
  double operator[](std::size_t i) const { return coords_[i]; }

  std::span<double> coords() noexcept { return coords_; }
  std::span<const double> coords() const noexcept { return coords_; }
  double* data() noexcept { return coords_.data(); }
  const double* data() const noexcept { return coords_.data(); }

  bool all_finite() const noexcept {
    for (double c : coords_)
      if (!std::isfinite(c)) return false;
    return true;
  }

  friend bool operator==(const MarkovState&, const MarkovState&) = default;

 private:
  std::vector<double> coords_;
};

inline void require_dimension(const MarkovState& s, std::size_t expected, const char* what) {
  if (s.dimension() != expected)
    throw DimensionMismatch(std::string(what) + ": expected dimension " + std::to_string(expected) +
                            ", got " + std::to_string(s.dimension()));
}

}  // namespace qcd
