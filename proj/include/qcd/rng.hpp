#pragma once

#include <cstdint>
#include <random>

namespace qcd {

/// Purpose tags keep streams drawn for different tasks from colliding even
/// when they share a base seed and an index.
enum class StreamTag : std::uint32_t {
  kPath = 1,
  kReplicate = 2,
  kAuditCell = 3,
  kKlEstimate = 4,
  kDemo = 5,
};

/// One independent random stream. Satisfies UniformRandomBitGenerator so it
/// can feed any std:: distribution; standard normals go through a cached
/// distribution object so both Box–Muller variates are used.
class Rng {
 public:
  using result_type = std::mt19937_64::result_type;

  Rng() = default;
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  explicit Rng(std::seed_seq& seq) : engine_(seq) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  double normal() { return normal_(engine_); }
  double uniform() { return std::uniform_real_distribution<double>{}(engine_); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

/// Independent stream for replicate/task `index` under `base_seed`.
///
/// The stream key is base_seed XOR index, expanded through std::seed_seq
/// together with the tag. std::seed_seq is fully specified by the standard,
/// so the raw bits are reproducible everywhere; variates drawn through
/// std::*_distribution are reproducible per standard library.
inline Rng make_stream(std::uint64_t base_seed, std::uint64_t index,
                       StreamTag tag = StreamTag::kReplicate) {
  const std::uint64_t key = base_seed ^ index;
  std::seed_seq seq{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(index)};
  return Rng(seq);
}

}  // namespace qcd
