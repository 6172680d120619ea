#pragma once

#include <cstdint>

namespace sparsecut {

// SplitMix64 stream. The integer output depends only on the seed and the
// number of draws. Gaussian draws use Box-Muller rather than
// std::normal_distribution, whose algorithm is implementation-defined; they
// depend on the platform libm only through log/sin/cos.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  [[nodiscard]] std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal(double mean = 0.0, double stddev = 1.0);

  // Independent child stream keyed by `stream`; does not advance this one.
  [[nodiscard]] SeededRng split(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// The SplitMix64 finalizer, exposed for key derivation.
std::uint64_t mix64(std::uint64_t z);

}  // namespace sparsecut
