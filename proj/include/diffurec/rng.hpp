#pragma once

#include <cstdint>
#include <random>

#include "diffurec/tensor.hpp"

namespace diffurec {

/// Seeded random stream. Two streams built from the same seed produce the
/// same sequence of draws; single-owner, not thread-safe.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t draws() const noexcept { return draws_; }

  double normal(double mean = 0.0, double stddev = 1.0);
  double uniform();                                   // [0, 1)
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);  // inclusive
  std::uint64_t next_u64();

  /// Independent child stream keyed by `stream`; does not advance this one.
  Rng derive(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::uint64_t draws_ = 0;
  std::mt19937_64 engine_;
};

/// splitmix64 finaliser, used to derive well-separated seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// I.i.d. N(mean, std^2) samples. Throws std::invalid_argument for std < 0.
Tensor sample_gaussian(Rng& rng, const Shape& shape, double mean = 0.0, double stddev = 1.0);

}  // namespace diffurec
