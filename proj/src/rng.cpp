#include "diffurec/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace diffurec {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t Rng::next_u64() {
  ++draws_;
  return engine_();
}

double Rng::uniform() {
  // 53 random mantissa bits.
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal(double mean, double stddev) {
  // Box-Muller, one value per call so the stream position is a simple count.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  return mean + stddev * z;
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(next_u64());
  // Rejection sampling to avoid modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return lo + static_cast<std::int64_t>(x % span);
}

Rng Rng::derive(std::uint64_t stream) const { return Rng(mix_seed(seed_, stream)); }

Tensor sample_gaussian(Rng& rng, const Shape& shape, double mean, double stddev) {
  if (!(stddev >= 0.0)) throw std::invalid_argument("sample_gaussian: negative standard deviation");
  Tensor out(shape);
  if (stddev == 0.0) {
    for (auto& v : out.data()) v = mean;
    return out;
  }
  for (auto& v : out.data()) v = rng.normal(mean, stddev);
  return out;
}

}  // namespace diffurec
