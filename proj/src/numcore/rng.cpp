#include "awml/numcore/rng.hpp"

#include <cmath>
#include <numbers>

namespace awml::num {

std::uint64_t mix64(std::uint64_t x) {
  // SplitMix64 finalizer.
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

CounterRng CounterRng::derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t key = mix64(seed);
  for (auto p : path) key = mix64(key ^ mix64(p + 0x632BE59BD9B4E019ULL));
  return CounterRng(key);
}

CounterRng CounterRng::fork(std::uint64_t tag) const {
  return CounterRng(mix64(key_ ^ mix64(tag + 0xD6E8FEB86659FD93ULL)));
}

std::uint64_t CounterRng::next_u64() {
  const std::uint64_t n = counter_++;
  return mix64(key_ + mix64(n));
}

double CounterRng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double CounterRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::size_t CounterRng::below(std::size_t n) {
  if (n <= 1) return 0;
  // Rejection keeps the result exactly uniform.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return static_cast<std::size_t>(x % n);
}

double CounterRng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace awml::num
