#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>

namespace awml::num {

// Counter-based generator: the n-th draw depends only on (key, n), so
// independent streams are obtained by deriving keys, never by sharing state.
class CounterRng {
 public:
  CounterRng() = default;
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  // Key derived from a seed and a path of stream identifiers.
  static CounterRng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path);
  CounterRng fork(std::uint64_t tag) const;

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  // Standard normal via Box-Muller.
  double normal();

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  friend bool operator==(const CounterRng&, const CounterRng&) = default;

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace awml::num
