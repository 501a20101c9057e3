#pragma once

#include <cstdint>

namespace dpodyn {

// Counter-based generator: the value at (key, counter) is a pure function of
// both, so any stream can be evaluated in any order or split across threads
// without changing a single bit.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  // Derive an independent stream key from a seed and a stream index.
  static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t bits_at(std::uint64_t counter) const;
  // Uniform in the open interval (0, 1).
  double uniform_at(std::uint64_t counter) const;
  // Standard normal built from the uniforms at counters 2k and 2k+1.
  double normal_at(std::uint64_t k) const;

  // Sequential interface on top of the counter.
  std::uint64_t next_bits() { return bits_at(counter_++); }
  double next_uniform() { return uniform_at(counter_++); }
  double next_normal();
  // Uniform integer in [0, bound), bound > 0. Rejection sampling, no modulo bias.
  std::uint64_t next_below(std::uint64_t bound);

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace dpodyn
