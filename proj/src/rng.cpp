#include "dpodyn/rng.hpp"

#include <cmath>
#include <numbers>

namespace dpodyn {
namespace {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

}  // namespace

std::uint64_t CounterRng::derive_key(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed + kGolden) ^ mix64(stream * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL));
}

std::uint64_t CounterRng::bits_at(std::uint64_t counter) const {
  // Two rounds keep nearby (key, counter) pairs decorrelated.
  return mix64(mix64(key_ ^ (counter * kGolden)) + counter);
}

double CounterRng::uniform_at(std::uint64_t counter) const {
  return (static_cast<double>(bits_at(counter) >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal_at(std::uint64_t k) const {
  const double u1 = uniform_at(2 * k);
  const double u2 = uniform_at(2 * k + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double CounterRng::next_normal() {
  const double u1 = next_uniform();
  const double u2 = next_uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t CounterRng::next_below(std::uint64_t bound) {
  const std::uint64_t limit = bound * (~std::uint64_t{0} / bound);
  for (;;) {
    const std::uint64_t x = next_bits();
    if (x < limit) return x % bound;
  }
}

}  // namespace dpodyn
