#include "occlume/common/rng.hpp"

#include <cmath>
#include <numbers>

namespace occlume {

double CounterRng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t CounterRng::below(std::uint64_t n) {
  if (n <= 1) return 0;
  // Accept only [2^64 mod n, 2^64), whose length is a multiple of n.
  const std::uint64_t threshold = (0 - n) % n;
  std::uint64_t x = (*this)();
  while (x < threshold) x = (*this)();
  return x % n;
}

}  // namespace occlume
