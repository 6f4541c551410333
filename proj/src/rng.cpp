#include "drnet/rng.hpp"

#include <cmath>
#include <numbers>

namespace drnet {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t RngStream::mix(std::initializer_list<std::uint64_t> values) {
  std::uint64_t h = 0x6A09E667F3BCC909ull;
  for (std::uint64_t v : values) h = splitmix64(h ^ splitmix64(v));
  return h;
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t substream)
    : seed_(seed), substream_(substream), key_(mix({seed, substream})) {}

std::uint64_t RngStream::next_u64() {
  return splitmix64(key_ ^ splitmix64(counter_++));
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_normal_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) return 0;
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return v % n;
}

}  // namespace drnet
