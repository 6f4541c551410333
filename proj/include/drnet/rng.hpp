#pragma once

#include <cstdint>
#include <initializer_list>

namespace drnet {

/// Counter-based random stream. A (seed, substream) pair fully determines the
/// sequence of draws, independent of platform or standard library.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t substream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t substream() const { return substream_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Independent stream derived from this stream's seed.
  RngStream derive(std::uint64_t substream) const { return RngStream(seed_, mix({substream_, substream})); }

  /// Order-sensitive 64-bit hash used to build substream ids.
  static std::uint64_t mix(std::initializer_list<std::uint64_t> values);

 private:
  std::uint64_t seed_;
  std::uint64_t substream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace drnet
