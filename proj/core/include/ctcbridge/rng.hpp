// ctcbridge/rng.hpp
//
// Counter-based RNG: a (seed, counter) pair fully determines every draw,
// independent of platform or stdlib version. splitmix64 core.

#ifndef CTCBRIDGE_RNG_HPP_
#define CTCBRIDGE_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace ctcbridge {

class RngState {
 public:
  explicit RngState(std::uint64_t seed = 0, std::uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() {
    std::uint64_t z = seed_ + 0x9e3779b97f4a7c15ULL * (++counter_);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller (two uniform draws per call).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent stream derived from this seed; used to shard generation.
  RngState fork(std::uint64_t stream) const {
    RngState mixer(seed_ ^ 0x5851f42d4c957f2dULL, stream);
    return RngState(mixer.next_u64());
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace ctcbridge

#endif  // CTCBRIDGE_RNG_HPP_
