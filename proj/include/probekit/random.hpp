#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace probekit {

// splitmix64 finalizer; used to derive independent per-stream seeds.
std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream);

// Seeded generator with platform-independent draws. std::mt19937_64 output is
// fully specified by the standard; the distributions below avoid the
// implementation-defined std::*_distribution classes.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n); n > 0.
  std::size_t index(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace probekit
