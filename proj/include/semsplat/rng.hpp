#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace semsplat {

// Seeded generator with platform-independent draws. The engine is
// std::mt19937_64 (fully specified by the standard); the conversions to
// uniform/normal are done here because std distributions are
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  // Fisher-Yates; first `count` entries become a uniform sample without
  // replacement.
  template <typename T>
  void partial_shuffle(std::vector<T>& values, std::size_t count) {
    for (std::size_t i = 0; i < count && i + 1 < values.size(); ++i) {
      std::size_t j = i + index(values.size() - i);
      std::swap(values[i], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// splitmix64 mix of (seed, stream); used to give each view / stage its own
// independent stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace semsplat
