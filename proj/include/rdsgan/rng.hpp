#pragma once

#include <cstdint>
#include <vector>

namespace rdsgan {

// Deterministic, portable PRNG (splitmix64). The <random> distributions are
// implementation-defined, so every random draw used by training, dropout and
// corpus synthesis goes through this class instead.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n); n must be >= 1.
  std::uint64_t uniform_int(std::uint64_t n) {
    return std::uint64_t((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Fisher-Yates.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_int(i)]);
    }
  }

  // Independent stream derived from the current state and a tag. Forking
  // does not advance this generator, so fork(k) is reproducible.
  SeededRng fork(std::uint64_t tag) const {
    return SeededRng(state_ + 0x9E3779B97F4A7C15ULL * (tag + 1));
  }

 private:
  std::uint64_t state_;
};

}  // namespace rdsgan
