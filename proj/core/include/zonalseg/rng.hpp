#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace zonalseg {

// Deterministic random stream (xoshiro256** seeded via splitmix64).
// Implemented here rather than with <random> distributions so that the
// produced sequences are identical across standard libraries; every run
// artifact (datasets, weights, shuffles) must be reproducible from a seed.
class Rng {
public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform double in [0, 1) with 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);

  // Unbiased integer in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n);

  bool coin_flip();  // p = 0.5

  // Standard normal via the Marsaglia polar method (a spare value is cached).
  double normal();
  double normal(double mean, double sd);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  // Independent stream derived from this stream's seed and a tag. Forks with
  // equal tags off the same parent coincide; callers pick unique tags.
  Rng fork(std::string_view tag) const;

  std::uint64_t seed() const { return seed_; }

private:
  std::uint64_t seed_;
  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// FNV-1a hash, used for stable tag-based seed derivation.
std::uint64_t hash64(std::string_view s);

}  // namespace zonalseg
