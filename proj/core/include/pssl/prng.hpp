#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace pssl {

// Deterministic random source built on std::mt19937_64 with hand-rolled
// distributions, so identical seeds give identical streams on every
// platform (the standard pins the engine but not the distributions).
//
// Streams are splittable: split(tag) derives an independent child stream
// from the parent's seed and the tag alone, so child streams do not depend
// on how much the parent has already drawn.
class Prng {
 public:
  explicit Prng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  // Child stream for substream `tag` (per signal, per run, per epoch...).
  Prng split(std::uint64_t tag) const;

  std::uint64_t next_u64();

  // Unbiased integer in [0, n). n must be > 0.
  std::uint64_t uniform_below(std::uint64_t n);

  // Integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  // Real in [lo, hi).
  double uniform_real(double lo, double hi);

  // Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev);

  // True with probability p.
  bool bernoulli(double p);

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices drawn from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace pssl
