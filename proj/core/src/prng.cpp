#include "pssl/prng.hpp"

#include <cmath>
#include <numbers>

#include "pssl/errors.hpp"

namespace pssl {
namespace {

// splitmix64; used only to expand seeds and derive child seeds.
std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Prng::Prng(std::uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

Prng Prng::split(std::uint64_t tag) const {
  return Prng(mix(seed_ ^ mix(tag + 1)));
}

std::uint64_t Prng::next_u64() { return engine_(); }

std::uint64_t Prng::uniform_below(std::uint64_t n) {
  if (n == 0) throw ContractError("uniform_below: n must be positive");
  // Rejection sampling over the largest multiple of n.
  const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

std::int64_t Prng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (lo > hi) throw ContractError("uniform_int: lo > hi");
  const std::uint64_t span =
      static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
  return lo + static_cast<std::int64_t>(uniform_below(span));
}

double Prng::uniform_real(double lo, double hi) {
  if (!(lo <= hi)) throw ContractError("uniform_real: lo > hi");
  const double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;  // [0, 1)
  return lo + u * (hi - lo);
}

double Prng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  // Box-Muller; u1 in (0, 1] so the log is finite.
  const double u1 =
      (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_normal_ = true;
  return r * std::cos(theta);
}

double Prng::normal(double mean, double stddev) { return mean + stddev * normal(); }

bool Prng::bernoulli(double p) {
  if (p < 0.0 || p > 1.0) throw ContractError("bernoulli: p outside [0, 1]");
  return uniform_real(0.0, 1.0) < p;
}

std::vector<std::size_t> Prng::sample_without_replacement(std::size_t n, std::size_t k) {
  if (k > n) throw ContractError("sample_without_replacement: k > n");
  // Partial Fisher-Yates over an index vector.
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(uniform_below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace pssl
