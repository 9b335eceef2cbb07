#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "doctest.h"
#include "pssl/prng.hpp"

using pssl::Prng;

TEST_CASE("same seed gives identical streams") {
  Prng a(1234), b(1234);
  for (int i = 0; i < 256; ++i) CHECK(a.next_u64() == b.next_u64());
  Prng c(1234), d(1235);
  bool all_equal = true;
  for (int i = 0; i < 64; ++i) all_equal = all_equal && (c.next_u64() == d.next_u64());
  CHECK_FALSE(all_equal);
}

TEST_CASE("split depends only on seed and tag, not on parent draws") {
  Prng fresh(99);
  Prng drained(99);
  for (int i = 0; i < 1000; ++i) (void)drained.next_u64();
  Prng c1 = fresh.split(7);
  Prng c2 = drained.split(7);
  for (int i = 0; i < 128; ++i) CHECK(c1.next_u64() == c2.next_u64());
}

TEST_CASE("split children with different tags diverge from each other and the parent") {
  Prng root(5);
  Prng a = root.split(0);
  Prng b = root.split(1);
  CHECK(a.next_u64() != b.next_u64());
  Prng parent_copy(5);
  Prng child = parent_copy.split(0);
  CHECK(child.next_u64() != Prng(5).next_u64());
}

TEST_CASE("uniform_below stays in range and covers all residues") {
  Prng rng(7);
  std::vector<int> counts(8, 0);
  for (int i = 0; i < 8000; ++i) {
    std::uint64_t v = rng.uniform_below(8);
    REQUIRE(v < 8);
    ++counts[static_cast<std::size_t>(v)];
  }
  for (int c : counts) CHECK(c > 800);  // expected 1000 each
  CHECK(rng.uniform_below(1) == 0);
}

TEST_CASE("uniform_int is inclusive on both ends") {
  Prng rng(11);
  bool saw_lo = false, saw_hi = false;
  for (int i = 0; i < 2000; ++i) {
    std::int64_t v = rng.uniform_int(-3, 3);
    REQUIRE(v >= -3);
    REQUIRE(v <= 3);
    saw_lo = saw_lo || v == -3;
    saw_hi = saw_hi || v == 3;
  }
  CHECK(saw_lo);
  CHECK(saw_hi);
  CHECK(rng.uniform_int(5, 5) == 5);
}

TEST_CASE("uniform_real respects the half-open interval and its mean") {
  Prng rng(13);
  double sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double v = rng.uniform_real(2.0, 4.0);
    REQUIRE(v >= 2.0);
    REQUIRE(v < 4.0);
    sum += v;
  }
  CHECK(sum / n == doctest::Approx(3.0).epsilon(0.01));
}

TEST_CASE("normal has roughly standard moments") {
  Prng rng(17);
  const int n = 50000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    double v = rng.normal();
    sum += v;
    sumsq += v * v;
  }
  double mean = sum / n;
  double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(var == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("normal(mean, stddev) shifts and scales") {
  Prng rng(19);
  const int n = 50000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    double v = rng.normal(10.0, 0.5);
    sum += v;
    sumsq += v * v;
  }
  double mean = sum / n;
  double var = sumsq / n - mean * mean;
  CHECK(mean == doctest::Approx(10.0).epsilon(0.002));
  CHECK(std::sqrt(var) == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("bernoulli tracks its probability and handles the endpoints") {
  Prng rng(23);
  int hits = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) hits += rng.bernoulli(0.3) ? 1 : 0;
  CHECK(static_cast<double>(hits) / n == doctest::Approx(0.3).epsilon(0.05));
  for (int i = 0; i < 100; ++i) {
    CHECK_FALSE(rng.bernoulli(0.0));
    CHECK(rng.bernoulli(1.0));
  }
}

TEST_CASE("shuffle permutes without losing elements and is seed-deterministic") {
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[static_cast<std::size_t>(i)] = i;
  std::vector<int> w = v;
  Prng a(31), b(31);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
  // A 50-element shuffle that returns the identity would be astronomical.
  bool identity = true;
  for (int i = 0; i < 50; ++i) identity = identity && v[static_cast<std::size_t>(i)] == i;
  CHECK_FALSE(identity);
}

TEST_CASE("sample_without_replacement gives k distinct in-range indices") {
  Prng rng(37);
  auto s = rng.sample_without_replacement(100, 20);
  REQUIRE(s.size() == 20);
  std::set<std::size_t> uniq(s.begin(), s.end());
  CHECK(uniq.size() == 20);
  for (std::size_t idx : s) CHECK(idx < 100);

  auto all = rng.sample_without_replacement(10, 10);
  std::set<std::size_t> uniq_all(all.begin(), all.end());
  CHECK(uniq_all.size() == 10);

  CHECK(rng.sample_without_replacement(10, 0).empty());
}

TEST_CASE("copies advance independently") {
  Prng a(41);
  (void)a.next_u64();
  Prng b = a;  // copy carries engine state
  CHECK(a.next_u64() == b.next_u64());
  (void)a.next_u64();
  Prng c = a;
  (void)c.next_u64();
  (void)c.next_u64();
  // a was not advanced by c's draws
  Prng d = a;
  CHECK(a.next_u64() == d.next_u64());
}
