#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "pssl/annotate.hpp"
#include "pssl/errors.hpp"
#include "pssl/prng.hpp"
#include "testutil.hpp"

using namespace pssl;

namespace {

// Band oracle mirroring the shipped operation order (sequential two-pass
// moments), so agreement must be exact, not approximate.
void oracle_band(const std::vector<double>& xs, double& lo, double& hi) {
  double mean = 0.0;
  for (double v : xs) mean += v;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double v : xs) var += (v - mean) * (v - mean);
  var /= static_cast<double>(xs.size());
  const double sd = std::sqrt(var);
  lo = mean - 2.0 * sd;
  hi = mean + 2.0 * sd;
}

std::vector<double> random_pulse(Prng& rng, std::size_t n = 64) {
  std::vector<double> v(n);
  for (double& e : v) e = rng.normal(0.0, 1.0) + 0.3 * rng.uniform_real(-1.0, 1.0);
  return v;
}

}  // namespace

TEST_CASE("pulse_stats on {1,2,3,4,5}") {
  PulseStats s = pulse_stats({1, 2, 3, 4, 5});
  CHECK(s.kurtosis == doctest::Approx(1.7).epsilon(1e-14));
  CHECK(std::abs(s.skewness) <= 1e-14);
  CHECK(s.std_dev == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
}

TEST_CASE("pulse_stats on {0,0,2,2}") {
  PulseStats s = pulse_stats({0, 0, 2, 2});
  CHECK(s.std_dev == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(s.skewness) <= 1e-15);
  CHECK(s.kurtosis == doctest::Approx(1.0).epsilon(1e-15));  // two-point symmetric
}

TEST_CASE("symmetric pulses have zero skewness") {
  Prng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> half(32);
    for (double& v : half) v = rng.uniform_real(-2.0, 2.0);
    std::vector<double> sym = half;
    // Mirror around 0: the multiset {x} u {-x} is symmetric.
    for (double v : half) sym.push_back(-v);
    PulseStats s = pulse_stats(sym);
    CHECK(std::abs(s.skewness) <= 1e-12);
  }
}

TEST_CASE("kurtosis is always at least 1") {
  Prng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    PulseStats s = pulse_stats(random_pulse(rng));
    CHECK(s.kurtosis >= 1.0);
  }
}

TEST_CASE("degenerate and empty pulses are rejected") {
  CHECK_THROWS_AS(pulse_stats(std::vector<double>(20, 3.14)), DegeneratePulse);
  CHECK_THROWS_AS(pulse_stats({}), ContractError);
}

TEST_CASE("stat_bands needs at least three pulses") {
  std::vector<PulseStats> two = {{1.5, 0.0, 1.0}, {1.6, 0.1, 1.1}};
  CHECK_THROWS_AS(stat_bands(two), AnnotationError);
  two.push_back({1.7, -0.1, 0.9});
  CHECK_NOTHROW(stat_bands(two));
}

TEST_CASE("stat_bands hand example") {
  // kurt {1, 2, 3}: mean 2, sd sqrt(2/3).
  std::vector<PulseStats> stats = {{1.0, 0.0, 1.0}, {2.0, 0.0, 1.0}, {3.0, 0.0, 1.0}};
  StatBands b = stat_bands(stats);
  const double sd = std::sqrt(2.0 / 3.0);
  CHECK(b.kurt_lo == doctest::Approx(2.0 - 2.0 * sd).epsilon(1e-14));
  CHECK(b.kurt_hi == doctest::Approx(2.0 + 2.0 * sd).epsilon(1e-14));
  CHECK(b.skew_lo == doctest::Approx(0.0));
  CHECK(b.skew_hi == doctest::Approx(0.0));
  CHECK(b.std_lo == doctest::Approx(1.0));
  CHECK(b.std_hi == doctest::Approx(1.0));
}

TEST_CASE("a far outlier falls outside the band while the rest stay inside") {
  // One kurtosis far above the other nineteen: the band must exclude it and
  // keep the rest inside.
  std::vector<PulseStats> stats;
  for (int i = 0; i < 19; ++i)
    stats.push_back({2.0 + 0.01 * static_cast<double>(i % 5), 0.0, 1.0});
  stats.push_back({12.0, 0.0, 1.0});
  StatBands b = stat_bands(stats);
  CHECK(stats.back().kurtosis > b.kurt_hi);
  for (int i = 0; i < 19; ++i) {
    CHECK(stats[static_cast<std::size_t>(i)].kurtosis >= b.kurt_lo);
    CHECK(stats[static_cast<std::size_t>(i)].kurtosis <= b.kurt_hi);
  }
}

TEST_CASE("identical pulses are all clean: boundary values do not flag") {
  std::vector<double> base = {0.1, 0.9, 0.4, 0.7, 0.2, 0.8, 0.5};
  std::vector<std::vector<double>> group(12, base);
  GroupAnnotation ann = annotate_group(group);
  REQUIRE(ann.artifact.size() == 12);
  for (bool f : ann.artifact) CHECK_FALSE(f);
}

TEST_CASE("a single extreme pulse is the only one flagged") {
  // Scaling by a power of two scales std_dev exactly and leaves kurtosis
  // and skewness bit-identical, so only the std band can differ.
  std::vector<double> base = {0.1, 0.9, 0.4, 0.7, 0.2, 0.8, 0.5, 0.3};
  std::vector<std::vector<double>> group(19, base);
  std::vector<double> outlier = base;
  for (double& v : outlier) v *= 4.0;
  group.push_back(outlier);

  GroupAnnotation ann = annotate_group(group);
  REQUIRE(ann.artifact.size() == 20);
  for (std::size_t i = 0; i < 19; ++i) CHECK_FALSE(ann.artifact[i]);
  CHECK(ann.artifact[19]);
  CHECK(ann.stats[19].kurtosis == ann.stats[0].kurtosis);
  CHECK(ann.stats[19].skewness == ann.stats[0].skewness);
  CHECK(ann.stats[19].std_dev == 4.0 * ann.stats[0].std_dev);
}

TEST_CASE("flags are invariant under affine rescaling of the whole group") {
  Prng rng(3);
  std::vector<std::vector<double>> group;
  for (int i = 0; i < 15; ++i) group.push_back(random_pulse(rng));
  // Two blatant artifacts.
  group[4] = random_pulse(rng);
  for (double& v : group[4]) v *= 30.0;
  group[9] = random_pulse(rng);
  group[9][10] += 50.0;

  GroupAnnotation before = annotate_group(group);
  std::vector<std::vector<double>> scaled = group;
  for (auto& p : scaled)
    for (double& v : p) v = 8.0 * v + 0.5;
  GroupAnnotation after = annotate_group(scaled);
  REQUIRE(before.artifact.size() == after.artifact.size());
  for (std::size_t i = 0; i < before.artifact.size(); ++i)
    CHECK(before.artifact[i] == after.artifact[i]);
  CHECK(before.artifact[4]);
  CHECK(before.artifact[9]);
}

TEST_CASE("bands agree exactly with the brute-force oracle on random groups") {
  Prng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3 + static_cast<std::size_t>(rng.uniform_below(30));
    std::vector<std::vector<double>> group;
    for (std::size_t i = 0; i < n; ++i)
      group.push_back(random_pulse(rng, 16 + rng.uniform_below(48)));

    GroupAnnotation ann = annotate_group(group);

    std::vector<double> kurt, skew, sd;
    for (const auto& p : group) {
      PulseStats s = pulse_stats(p);
      kurt.push_back(s.kurtosis);
      skew.push_back(s.skewness);
      sd.push_back(s.std_dev);
    }
    double lo, hi;
    oracle_band(kurt, lo, hi);
    CHECK(ann.bands.kurt_lo == lo);
    CHECK(ann.bands.kurt_hi == hi);
    oracle_band(skew, lo, hi);
    CHECK(ann.bands.skew_lo == lo);
    CHECK(ann.bands.skew_hi == hi);
    oracle_band(sd, lo, hi);
    CHECK(ann.bands.std_lo == lo);
    CHECK(ann.bands.std_hi == hi);

    for (std::size_t i = 0; i < n; ++i) {
      const bool expect = kurt[i] < ann.bands.kurt_lo || kurt[i] > ann.bands.kurt_hi ||
                          skew[i] < ann.bands.skew_lo || skew[i] > ann.bands.skew_hi ||
                          sd[i] < ann.bands.std_lo || sd[i] > ann.bands.std_hi;
      CHECK(ann.artifact[i] == expect);
    }
  }
}

TEST_CASE("labels CSV round trip") {
  std::vector<LabelRow> rows;
  Prng rng(5);
  for (std::uint32_t i = 0; i < 25; ++i) {
    LabelRow r;
    r.signal_id = i / 7;
    r.pulse_index = i % 7;
    r.artifact = rng.bernoulli(0.3);
    r.stats = {rng.uniform_real(1.0, 5.0), rng.uniform_real(-1.0, 1.0),
               rng.uniform_real(0.1, 3.0)};
    rows.push_back(r);
  }
  pssl::test::TempDir dir;
  const std::string path = dir.file("labels.csv");
  write_labels_csv(path, rows);
  auto back = read_labels_csv(path);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].signal_id == rows[i].signal_id);
    CHECK(back[i].pulse_index == rows[i].pulse_index);
    CHECK(back[i].artifact == rows[i].artifact);
    CHECK(back[i].stats.kurtosis == rows[i].stats.kurtosis);
    CHECK(back[i].stats.skewness == rows[i].stats.skewness);
    CHECK(back[i].stats.std_dev == rows[i].stats.std_dev);
  }
}
