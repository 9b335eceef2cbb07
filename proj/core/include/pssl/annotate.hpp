#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pssl {

// Population-moment shape statistics of one pulse.
struct PulseStats {
  double kurtosis = 0.0;  // E[(x - mu)^4] / sigma^4
  double skewness = 0.0;  // E[(x - mu)^3] / sigma^3
  double std_dev = 0.0;   // sqrt(E[(x - mu)^2])
};

// Throws DegeneratePulse when the variance falls below 1e-12.
PulseStats pulse_stats(const std::vector<double>& values);

// Per-signal acceptance bands: mean +/- 2 std of each statistic across the
// signal's pulses.
struct StatBands {
  double kurt_lo, kurt_hi;
  double skew_lo, skew_hi;
  double std_lo, std_hi;
};

// Requires at least 3 pulses (AnnotationError otherwise).
StatBands stat_bands(const std::vector<PulseStats>& stats);

struct GroupAnnotation {
  std::vector<PulseStats> stats;
  std::vector<bool> artifact;  // true when flagged
  StatBands bands;
};

// Flags a pulse when any one statistic falls strictly outside its band;
// values exactly on a boundary count as clean. Bands are formed from the
// same group that is annotated.
GroupAnnotation annotate_group(const std::vector<std::vector<double>>& pulses);

struct LabelRow {
  std::uint32_t signal_id = 0;
  std::uint32_t pulse_index = 0;
  bool artifact = false;
  PulseStats stats;
};

// Columns: signal_id, pulse_index, label, kurtosis, skewness, std.
void write_labels_csv(const std::string& path, const std::vector<LabelRow>& rows);
std::vector<LabelRow> read_labels_csv(const std::string& path);

}  // namespace pssl
