#include "pssl/annotate.hpp"

#include <cmath>

#include "pssl/csv.hpp"
#include "pssl/errors.hpp"

namespace pssl {

PulseStats pulse_stats(const std::vector<double>& values) {
  const std::size_t n = values.size();
  if (n == 0) throw ContractError("pulse_stats: empty input");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);

  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : values) {
    const double d = v - mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= static_cast<double>(n);
  m3 /= static_cast<double>(n);
  m4 /= static_cast<double>(n);
  if (m2 < 1e-12) throw DegeneratePulse("pulse_stats: variance below 1e-12");

  PulseStats s;
  s.std_dev = std::sqrt(m2);
  s.skewness = m3 / (m2 * s.std_dev);
  s.kurtosis = m4 / (m2 * m2);
  return s;
}

namespace {

void band_of(const std::vector<double>& xs, double& lo, double& hi) {
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

}  // namespace

StatBands stat_bands(const std::vector<PulseStats>& stats) {
  if (stats.size() < 3)
    throw AnnotationError("stat_bands: need at least 3 pulses per signal, got " +
                          std::to_string(stats.size()));
  std::vector<double> kurt, skew, sd;
  kurt.reserve(stats.size());
  skew.reserve(stats.size());
  sd.reserve(stats.size());
  for (const PulseStats& s : stats) {
    kurt.push_back(s.kurtosis);
    skew.push_back(s.skewness);
    sd.push_back(s.std_dev);
  }
  StatBands b{};
  band_of(kurt, b.kurt_lo, b.kurt_hi);
  band_of(skew, b.skew_lo, b.skew_hi);
  band_of(sd, b.std_lo, b.std_hi);
  return b;
}

GroupAnnotation annotate_group(const std::vector<std::vector<double>>& pulses) {
  GroupAnnotation out;
  out.stats.reserve(pulses.size());
  for (const auto& p : pulses) out.stats.push_back(pulse_stats(p));
  out.bands = stat_bands(out.stats);
  out.artifact.reserve(pulses.size());
  for (const PulseStats& s : out.stats) {
    const bool flagged = s.kurtosis < out.bands.kurt_lo || s.kurtosis > out.bands.kurt_hi ||
                         s.skewness < out.bands.skew_lo || s.skewness > out.bands.skew_hi ||
                         s.std_dev < out.bands.std_lo || s.std_dev > out.bands.std_hi;
    out.artifact.push_back(flagged);
  }
  return out;
}

void write_labels_csv(const std::string& path, const std::vector<LabelRow>& rows) {
  std::vector<std::vector<std::string>> csv;
  csv.reserve(rows.size() + 1);
  csv.push_back({"signal_id", "pulse_index", "label", "kurtosis", "skewness", "std"});
  for (const LabelRow& r : rows) {
    csv.push_back({std::to_string(r.signal_id), std::to_string(r.pulse_index),
                   r.artifact ? "artifact" : "clean", fmt_double(r.stats.kurtosis),
                   fmt_double(r.stats.skewness), fmt_double(r.stats.std_dev)});
  }
  write_csv(path, csv);
}

std::vector<LabelRow> read_labels_csv(const std::string& path) {
  const auto rows = read_csv(path);
  if (rows.empty()) throw DataError(path + ": empty labels file");
  std::vector<LabelRow> out;
  out.reserve(rows.size() - 1);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 6)
      throw DataError(path + ": row " + std::to_string(i) + " must have 6 fields");
    LabelRow lr;
    lr.signal_id = static_cast<std::uint32_t>(parse_int(r[0], path + " signal_id"));
    lr.pulse_index = static_cast<std::uint32_t>(parse_int(r[1], path + " pulse_index"));
    if (r[2] == "artifact") lr.artifact = true;
    else if (r[2] == "clean") lr.artifact = false;
    else throw DataError(path + ": unknown label '" + r[2] + "'");
    lr.stats.kurtosis = parse_double(r[3], path + " kurtosis");
    lr.stats.skewness = parse_double(r[4], path + " skewness");
    lr.stats.std_dev = parse_double(r[5], path + " std");
    out.push_back(lr);
  }
  return out;
}

}  // namespace pssl
