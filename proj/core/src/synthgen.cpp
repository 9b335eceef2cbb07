#include "pssl/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pssl/csv.hpp"
#include "pssl/errors.hpp"

namespace pssl {

std::string to_string(ArtifactKind k) {
  switch (k) {
    case ArtifactKind::spike: return "spike";
    case ArtifactKind::dropout: return "dropout";
    case ArtifactKind::noise_burst: return "noise_burst";
    case ArtifactKind::saturation: return "saturation";
  }
  return "spike";
}

ArtifactKind artifact_kind_from_string(const std::string& s) {
  if (s == "spike") return ArtifactKind::spike;
  if (s == "dropout") return ArtifactKind::dropout;
  if (s == "noise_burst") return ArtifactKind::noise_burst;
  if (s == "saturation") return ArtifactKind::saturation;
  throw ConfigError("unknown artifact kind '" + s + "'");
}

void SynthConfig::validate() const {
  if (n_signals == 0) throw ConfigError("synth: n_signals must be positive");
  if (!(duration_s > 0.0)) throw ConfigError("synth: duration_s must be positive");
  if (!(fs > 0.0)) throw ConfigError("synth: fs must be positive");
  if (!(heart_rate_lo > 0.0) || !(heart_rate_hi >= heart_rate_lo))
    throw ConfigError("synth: heart rate range is empty or non-positive");
  // Cycle lengths stay within the physiologic window [0.3 s, 1.0 s].
  if (1.0 / heart_rate_lo > 1.0 + 1e-12 || 1.0 / heart_rate_hi < 0.3 - 1e-12)
    throw ConfigError("synth: heart rate range leaves the [0.3 s, 1.0 s] cycle window");
  if (hr_jitter < 0.0 || hr_jitter > 0.2)
    throw ConfigError("synth: hr_jitter must lie in [0, 0.2]");
  if (artifact_fraction < 0.0 || artifact_fraction > 1.0)
    throw ConfigError("synth: artifact_fraction must lie in [0, 1]");
  if (artifact_fraction > 0.0 && kinds.empty())
    throw ConfigError("synth: artifact kinds must be non-empty when artifacts are requested");
  if (baseline_amp < 0.0) throw ConfigError("synth: baseline_amp must be non-negative");
}

double pulse_template(double phase) {
  const double d1 = (phase - 0.30) / 0.08;
  const double d2 = (phase - 0.65) / 0.12;
  return std::exp(-0.5 * d1 * d1) + 0.35 * std::exp(-0.5 * d2 * d2);
}

namespace {

struct PulseSpan {
  std::size_t onset;
  std::size_t length;
};

void apply_artifact(std::vector<double>& x, const PulseSpan& p, ArtifactKind kind, Prng& rng) {
  const std::size_t lo = p.onset;
  const std::size_t len = p.length;
  switch (kind) {
    case ArtifactKind::spike: {
      // Single-sample impulse of 3x..6x the systolic amplitude, kept away
      // from the span edges so cycle boundaries survive.
      const std::size_t margin = std::max<std::size_t>(1, len / 10);
      const std::size_t pos =
          lo + margin + static_cast<std::size_t>(rng.uniform_below(len - 2 * margin));
      const double height = rng.uniform_real(3.0, 6.0);
      const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
      x[pos] += sign * height;
      break;
    }
    case ArtifactKind::dropout: {
      // Zero a contiguous 30%..60% stretch of the cycle.
      const std::size_t span = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::lround(static_cast<double>(len) *
                                                  rng.uniform_real(0.30, 0.60))));
      const std::size_t margin = std::max<std::size_t>(1, len / 20);
      const std::size_t max_start = len - margin - span;
      const std::size_t start =
          lo + margin + static_cast<std::size_t>(rng.uniform_below(max_start - margin + 1));
      std::fill(x.begin() + static_cast<std::ptrdiff_t>(start),
                x.begin() + static_cast<std::ptrdiff_t>(start + span), 0.0);
      break;
    }
    case ArtifactKind::noise_burst: {
      for (std::size_t t = lo; t < lo + len; ++t) x[t] += rng.normal(0.0, 0.8);
      break;
    }
    case ArtifactKind::saturation: {
      // Clip the cycle at 60% of its own peak.
      double peak = x[lo];
      for (std::size_t t = lo; t < lo + len; ++t) peak = std::max(peak, x[t]);
      const double level = 0.6 * peak;
      for (std::size_t t = lo; t < lo + len; ++t) x[t] = std::min(x[t], level);
      break;
    }
  }
}

}  // namespace

SynthCorpus generate_corpus(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n_samples =
      static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.fs));
  Prng root(cfg.seed);

  SynthCorpus corpus;
  corpus.signals.reserve(cfg.n_signals);

  for (std::size_t s = 0; s < cfg.n_signals; ++s) {
    Prng rng = root.split(s);
    const double hr = rng.uniform_real(cfg.heart_rate_lo, cfg.heart_rate_hi);
    const double base_cycle = 1.0 / hr;

    // Lay out full cycles; the tail keeps a truncated cycle so the signal
    // has no flat gap, but that partial pulse gets no ground-truth row.
    std::vector<PulseSpan> pulses;
    std::size_t onset = 0;
    while (true) {
      const double jit = cfg.hr_jitter > 0.0
                             ? rng.uniform_real(-cfg.hr_jitter, cfg.hr_jitter)
                             : 0.0;
      const auto len = static_cast<std::size_t>(
          std::llround(cfg.fs * base_cycle * (1.0 + jit)));
      if (onset + len > n_samples) break;
      pulses.push_back({onset, len});
      onset += len;
    }

    std::vector<double> x(n_samples, 0.0);
    for (const PulseSpan& p : pulses) {
      for (std::size_t t = 0; t < p.length; ++t) {
        x[p.onset + t] = pulse_template(static_cast<double>(t) / static_cast<double>(p.length));
      }
    }
    // Truncated trailing cycle at the nominal rate.
    if (onset < n_samples) {
      const auto tail_len =
          static_cast<std::size_t>(std::llround(cfg.fs * base_cycle));
      for (std::size_t t = onset; t < n_samples; ++t) {
        x[t] = pulse_template(static_cast<double>(t - onset) / static_cast<double>(tail_len));
      }
    }

    // Slow baseline wander below the filter passband.
    if (cfg.baseline_amp > 0.0) {
      const double phase0 = rng.uniform_real(0.0, 2.0 * std::numbers::pi);
      for (std::size_t t = 0; t < n_samples; ++t) {
        x[t] += cfg.baseline_amp *
                std::sin(2.0 * std::numbers::pi * 0.2 * static_cast<double>(t) / cfg.fs + phase0);
      }
    }

    // Exactly round(artifact_fraction * n_pulses) cycles are corrupted.
    const auto n_flagged = static_cast<std::size_t>(
        std::lround(cfg.artifact_fraction * static_cast<double>(pulses.size())));
    std::vector<std::size_t> flagged_idx =
        rng.sample_without_replacement(pulses.size(), n_flagged);
    std::vector<bool> flagged(pulses.size(), false);
    std::vector<ArtifactKind> kind_of(pulses.size(), ArtifactKind::spike);
    for (std::size_t i : flagged_idx) {
      flagged[i] = true;
      kind_of[i] = cfg.kinds[rng.uniform_below(cfg.kinds.size())];
      apply_artifact(x, pulses[i], kind_of[i], rng);
    }

    SyntheticSignal sig;
    sig.id = static_cast<std::uint32_t>(s);
    sig.fs = cfg.fs;
    sig.samples = std::move(x);
    corpus.signals.push_back(std::move(sig));

    for (std::size_t i = 0; i < pulses.size(); ++i) {
      GroundTruthEntry e;
      e.signal_id = static_cast<std::uint32_t>(s);
      e.pulse_index = static_cast<std::uint32_t>(i);
      e.onset = pulses[i].onset;
      e.length = pulses[i].length;
      e.artifact = flagged[i];
      e.kind = kind_of[i];
      corpus.ground_truth.push_back(e);
    }
  }
  return corpus;
}

void write_signals_csv(const std::string& path, const std::vector<SyntheticSignal>& signals) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(signals.size());
  for (const auto& sig : signals) {
    std::vector<std::string> row;
    row.reserve(sig.samples.size() + 1);
    row.push_back(fmt_double(sig.fs));
    for (double v : sig.samples) row.push_back(fmt_double(v));
    rows.push_back(std::move(row));
  }
  write_csv(path, rows);
}

std::vector<SyntheticSignal> read_signals_csv(const std::string& path) {
  const auto rows = read_csv(path);
  std::vector<SyntheticSignal> signals;
  signals.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() < 2)
      throw DataError(path + ": signal row " + std::to_string(i) + " has no samples");
    SyntheticSignal sig;
    sig.id = static_cast<std::uint32_t>(i);
    sig.fs = parse_double(rows[i][0], path + " fs");
    if (!(sig.fs > 0.0)) throw DataError(path + ": non-positive fs in row " + std::to_string(i));
    sig.samples.reserve(rows[i].size() - 1);
    for (std::size_t j = 1; j < rows[i].size(); ++j)
      sig.samples.push_back(parse_double(rows[i][j], path + " sample"));
    signals.push_back(std::move(sig));
  }
  return signals;
}

void write_ground_truth_csv(const std::string& path, const std::vector<GroundTruthEntry>& gt) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(gt.size() + 1);
  rows.push_back({"signal_id", "pulse_index", "onset", "length", "artifact", "kind"});
  for (const auto& e : gt) {
    rows.push_back({std::to_string(e.signal_id), std::to_string(e.pulse_index),
                    std::to_string(e.onset), std::to_string(e.length),
                    e.artifact ? "1" : "0", to_string(e.kind)});
  }
  write_csv(path, rows);
}

std::vector<GroundTruthEntry> read_ground_truth_csv(const std::string& path) {
  const auto rows = read_csv(path);
  if (rows.empty()) throw DataError(path + ": empty ground truth file");
  std::vector<GroundTruthEntry> gt;
  gt.reserve(rows.size() - 1);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 6)
      throw DataError(path + ": row " + std::to_string(i) + " must have 6 fields");
    GroundTruthEntry e;
    e.signal_id = static_cast<std::uint32_t>(parse_int(r[0], path + " signal_id"));
    e.pulse_index = static_cast<std::uint32_t>(parse_int(r[1], path + " pulse_index"));
    e.onset = static_cast<std::size_t>(parse_int(r[2], path + " onset"));
    e.length = static_cast<std::size_t>(parse_int(r[3], path + " length"));
    e.artifact = parse_int(r[4], path + " artifact") != 0;
    e.kind = artifact_kind_from_string(r[5]);
    gt.push_back(e);
  }
  return gt;
}

}  // namespace pssl
