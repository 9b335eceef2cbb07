#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pssl/prng.hpp"

namespace pssl {

enum class ArtifactKind { spike, dropout, noise_burst, saturation };

std::string to_string(ArtifactKind k);
ArtifactKind artifact_kind_from_string(const std::string& s);

// Synthetic pulse-train generator. Each signal carries a fixed per-signal
// heart rate; individual cycles jitter around it. A pulse is two Gaussians
// over the cycle phase: systolic peak at 30% (amplitude 1.0, width 8% of
// the cycle) and dicrotic bump at 65% (amplitude 0.35, width 12%).
struct SynthConfig {
  std::uint64_t seed = 42;
  std::size_t n_signals = 20;
  double duration_s = 30.0;
  double fs = 128.0;
  // Per-signal heart rate in Hz; cycle length must stay within [0.3 s, 1.0 s].
  double heart_rate_lo = 1.0;
  double heart_rate_hi = 3.3;
  double hr_jitter = 0.05;  // per-pulse relative cycle-length jitter
  double artifact_fraction = 0.25;
  std::vector<ArtifactKind> kinds{ArtifactKind::spike, ArtifactKind::dropout,
                                  ArtifactKind::noise_burst, ArtifactKind::saturation};
  double baseline_amp = 0.2;  // 0.2 Hz baseline wander amplitude

  void validate() const;  // throws ConfigError
};

struct GroundTruthEntry {
  std::uint32_t signal_id = 0;
  std::uint32_t pulse_index = 0;   // position within its signal
  std::size_t onset = 0;           // sample index of the pulse start
  std::size_t length = 0;          // cycle length in samples
  bool artifact = false;
  ArtifactKind kind = ArtifactKind::spike;  // meaningful only when artifact
};

struct SyntheticSignal {
  std::uint32_t id = 0;
  double fs = 128.0;
  std::vector<double> samples;
};

struct SynthCorpus {
  std::vector<SyntheticSignal> signals;
  std::vector<GroundTruthEntry> ground_truth;
};

// Deterministic for a given config; each signal draws from its own child
// stream, so corpora agree signal-by-signal across n_signals changes.
SynthCorpus generate_corpus(const SynthConfig& cfg);

// Pure template evaluation at cycle phase in [0, 1).
double pulse_template(double phase);

// One row per signal: fs, then the samples.
void write_signals_csv(const std::string& path, const std::vector<SyntheticSignal>& signals);
std::vector<SyntheticSignal> read_signals_csv(const std::string& path);

// Columns: signal_id, pulse_index, onset, length, artifact, kind.
void write_ground_truth_csv(const std::string& path, const std::vector<GroundTruthEntry>& gt);
std::vector<GroundTruthEntry> read_ground_truth_csv(const std::string& path);

}  // namespace pssl
