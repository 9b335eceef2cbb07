#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pssl {

// Butterworth bandpass specification. `order` is the analog prototype
// order applied in each direction of the zero-phase pass; the digital
// bandpass realizes 2*order poles as `order` second-order sections.
struct FilterSpec {
  double low_cut_hz = 0.5;
  double high_cut_hz = 5.0;
  int order = 4;  // must be even and >= 2
  double fs = 128.0;

  void validate() const;  // throws FilterDesignError
};

struct Biquad {
  double b0, b1, b2;  // numerator
  double a1, a2;      // denominator (a0 normalized to 1)
};

// Designed cascade plus the reflection padding needed for the zero-phase
// pass. pad_len is chosen from the slowest pole radius so that edge
// transients decay below 1e-12 inside the padded region, which the
// 3*(order+1) rule of thumb cannot achieve for sub-hertz cutoffs at
// fs = 128 (the slowest pole sits at radius ~0.992).
struct SosCascade {
  std::vector<Biquad> sections;
  std::size_t pad_len = 0;
  double max_pole_radius = 0.0;
};

SosCascade design_bandpass(const FilterSpec& spec);

// One forward pass through the cascade. Initial conditions are matched to
// a steady-state response at x[0], so a constant input yields the
// cascade's DC gain times that constant from the first sample.
std::vector<double> sosfilt(const SosCascade& sos, const std::vector<double>& x);

// Zero-phase bandpass: odd-reflection padding, forward pass, reversal,
// second pass, reversal, unpadding. Output length equals input length.
std::vector<double> filtfilt_bandpass(const std::vector<double>& x, const FilterSpec& spec);

// Pulse segmentation by local minima on the filtered signal.
struct SegmentConfig {
  double window_s = 0.25;     // half-width of the strict-minimum window
  double min_cycle_s = 0.25;  // spans shorter than this are discarded
  double max_cycle_s = 1.25;  // spans longer than this are discarded
  // An onset candidate must dip below mean - depth_sigma * std of the
  // filtered signal; this keeps dicrotic notches from splitting cycles.
  double depth_sigma = 0.6;
};

// Sample indices of detected pulse onsets, strictly increasing.
std::vector<std::size_t> detect_onsets(const std::vector<double>& x, double fs,
                                       const SegmentConfig& cfg = {});

// Linear resampling of x[start, end) onto `out_len` points. Endpoints are
// preserved exactly. Throws SegmentTooShort when the span has < 2 samples.
std::vector<double> resample_linear(const std::vector<double>& x, std::size_t start,
                                    std::size_t end, std::size_t out_len);

// In-place z-normalization with population variance. Throws
// DegeneratePulse when the variance falls below 1e-12.
void z_normalize(std::vector<double>& values);

// A segmented, resampled (not yet normalized) pulse.
struct SegmentedPulse {
  std::uint32_t signal_id = 0;
  std::uint32_t pulse_index = 0;  // order within its signal
  std::size_t onset = 0;
  std::size_t length = 0;         // span length in source samples
  std::vector<double> values;     // resampled to pulse_len samples
};

inline constexpr std::size_t kPulseLen = 256;

// Full per-signal pipeline: filter, detect onsets, cut spans, resample.
// Spans outside the cycle-length bounds are skipped, as are degenerate
// (zero-variance) spans; pulse_index counts emitted pulses.
std::vector<SegmentedPulse> extract_pulses(const std::vector<double>& samples, double fs,
                                           std::uint32_t signal_id, const FilterSpec& fspec,
                                           const SegmentConfig& scfg = {});

// Columns: signal_id, pulse_index, onset, length, v0..v{L-1}.
void write_pulses_csv(const std::string& path, const std::vector<SegmentedPulse>& pulses);
std::vector<SegmentedPulse> read_pulses_csv(const std::string& path);

}  // namespace pssl
