#include "pssl/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "pssl/csv.hpp"
#include "pssl/errors.hpp"

namespace pssl {

void FilterSpec::validate() const {
  if (!(fs > 0.0)) throw FilterDesignError("filter: fs must be positive");
  if (!(low_cut_hz > 0.0) || !(high_cut_hz > low_cut_hz) || !(high_cut_hz < fs / 2.0))
    throw FilterDesignError("filter: cutoffs must satisfy 0 < low < high < fs/2");
  if (order < 2 || order % 2 != 0)
    throw FilterDesignError("filter: order must be even and >= 2");
}

namespace {

using cplx = std::complex<double>;

struct PoleSection {
  cplx pole;       // upper-half-plane representative
  int zero_sign;   // +1 for a double zero at z=+1, -1 for z=-1
};

}  // namespace

SosCascade design_bandpass(const FilterSpec& spec) {
  spec.validate();
  const int n = spec.order;
  const double fs = spec.fs;
  const double k_bilinear = 2.0 * fs;

  // Analog prototype poles on the unit circle, left half plane.
  std::vector<cplx> proto;
  proto.reserve(static_cast<std::size_t>(n));
  for (int k = 1; k <= n; ++k) {
    const double theta =
        std::numbers::pi * static_cast<double>(2 * k + n - 1) / static_cast<double>(2 * n);
    proto.emplace_back(std::cos(theta), std::sin(theta));
  }

  // Prewarped band edges and lowpass-to-bandpass transform.
  const double wl = k_bilinear * std::tan(std::numbers::pi * spec.low_cut_hz / fs);
  const double wh = k_bilinear * std::tan(std::numbers::pi * spec.high_cut_hz / fs);
  const double bw = wh - wl;
  const double w0_sq = wl * wh;

  std::vector<cplx> analog_poles;
  analog_poles.reserve(static_cast<std::size_t>(2 * n));
  for (const cplx& p : proto) {
    const cplx half = p * (bw / 2.0);
    const cplx disc = std::sqrt(half * half - w0_sq);
    analog_poles.push_back(half + disc);
    analog_poles.push_back(half - disc);
  }

  // Bilinear transform. The bandpass has n analog zeros at s = 0, which
  // map to z = +1; the degree deficit contributes n zeros at z = -1.
  // Gain: bw^n * prod(k - s_zero) / prod(k - s_pole) with s_zero = 0.
  std::vector<cplx> digital_poles;
  digital_poles.reserve(analog_poles.size());
  cplx denom_prod(1.0, 0.0);
  for (const cplx& s : analog_poles) {
    digital_poles.push_back((k_bilinear + s) / (k_bilinear - s));
    denom_prod *= (k_bilinear - s);
  }
  double gain = std::pow(bw, n) * std::pow(k_bilinear, n) / denom_prod.real();
  if (!(std::isfinite(gain)) || gain <= 0.0)
    throw FilterDesignError("filter: degenerate gain in bandpass design");

  // Conjugate pairing: keep upper-half-plane poles, check each has a
  // mirror partner.
  std::vector<cplx> upper;
  for (const cplx& p : digital_poles)
    if (p.imag() > 0.0) upper.push_back(p);
  if (static_cast<int>(upper.size()) != n)
    throw FilterDesignError("filter: pole pairing failed (real-axis pole)");
  for (const cplx& u : upper) {
    bool found = false;
    for (const cplx& p : digital_poles)
      if (std::abs(p - std::conj(u)) < 1e-9 * std::max(1.0, std::abs(u))) found = true;
    if (!found) throw FilterDesignError("filter: pole pairing failed (missing conjugate)");
  }

  // Zero assignment: poles nearest the unit circle choose first, taking
  // the zero (z = +1 or z = -1) closest to them; each kind is available
  // n/2 times. This keeps per-section peak gain low.
  std::sort(upper.begin(), upper.end(),
            [](const cplx& a, const cplx& b) { return std::abs(a) > std::abs(b); });
  int plus_left = n / 2, minus_left = n / 2;
  std::vector<PoleSection> sections;
  sections.reserve(upper.size());
  for (const cplx& p : upper) {
    const double d_plus = std::abs(p - cplx(1.0, 0.0));
    const double d_minus = std::abs(p - cplx(-1.0, 0.0));
    int sign;
    if (plus_left == 0) sign = -1;
    else if (minus_left == 0) sign = +1;
    else sign = (d_plus <= d_minus) ? +1 : -1;
    (sign > 0 ? plus_left : minus_left) -= 1;
    sections.push_back({p, sign});
  }
  // Most damped section runs first.
  std::sort(sections.begin(), sections.end(),
            [](const PoleSection& a, const PoleSection& b) {
              return std::abs(a.pole) < std::abs(b.pole);
            });

  SosCascade sos;
  const double per_section_gain = std::pow(gain, 1.0 / static_cast<double>(n));
  double max_radius = 0.0;
  for (const PoleSection& sec : sections) {
    Biquad q{};
    q.b0 = per_section_gain;
    q.b1 = (sec.zero_sign > 0 ? -2.0 : 2.0) * per_section_gain;
    q.b2 = per_section_gain;
    q.a1 = -2.0 * sec.pole.real();
    q.a2 = std::norm(sec.pole);
    sos.sections.push_back(q);
    max_radius = std::max(max_radius, std::abs(sec.pole));
  }
  if (!(max_radius < 1.0))
    throw FilterDesignError("filter: unstable design (pole on or outside unit circle)");
  sos.max_pole_radius = max_radius;

  // Reflection length for the zero-phase pass: long enough for the
  // slowest mode to decay below 1e-12, never less than the classic
  // 3 * (2n + 1) rule.
  const double decay = std::log(1e-12) / std::log(max_radius);
  sos.pad_len = std::max<std::size_t>(static_cast<std::size_t>(3 * (2 * n + 1)),
                                      static_cast<std::size_t>(std::ceil(decay)));
  return sos;
}

std::vector<double> sosfilt(const SosCascade& sos, const std::vector<double>& x) {
  std::vector<double> y = x;
  double steady_in = x.empty() ? 0.0 : x.front();
  for (const Biquad& q : sos.sections) {
    // Steady-state initial conditions for a constant input steady_in.
    const double dc_gain = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
    const double y_ss = dc_gain * steady_in;
    double s2 = q.b2 * steady_in - q.a2 * y_ss;
    double s1 = q.b1 * steady_in - q.a1 * y_ss + s2;
    for (double& v : y) {
      const double in = v;
      const double out = q.b0 * in + s1;
      s1 = q.b1 * in - q.a1 * out + s2;
      s2 = q.b2 * in - q.a2 * out;
      v = out;
    }
    steady_in = y_ss;
  }
  return y;
}

std::vector<double> filtfilt_bandpass(const std::vector<double>& x, const FilterSpec& spec) {
  const SosCascade sos = design_bandpass(spec);
  const std::size_t n = x.size();
  if (n < 2) throw DataError("filtfilt: signal must have at least 2 samples");
  const std::size_t pad = std::min(sos.pad_len, n - 1);

  // Odd reflection about the first and last samples.
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) ext.push_back(2.0 * x[0] - x[pad - i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 0; i < pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 2 - i]);

  std::vector<double> y = sosfilt(sos, ext);
  std::reverse(y.begin(), y.end());
  y = sosfilt(sos, y);
  std::reverse(y.begin(), y.end());

  std::vector<double> out(y.begin() + static_cast<std::ptrdiff_t>(pad),
                          y.begin() + static_cast<std::ptrdiff_t>(pad + n));
  for (double v : out)
    if (!std::isfinite(v)) throw NumericsError("filtfilt: non-finite output sample");
  return out;
}

std::vector<std::size_t> detect_onsets(const std::vector<double>& x, double fs,
                                       const SegmentConfig& cfg) {
  if (!(fs > 0.0)) throw ConfigError("segment: fs must be positive");
  const std::size_t n = x.size();
  const auto w = static_cast<std::size_t>(std::lround(cfg.window_s * fs));
  const auto refractory = static_cast<std::size_t>(std::lround(cfg.min_cycle_s * fs));
  std::vector<std::size_t> onsets;
  if (n == 0 || w == 0 || n < 2 * w + 1) return onsets;

  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double depth = mean - cfg.depth_sigma * std::sqrt(var);

  for (std::size_t i = w; i + w < n; ++i) {
    if (x[i] > depth) continue;
    if (!onsets.empty() && i - onsets.back() < refractory) continue;
    bool strict_min = true;
    for (std::size_t j = i - w; j <= i + w; ++j) {
      if (j != i && x[j] <= x[i]) {
        strict_min = false;
        break;
      }
    }
    if (strict_min) onsets.push_back(i);
  }
  return onsets;
}

std::vector<double> resample_linear(const std::vector<double>& x, std::size_t start,
                                    std::size_t end, std::size_t out_len) {
  if (end > x.size() || start >= end)
    throw ShapeError("resample: span outside the signal");
  const std::size_t len = end - start;
  if (len < 2) throw SegmentTooShort("resample: span has fewer than 2 samples");
  if (out_len < 2) throw ContractError("resample: output length must be >= 2");

  std::vector<double> out(out_len);
  const double step = static_cast<double>(len - 1) / static_cast<double>(out_len - 1);
  for (std::size_t k = 0; k < out_len; ++k) {
    const double pos = static_cast<double>(k) * step;
    auto i = static_cast<std::size_t>(pos);
    if (i >= len - 1) {
      out[k] = x[start + len - 1];
      continue;
    }
    const double frac = pos - static_cast<double>(i);
    out[k] = x[start + i] * (1.0 - frac) + x[start + i + 1] * frac;
  }
  return out;
}

void z_normalize(std::vector<double>& values) {
  const std::size_t n = values.size();
  if (n == 0) throw ContractError("z_normalize: empty input");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  if (var < 1e-12) throw DegeneratePulse("z_normalize: variance below 1e-12");
  const double inv = 1.0 / std::sqrt(var);
  for (double& v : values) v = (v - mean) * inv;
}

std::vector<SegmentedPulse> extract_pulses(const std::vector<double>& samples, double fs,
                                           std::uint32_t signal_id, const FilterSpec& fspec,
                                           const SegmentConfig& scfg) {
  const std::vector<double> filtered = filtfilt_bandpass(samples, fspec);
  const std::vector<std::size_t> onsets = detect_onsets(filtered, fs, scfg);

  const auto min_len = static_cast<std::size_t>(std::lround(scfg.min_cycle_s * fs));
  const auto max_len = static_cast<std::size_t>(std::lround(scfg.max_cycle_s * fs));

  std::vector<SegmentedPulse> pulses;
  std::uint32_t emitted = 0;
  for (std::size_t k = 0; k + 1 < onsets.size(); ++k) {
    const std::size_t len = onsets[k + 1] - onsets[k];
    if (len < min_len || len > max_len) continue;
    SegmentedPulse p;
    p.signal_id = signal_id;
    p.onset = onsets[k];
    p.length = len;
    p.values = resample_linear(filtered, onsets[k], onsets[k + 1], kPulseLen);
    // A flat span cannot be normalized downstream; skip it here.
    double mean = 0.0;
    for (double v : p.values) mean += v;
    mean /= static_cast<double>(p.values.size());
    double var = 0.0;
    for (double v : p.values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(p.values.size());
    if (var < 1e-12) continue;
    p.pulse_index = emitted++;
    pulses.push_back(std::move(p));
  }
  return pulses;
}

void write_pulses_csv(const std::string& path, const std::vector<SegmentedPulse>& pulses) {
  if (pulses.empty()) throw DataError("write_pulses_csv: no pulses");
  const std::size_t len = pulses[0].values.size();
  std::vector<std::vector<std::string>> rows;
  rows.reserve(pulses.size() + 1);
  std::vector<std::string> header = {"signal_id", "pulse_index", "onset", "length"};
  for (std::size_t j = 0; j < len; ++j) header.push_back("v" + std::to_string(j));
  rows.push_back(std::move(header));
  for (const SegmentedPulse& s : pulses) {
    if (s.values.size() != len) throw ShapeError("write_pulses_csv: ragged pulse lengths");
    std::vector<std::string> row = {std::to_string(s.signal_id), std::to_string(s.pulse_index),
                                    std::to_string(s.onset), std::to_string(s.length)};
    for (const double v : s.values) row.push_back(fmt_double(v));
    rows.push_back(std::move(row));
  }
  write_csv(path, rows);
}

std::vector<SegmentedPulse> read_pulses_csv(const std::string& path) {
  const auto rows = read_csv(path);
  if (rows.size() < 2) throw DataError(path + ": pulses file needs a header and rows");
  const std::size_t cols = rows[0].size();
  if (cols < 5) throw DataError(path + ": too few columns for a pulses file");
  const std::size_t len = cols - 4;
  std::vector<SegmentedPulse> out;
  out.reserve(rows.size() - 1);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != cols)
      throw DataError(path + ": row " + std::to_string(i) + " has " +
                      std::to_string(row.size()) + " fields, expected " + std::to_string(cols));
    SegmentedPulse s;
    s.signal_id = static_cast<std::uint32_t>(parse_int(row[0], path + " signal_id"));
    s.pulse_index = static_cast<std::uint32_t>(parse_int(row[1], path + " pulse_index"));
    s.onset = static_cast<std::size_t>(parse_int(row[2], path + " onset"));
    s.length = static_cast<std::size_t>(parse_int(row[3], path + " length"));
    s.values.resize(len);
    for (std::size_t j = 0; j < len; ++j) s.values[j] = parse_double(row[4 + j], path);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace pssl

