#include "pssl/adasyn.hpp"

#include <algorithm>
#include <cmath>

#include "pssl/errors.hpp"

namespace pssl {

void AdasynConfig::validate() const {
  if (!(beta >= 0.0) || beta > 1.0) throw ConfigError("adasyn: beta must lie in [0, 1]");
  if (k == 0) throw ConfigError("adasyn: k must be positive");
  if (!(d_th > 0.0) || d_th > 1.0) throw ConfigError("adasyn: d_th must lie in (0, 1]");
}

namespace {

double sq_dist(const Tensor& x, std::size_t a, std::size_t b, std::size_t d) {
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double diff = x[a * d + j] - x[b * d + j];
    s += diff * diff;
  }
  return s;
}

// Indices of the k rows of `pool` closest to row `i`, ties broken by
// index so the ordering is platform-independent.
std::vector<std::size_t> k_nearest(const Tensor& x, std::size_t i,
                                   const std::vector<std::size_t>& pool, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(pool.size());
  for (const std::size_t j : pool) {
    if (j == i) continue;
    dist.emplace_back(sq_dist(x, i, j, x.dim(1)), j);
  }
  const std::size_t take = std::min(k, dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(take), dist.end());
  std::vector<std::size_t> out(take);
  for (std::size_t t = 0; t < take; ++t) out[t] = dist[t].second;
  return out;
}

}  // namespace

AdasynResult adasyn(const Tensor& x, const std::vector<int>& labels, const AdasynConfig& cfg,
                    Prng& rng) {
  cfg.validate();
  if (x.rank() != 2) throw ShapeError("adasyn: x must be (n, d)");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (labels.size() != n) throw ShapeError("adasyn: labels length mismatch");
  for (const int l : labels)
    if (l != 0 && l != 1) throw DataError("adasyn: labels must be 0 or 1");

  std::vector<std::size_t> ones, zeros;
  for (std::size_t i = 0; i < n; ++i) (labels[i] == 1 ? ones : zeros).push_back(i);

  AdasynResult res;
  res.synthetic = Tensor({0, d});
  if (ones.size() == zeros.size()) return res;  // balanced, nothing to do
  const bool ones_minor = ones.size() < zeros.size();
  const std::vector<std::size_t>& minority = ones_minor ? ones : zeros;
  const std::vector<std::size_t>& majority = ones_minor ? zeros : ones;
  res.minority_label = ones_minor ? 1 : 0;

  const auto m_s = static_cast<double>(minority.size());
  const auto m_l = static_cast<double>(majority.size());
  if (m_s / m_l >= cfg.d_th) return res;
  if (minority.size() < 2)
    throw ImbalanceError("adasyn: need at least 2 minority samples to synthesize");

  const double g_total = (m_l - m_s) * cfg.beta;

  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;

  // Majority share among each minority row's neighbours.
  std::vector<double> r(minority.size(), 0.0);
  double r_sum = 0.0;
  for (std::size_t mi = 0; mi < minority.size(); ++mi) {
    const auto nn = k_nearest(x, minority[mi], all, cfg.k);
    std::size_t maj = 0;
    for (const std::size_t j : nn)
      if (labels[j] != res.minority_label) ++maj;
    r[mi] = nn.empty() ? 0.0 : static_cast<double>(maj) / static_cast<double>(nn.size());
    r_sum += r[mi];
  }
  std::vector<double> r_hat(minority.size());
  for (std::size_t mi = 0; mi < minority.size(); ++mi)
    r_hat[mi] = r_sum > 0.0 ? r[mi] / r_sum : 1.0 / m_s;

  std::vector<std::size_t> counts(minority.size());
  std::size_t total = 0;
  for (std::size_t mi = 0; mi < minority.size(); ++mi) {
    counts[mi] = static_cast<std::size_t>(std::llround(r_hat[mi] * g_total));
    total += counts[mi];
  }

  Tensor synth({total, d});
  res.source.reserve(total);
  std::size_t row = 0;
  for (std::size_t mi = 0; mi < minority.size(); ++mi) {
    if (counts[mi] == 0) continue;
    const std::size_t i = minority[mi];
    const auto nn_min = k_nearest(x, i, minority, cfg.k);
    for (std::size_t c = 0; c < counts[mi]; ++c) {
      const std::size_t z = nn_min[rng.uniform_below(nn_min.size())];
      const double u = rng.uniform_real(0.0, 1.0);
      for (std::size_t j = 0; j < d; ++j)
        synth[row * d + j] = x[i * d + j] + u * (x[z * d + j] - x[i * d + j]);
      res.source.push_back(i);
      ++row;
    }
  }
  res.synthetic = std::move(synth);
  return res;
}

}  // namespace pssl
