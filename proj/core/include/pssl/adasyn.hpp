#pragma once

#include <cstdint>
#include <vector>

#include "pssl/prng.hpp"
#include "pssl/tensor.hpp"

namespace pssl {

struct AdasynConfig {
  double beta = 1.0;   // fraction of the class gap to close, in [0, 1]
  std::size_t k = 5;   // nearest neighbours consulted
  double d_th = 0.75;  // no synthesis when minority/majority >= d_th

  void validate() const;
};

struct AdasynResult {
  Tensor synthetic;         // (g, d); g == 0 when synthesis is not triggered
  int minority_label = 0;   // label of every synthetic row
  std::vector<std::size_t> source;  // minority row index each sample grew from
};

// Adaptive minority oversampling. x is (n, d) with binary labels; when the
// minority-to-majority ratio falls below d_th, generates
// g_i = round(r_hat_i * (m_l - m_s) * beta) samples around each minority
// row x_i, where r_i is the fraction of majority rows among its k nearest
// neighbours (Euclidean, over the whole set) and r_hat normalizes the r_i
// to sum to one (uniform fallback when every r_i is zero). Each sample is
// x_i + u * (x_z - x_i) for a uniformly drawn minority neighbour x_z and
// u ~ U[0, 1). A triggered synthesis with fewer than 2 minority rows
// throws ImbalanceError. Balanced or tied inputs return an empty result.
AdasynResult adasyn(const Tensor& x, const std::vector<int>& labels, const AdasynConfig& cfg,
                    Prng& rng);

}  // namespace pssl
