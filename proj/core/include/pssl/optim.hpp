#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pssl/prng.hpp"
#include "pssl/tensor.hpp"

namespace pssl {

// Named model parameter. Non-trainable entries (batch-norm running stats)
// are checkpointed but skipped by the optimizer.
struct Param {
  std::string name;
  Tensor value;
  bool trainable = true;
};

class ParamSet {
 public:
  Param& add(std::string name, Tensor value, bool trainable = true);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool has(const std::string& name) const;

  std::vector<Param>& items() noexcept { return items_; }
  const std::vector<Param>& items() const noexcept { return items_; }

  std::vector<Param*> trainable_params();
  std::size_t total_elements() const;

  // target <- m * target + (1 - m) * source, element-wise over matching
  // names (teacher updates). Name sets and shapes must agree.
  static void ema_update(ParamSet& target, const ParamSet& source, double m);

 private:
  std::vector<Param> items_;
};

// Draws from N(0, 2 / (fan_in + fan_out)).
Tensor glorot_normal(std::size_t fan_in, std::size_t fan_out, Prng& rng);
// Same distribution, arbitrary output shape (convolution kernels).
Tensor glorot_normal_shaped(const std::vector<std::size_t>& shape, std::size_t fan_in,
                            std::size_t fan_out, Prng& rng);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment buffers are keyed by position, so the
// caller must pass the same parameter list (same order) on every step.
class Adam {
 public:
  explicit Adam(AdamConfig cfg);

  void step(const std::vector<Param*>& params, const std::vector<const Tensor*>& grads);

  const AdamConfig& config() const noexcept { return cfg_; }
  long steps_taken() const noexcept { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

}  // namespace pssl
