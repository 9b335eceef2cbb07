#include "pssl/optim.hpp"

#include <Eigen/Core>
#include <cmath>

#include "pssl/errors.hpp"

namespace pssl {

Param& ParamSet::add(std::string name, Tensor value, bool trainable) {
  if (has(name)) throw ContractError("ParamSet: duplicate parameter '" + name + "'");
  items_.push_back(Param{std::move(name), std::move(value), trainable});
  return items_.back();
}

Param& ParamSet::at(const std::string& name) {
  for (Param& p : items_)
    if (p.name == name) return p;
  throw ContractError("ParamSet: no parameter named '" + name + "'");
}

const Param& ParamSet::at(const std::string& name) const {
  for (const Param& p : items_)
    if (p.name == name) return p;
  throw ContractError("ParamSet: no parameter named '" + name + "'");
}

bool ParamSet::has(const std::string& name) const {
  for (const Param& p : items_)
    if (p.name == name) return true;
  return false;
}

std::vector<Param*> ParamSet::trainable_params() {
  std::vector<Param*> out;
  for (Param& p : items_)
    if (p.trainable) out.push_back(&p);
  return out;
}

std::size_t ParamSet::total_elements() const {
  std::size_t n = 0;
  for (const Param& p : items_) n += p.value.numel();
  return n;
}

void ParamSet::ema_update(ParamSet& target, const ParamSet& source, double m) {
  if (target.items_.size() != source.items_.size())
    throw ContractError("ema_update: parameter count mismatch");
  for (std::size_t i = 0; i < target.items_.size(); ++i) {
    Param& t = target.items_[i];
    const Param& s = source.items_[i];
    if (t.name != s.name) throw ContractError("ema_update: parameter order mismatch at '" + t.name + "'");
    require_same_shape(t.value, s.value, "ema_update");
    const Eigen::Index n = static_cast<Eigen::Index>(t.value.numel());
    Eigen::Map<Eigen::ArrayXd> ta(t.value.data(), n);
    Eigen::Map<const Eigen::ArrayXd> sa(s.value.data(), n);
    ta = m * ta + (1.0 - m) * sa;
  }
}

Tensor glorot_normal(std::size_t fan_in, std::size_t fan_out, Prng& rng) {
  return glorot_normal_shaped({fan_in, fan_out}, fan_in, fan_out, rng);
}

Tensor glorot_normal_shaped(const std::vector<std::size_t>& shape, std::size_t fan_in,
                            std::size_t fan_out, Prng& rng) {
  if (fan_in + fan_out == 0) throw ContractError("glorot_normal: zero fans");
  const double sigma = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, sigma);
  return t;
}

Adam::Adam(AdamConfig cfg) : cfg_(cfg) {
  if (!(cfg.lr > 0.0)) throw ConfigError("adam: lr must be positive");
  if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0)
    throw ConfigError("adam: betas must lie in [0, 1)");
  if (!(cfg.eps > 0.0)) throw ConfigError("adam: eps must be positive");
}

void Adam::step(const std::vector<Param*>& params, const std::vector<const Tensor*>& grads) {
  if (params.size() != grads.size())
    throw ContractError("adam: params and grads differ in count");
  if (m_.empty()) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Param* p : params) {
      m_.emplace_back(p->value.shape(), 0.0);
      v_.emplace_back(p->value.shape(), 0.0);
    }
  }
  if (m_.size() != params.size())
    throw ContractError("adam: parameter list changed between steps");

  t_ += 1;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& value = params[i]->value;
    const Tensor& g = *grads[i];
    require_same_shape(value, g, "adam step");
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    const Eigen::Index n = static_cast<Eigen::Index>(value.numel());
    Eigen::Map<Eigen::ArrayXd> ma(m.data(), n), va(v.data(), n), pa(value.data(), n);
    Eigen::Map<const Eigen::ArrayXd> ga(g.data(), n);
    ma = cfg_.beta1 * ma + (1.0 - cfg_.beta1) * ga;
    va = cfg_.beta2 * va + (1.0 - cfg_.beta2) * ga.square();
    pa -= cfg_.lr * (ma / bc1) / ((va / bc2).sqrt() + cfg_.eps);
    require_finite(value, "adam step");
  }
}

}  // namespace pssl
