#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pssl/optim.hpp"
#include "pssl/tape.hpp"

namespace pssl {

enum class Backbone { mlp, fcnn, transformer };
enum class Mode { train, eval };

std::string to_string(Backbone b);
Backbone backbone_from_string(const std::string& s);

// Binds every trainable parameter of a set as a tape leaf. One binding per
// (tape, ParamSet) pair; reusing it across several forward passes on the
// same tape accumulates all their gradients in the same leaves.
class Binding {
 public:
  Binding(Tape& tape, ParamSet& set);

  Var operator[](const std::string& name) const;  // ContractError if unbound
  const std::vector<Param*>& params() const noexcept { return params_; }
  // Gradients aligned with params(), valid after tape.backward().
  std::vector<const Tensor*> grads(Tape& tape) const;

 private:
  std::vector<Param*> params_;
  std::vector<Var> vars_;
};

// y = x W + b.
class LinearHead {
 public:
  LinearHead(const std::string& prefix, std::size_t in, std::size_t out, Prng& rng);
  Var forward(Tape& t, const Binding& b, Var x) const;
  ParamSet& params() noexcept { return params_; }
  const ParamSet& params() const noexcept { return params_; }
  std::size_t in_dim() const noexcept { return in_; }
  std::size_t out_dim() const noexcept { return out_; }

 private:
  std::string prefix_;
  std::size_t in_, out_;
  ParamSet params_;
};

struct MlpConfig {
  std::vector<std::size_t> hidden{500, 500, 500};
  double dropout = 0.3;
  double lr = 1e-4;
};

struct FcnnConfig {
  std::size_t blocks = 3;
  std::size_t channels = 64;
  std::size_t kernel = 7;
  double dropout = 0.25;
  double lr = 1e-4;
};

struct TransformerConfig {
  std::size_t layers = 4;
  std::size_t d_model = 128;
  std::size_t heads = 4;
  std::size_t d_ff = 512;
  std::size_t patch = 16;
  double dropout = 0.25;
  double lr = 6e-4;
};

struct EncoderConfig {
  Backbone backbone = Backbone::transformer;
  std::size_t input_len = 256;
  MlpConfig mlp;
  FcnnConfig fcnn;
  TransformerConfig transformer;
};

class Encoder {
 public:
  virtual ~Encoder() = default;
  // batch is (B, input_len); returns embeddings (B, embed_dim()).
  virtual Var encode(Tape& t, const Binding& b, const Tensor& batch, Mode mode,
                     Prng& rng) = 0;
  virtual std::size_t embed_dim() const = 0;
  virtual ParamSet& params() = 0;
  virtual Backbone kind() const = 0;
};

std::unique_ptr<Encoder> make_encoder(const EncoderConfig& cfg, Prng& rng);
double backbone_lr(const EncoderConfig& cfg);

// Standard sinusoidal position table, shape (tokens, d).
Tensor sinusoidal_positions(std::size_t tokens, std::size_t d);

}  // namespace pssl
