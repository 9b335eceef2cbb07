#include "pssl/nets.hpp"

#include <cmath>

#include "pssl/errors.hpp"

namespace pssl {

std::string to_string(Backbone b) {
  switch (b) {
    case Backbone::mlp: return "mlp";
    case Backbone::fcnn: return "fcnn";
    case Backbone::transformer: return "transformer";
  }
  return "transformer";
}

Backbone backbone_from_string(const std::string& s) {
  if (s == "mlp") return Backbone::mlp;
  if (s == "fcnn") return Backbone::fcnn;
  if (s == "transformer") return Backbone::transformer;
  throw ConfigError("unknown backbone '" + s + "'");
}

Binding::Binding(Tape& tape, ParamSet& set) {
  for (Param& p : set.items()) {
    if (!p.trainable) continue;
    params_.push_back(&p);
    vars_.push_back(tape.leaf(p.value));
  }
}

Var Binding::operator[](const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i]->name == name) return vars_[i];
  throw ContractError("binding: no bound parameter named '" + name + "'");
}

std::vector<const Tensor*> Binding::grads(Tape& tape) const {
  std::vector<const Tensor*> out;
  out.reserve(vars_.size());
  for (Var v : vars_) out.push_back(&tape.grad(v));
  return out;
}

LinearHead::LinearHead(const std::string& prefix, std::size_t in, std::size_t out, Prng& rng)
    : prefix_(prefix), in_(in), out_(out) {
  params_.add(prefix + ".w", glorot_normal(in, out, rng));
  params_.add(prefix + ".b", Tensor({out}, 0.0));
}

Var LinearHead::forward(Tape& t, const Binding& b, Var x) const {
  return add(t, matmul(t, x, b[prefix_ + ".w"]), b[prefix_ + ".b"]);
}

Tensor sinusoidal_positions(std::size_t tokens, std::size_t d) {
  Tensor pe({tokens, d});
  for (std::size_t pos = 0; pos < tokens; ++pos)
    for (std::size_t i = 0; i < d; ++i) {
      const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(d);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
      pe[pos * d + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}

namespace {

void check_batch(const Tensor& batch, std::size_t input_len, const char* who) {
  if (batch.rank() != 2 || batch.dim(1) != input_len)
    throw ShapeError(std::string(who) + ": batch must be (B, " + std::to_string(input_len) +
                     "), got " + batch.shape_str());
  if (batch.dim(0) == 0) throw ShapeError(std::string(who) + ": empty batch");
}

class MlpEncoder final : public Encoder {
 public:
  MlpEncoder(const EncoderConfig& cfg, Prng& rng) : cfg_(cfg) {
    if (cfg.mlp.hidden.empty()) throw ConfigError("mlp: needs at least one hidden layer");
    std::size_t in = cfg.input_len;
    for (std::size_t i = 0; i < cfg.mlp.hidden.size(); ++i) {
      const std::size_t out = cfg.mlp.hidden[i];
      const std::string p = "mlp.l" + std::to_string(i);
      params_.add(p + ".w", glorot_normal(in, out, rng));
      params_.add(p + ".b", Tensor({out}, 0.0));
      in = out;
    }
  }

  Var encode(Tape& t, const Binding& b, const Tensor& batch, Mode mode, Prng& rng) override {
    check_batch(batch, cfg_.input_len, "mlp");
    Var x = t.constant(batch);
    const bool training = mode == Mode::train;
    for (std::size_t i = 0; i < cfg_.mlp.hidden.size(); ++i) {
      const std::string p = "mlp.l" + std::to_string(i);
      x = relu(t, add(t, matmul(t, x, b[p + ".w"]), b[p + ".b"]));
      x = dropout(t, x, cfg_.mlp.dropout, rng, training);
    }
    return x;
  }

  std::size_t embed_dim() const override { return cfg_.mlp.hidden.back(); }
  ParamSet& params() override { return params_; }
  Backbone kind() const override { return Backbone::mlp; }

 private:
  EncoderConfig cfg_;
  ParamSet params_;
};

class FcnnEncoder final : public Encoder {
 public:
  FcnnEncoder(const EncoderConfig& cfg, Prng& rng) : cfg_(cfg) {
    if (cfg.fcnn.blocks == 0) throw ConfigError("fcnn: needs at least one block");
    if (cfg.fcnn.kernel % 2 == 0) throw ConfigError("fcnn: kernel must be odd");
    std::size_t cin = 1;
    const std::size_t c = cfg.fcnn.channels;
    const std::size_t k = cfg.fcnn.kernel;
    for (std::size_t i = 0; i < cfg.fcnn.blocks; ++i) {
      const std::string p = "fcnn.b" + std::to_string(i);
      params_.add(p + ".conv.w", glorot_normal_shaped({c, cin, k}, cin * k, c * k, rng));
      params_.add(p + ".conv.b", Tensor({c}, 0.0));
      params_.add(p + ".bn.gamma", Tensor({c}, 1.0));
      params_.add(p + ".bn.beta", Tensor({c}, 0.0));
      params_.add(p + ".bn.running_mean", Tensor({c}, 0.0), /*trainable=*/false);
      params_.add(p + ".bn.running_var", Tensor({c}, 1.0), /*trainable=*/false);
      cin = c;
    }
  }

  Var encode(Tape& t, const Binding& b, const Tensor& batch, Mode mode, Prng& rng) override {
    check_batch(batch, cfg_.input_len, "fcnn");
    const std::size_t bsz = batch.dim(0);
    const bool training = mode == Mode::train;
    Var x = reshape(t, t.constant(batch), {bsz, 1, cfg_.input_len});
    for (std::size_t i = 0; i < cfg_.fcnn.blocks; ++i) {
      const std::string p = "fcnn.b" + std::to_string(i);
      x = conv1d(t, x, b[p + ".conv.w"], b[p + ".conv.b"]);
      x = batch_norm_conv(t, x, b[p + ".bn.gamma"], b[p + ".bn.beta"],
                          params_.at(p + ".bn.running_mean").value,
                          params_.at(p + ".bn.running_var").value, training);
      x = relu(t, x);
      x = maxpool1d(t, x, 2);
      x = dropout(t, x, cfg_.fcnn.dropout, rng, training);
    }
    return global_avg_pool(t, x);
  }

  std::size_t embed_dim() const override { return cfg_.fcnn.channels; }
  ParamSet& params() override { return params_; }
  Backbone kind() const override { return Backbone::fcnn; }

 private:
  EncoderConfig cfg_;
  ParamSet params_;
};

class TransformerEncoder final : public Encoder {
 public:
  TransformerEncoder(const EncoderConfig& cfg, Prng& rng) : cfg_(cfg) {
    const auto& tc = cfg.transformer;
    if (tc.patch == 0 || cfg.input_len % tc.patch != 0)
      throw ConfigError("transformer: input length must divide into patches");
    if (tc.heads == 0 || tc.d_model % tc.heads != 0)
      throw ConfigError("transformer: d_model must divide into heads");
    tokens_ = cfg.input_len / tc.patch;
    params_.add("tf.patch.w", glorot_normal(tc.patch, tc.d_model, rng));
    params_.add("tf.patch.b", Tensor({tc.d_model}, 0.0));
    for (std::size_t i = 0; i < tc.layers; ++i) {
      const std::string p = "tf.l" + std::to_string(i);
      for (const char* nm : {"wq", "wk", "wv", "wo"})
        params_.add(p + ".attn." + nm, glorot_normal(tc.d_model, tc.d_model, rng));
      for (const char* nm : {"bq", "bk", "bv", "bo"})
        params_.add(p + ".attn." + nm, Tensor({tc.d_model}, 0.0));
      params_.add(p + ".ln1.gamma", Tensor({tc.d_model}, 1.0));
      params_.add(p + ".ln1.beta", Tensor({tc.d_model}, 0.0));
      params_.add(p + ".ff.w1", glorot_normal(tc.d_model, tc.d_ff, rng));
      params_.add(p + ".ff.b1", Tensor({tc.d_ff}, 0.0));
      params_.add(p + ".ff.w2", glorot_normal(tc.d_ff, tc.d_model, rng));
      params_.add(p + ".ff.b2", Tensor({tc.d_model}, 0.0));
      params_.add(p + ".ln2.gamma", Tensor({tc.d_model}, 1.0));
      params_.add(p + ".ln2.beta", Tensor({tc.d_model}, 0.0));
    }
    positions_ = sinusoidal_positions(tokens_, tc.d_model);
  }

  Var encode(Tape& t, const Binding& b, const Tensor& batch, Mode mode, Prng& rng) override {
    check_batch(batch, cfg_.input_len, "transformer");
    const auto& tc = cfg_.transformer;
    const std::size_t bsz = batch.dim(0);
    const std::size_t tok = tokens_, dm = tc.d_model, h = tc.heads, dh = dm / h;
    const bool training = mode == Mode::train;

    // Patch tokenization: each row of `patch` consecutive samples becomes
    // one token (row-major layout makes this a pure reshape).
    Var x = reshape(t, t.constant(batch), {bsz * tok, tc.patch});
    x = add(t, matmul(t, x, b["tf.patch.w"]), b["tf.patch.b"]);

    Tensor pos_tile({bsz * tok, dm});
    for (std::size_t bi = 0; bi < bsz; ++bi)
      for (std::size_t i = 0; i < tok * dm; ++i)
        pos_tile[bi * tok * dm + i] = positions_[i];
    x = add(t, x, t.constant(std::move(pos_tile)));
    x = dropout(t, x, tc.dropout, rng, training);

    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t i = 0; i < tc.layers; ++i) {
      const std::string p = "tf.l" + std::to_string(i);
      Var q = add(t, matmul(t, x, b[p + ".attn.wq"]), b[p + ".attn.bq"]);
      Var kk = add(t, matmul(t, x, b[p + ".attn.wk"]), b[p + ".attn.bk"]);
      Var v = add(t, matmul(t, x, b[p + ".attn.wv"]), b[p + ".attn.bv"]);
      Var qh = split_heads(t, q, bsz, tok, h);
      Var kh = split_heads(t, kk, bsz, tok, h);
      Var vh = split_heads(t, v, bsz, tok, h);
      Var scores = scale(t, bmm(t, qh, kh, bsz * h, tok, dh, tok, /*transpose_b=*/true),
                         inv_sqrt_dh);
      Var probs = dropout(t, softmax_rows(t, scores), tc.dropout, rng, training);
      Var ctx = bmm(t, probs, vh, bsz * h, tok, tok, dh, /*transpose_b=*/false);
      Var merged = merge_heads(t, ctx, bsz, tok, h);
      Var attn_out = add(t, matmul(t, merged, b[p + ".attn.wo"]), b[p + ".attn.bo"]);
      attn_out = dropout(t, attn_out, tc.dropout, rng, training);
      x = layer_norm(t, add(t, x, attn_out), b[p + ".ln1.gamma"], b[p + ".ln1.beta"]);

      Var ff = relu(t, add(t, matmul(t, x, b[p + ".ff.w1"]), b[p + ".ff.b1"]));
      ff = dropout(t, ff, tc.dropout, rng, training);
      ff = add(t, matmul(t, ff, b[p + ".ff.w2"]), b[p + ".ff.b2"]);
      ff = dropout(t, ff, tc.dropout, rng, training);
      x = layer_norm(t, add(t, x, ff), b[p + ".ln2.gamma"], b[p + ".ln2.beta"]);
    }
    return mean_pool_rows(t, x, tok);
  }

  std::size_t embed_dim() const override { return cfg_.transformer.d_model; }
  ParamSet& params() override { return params_; }
  Backbone kind() const override { return Backbone::transformer; }

 private:
  EncoderConfig cfg_;
  std::size_t tokens_;
  Tensor positions_;
  ParamSet params_;
};

}  // namespace

std::unique_ptr<Encoder> make_encoder(const EncoderConfig& cfg, Prng& rng) {
  switch (cfg.backbone) {
    case Backbone::mlp: return std::make_unique<MlpEncoder>(cfg, rng);
    case Backbone::fcnn: return std::make_unique<FcnnEncoder>(cfg, rng);
    case Backbone::transformer: return std::make_unique<TransformerEncoder>(cfg, rng);
  }
  throw ConfigError("unknown backbone");
}

double backbone_lr(const EncoderConfig& cfg) {
  switch (cfg.backbone) {
    case Backbone::mlp: return cfg.mlp.lr;
    case Backbone::fcnn: return cfg.fcnn.lr;
    case Backbone::transformer: return cfg.transformer.lr;
  }
  throw ConfigError("unknown backbone");
}

}  // namespace pssl
