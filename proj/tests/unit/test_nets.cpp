#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "doctest.h"
#include "pssl/checkpoint.hpp"
#include "pssl/errors.hpp"
#include "pssl/nets.hpp"
#include "pssl/optim.hpp"
#include "pssl/tape.hpp"
#include "testutil.hpp"

using namespace pssl;
using pssl::test::bitwise_equal;
using pssl::test::random_tensor;

namespace {

EncoderConfig config_for(Backbone b) {
  EncoderConfig cfg;
  cfg.backbone = b;
  return cfg;
}

std::size_t count_elements(ParamSet& set, bool trainable_only) {
  std::size_t n = 0;
  for (const Param& p : set.items())
    if (!trainable_only || p.trainable) n += p.value.numel();
  return n;
}

Tensor encode_once(Encoder& enc, const Tensor& batch, Mode mode, std::uint64_t rng_seed) {
  Tape t;
  Binding b(t, enc.params());
  Prng rng(rng_seed);
  return t.value(enc.encode(t, b, batch, mode, rng));
}

}  // namespace

TEST_CASE("parameter counts match the architecture tables") {
  Prng rng(1);

  auto mlp = make_encoder(config_for(Backbone::mlp), rng);
  CHECK(count_elements(mlp->params(), true) == 629500);
  CHECK(mlp->embed_dim() == 500);
  CHECK(mlp->kind() == Backbone::mlp);

  auto fcnn = make_encoder(config_for(Backbone::fcnn), rng);
  CHECK(count_elements(fcnn->params(), true) == 58368);
  // Batch-norm running stats ride along untrained.
  CHECK(count_elements(fcnn->params(), false) - count_elements(fcnn->params(), true) == 384);
  CHECK(fcnn->embed_dim() == 64);
  CHECK(fcnn->kind() == Backbone::fcnn);

  auto tr = make_encoder(config_for(Backbone::transformer), rng);
  CHECK(count_elements(tr->params(), true) == 795264);
  CHECK(tr->embed_dim() == 128);
  CHECK(tr->kind() == Backbone::transformer);
}

TEST_CASE("encoders map (B, 256) to (B, embed_dim)") {
  Prng rng(2);
  Prng data_rng(3);
  Tensor batch = random_tensor({5, 256}, data_rng);
  for (Backbone b : {Backbone::mlp, Backbone::fcnn, Backbone::transformer}) {
    auto enc = make_encoder(config_for(b), rng);
    Tensor out = encode_once(*enc, batch, Mode::eval, 7);
    REQUIRE(out.rank() == 2);
    CHECK(out.dim(0) == 5);
    CHECK(out.dim(1) == enc->embed_dim());
    CHECK(out.all_finite());
  }
}

TEST_CASE("eval mode is deterministic; train mode replays with an equal rng") {
  Prng rng(4);
  Prng data_rng(5);
  Tensor batch = random_tensor({3, 256}, data_rng);
  for (Backbone b : {Backbone::mlp, Backbone::fcnn, Backbone::transformer}) {
    auto enc = make_encoder(config_for(b), rng);
    Tensor e1 = encode_once(*enc, batch, Mode::eval, 11);
    Tensor e2 = encode_once(*enc, batch, Mode::eval, 999);  // rng must not matter in eval
    CHECK(bitwise_equal(e1, e2));

    Tensor t1 = encode_once(*enc, batch, Mode::train, 11);
    Tensor t2 = encode_once(*enc, batch, Mode::train, 11);
    CHECK(bitwise_equal(t1, t2));

    // Dropout fires in train mode, so train and eval outputs differ.
    CHECK_FALSE(bitwise_equal(e1, t1));
  }
}

TEST_CASE("input changes reach the embedding") {
  Prng rng(6);
  Prng data_rng(7);
  auto enc = make_encoder(config_for(Backbone::transformer), rng);
  Tensor batch = random_tensor({2, 256}, data_rng);
  Tensor masked = batch;
  for (std::size_t i = 64; i < 128; ++i) masked.at(0, i) = 0.0;
  Tensor a = encode_once(*enc, batch, Mode::eval, 1);
  Tensor m = encode_once(*enc, masked, Mode::eval, 1);
  CHECK_FALSE(bitwise_equal(a, m));
}

TEST_CASE("glorot draws have the advertised spread") {
  Prng rng(8);
  Tensor w = glorot_normal(2, 2, rng);
  CHECK(w.dim(0) == 2);
  CHECK(w.dim(1) == 2);

  // sigma = sqrt(2 / (64 + 64)) = 0.125; estimate over 1e5 draws.
  double sumsq = 0.0;
  std::size_t n = 0;
  while (n < 100000) {
    Tensor block = glorot_normal(64, 64, rng);
    for (std::size_t i = 0; i < block.numel() && n < 100000; ++i, ++n)
      sumsq += block[i] * block[i];
  }
  const double sd = std::sqrt(sumsq / static_cast<double>(n));
  CHECK(sd == doctest::Approx(0.125).epsilon(0.02));

  Prng r1(9), r2(9);
  CHECK(bitwise_equal(glorot_normal(8, 8, r1), glorot_normal(8, 8, r2)));

  Tensor shaped = glorot_normal_shaped({4, 3, 5}, 15, 20, rng);
  CHECK(shaped.rank() == 3);
  CHECK(shaped.numel() == 60);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Param p{"w", Tensor::from_row({1.0, -2.0, 3.0}), true};
  Tensor g({3}, 0.0);
  Adam adam(AdamConfig{});
  adam.step({&p}, {&g});
  CHECK(p.value[0] == 1.0);
  CHECK(p.value[1] == -2.0);
  CHECK(p.value[2] == 3.0);
  CHECK(adam.steps_taken() == 1);
}

TEST_CASE("adam: first step moves by about lr against the gradient sign") {
  Param p{"w", Tensor::from_row({0.0}), true};
  Tensor g({1}, 1.0);
  Adam adam(AdamConfig{});  // lr 1e-3
  adam.step({&p}, {&g});
  // Bias-corrected first step is lr * g / (|g| + eps') ~ -lr.
  CHECK(p.value[0] == doctest::Approx(-0.001).epsilon(1e-4));
}

TEST_CASE("adam: drives theta^2 toward zero") {
  Param p{"theta", Tensor::from_row({1.0}), true};
  AdamConfig cfg;
  cfg.lr = 0.05;
  Adam adam(cfg);
  for (int i = 0; i < 200; ++i) {
    Tensor g({1}, 2.0 * p.value[0]);  // d/dx x^2
    adam.step({&p}, {&g});
  }
  CHECK(std::abs(p.value[0]) < 0.1);
}

TEST_CASE("adam skips non-trainable parameters") {
  Param stat{"running", Tensor::from_row({5.0}), false};
  Tensor g({1}, 1.0);
  Adam adam(AdamConfig{});
  adam.step({&stat}, {&g});
  CHECK(stat.value[0] == 5.0);
}

TEST_CASE("linear head: zero weights give uniform softmax") {
  Prng rng(10);
  LinearHead head("cls", 16, 4, rng);
  for (Param& p : head.params().items()) p.value.fill(0.0);
  Tape t;
  Binding b(t, head.params());
  Var out = head.forward(t, b, t.leaf(random_tensor({3, 16}, rng)));
  const Tensor& probs = t.value(softmax_rows(t, out));
  for (std::size_t i = 0; i < probs.numel(); ++i)
    CHECK(probs[i] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(head.in_dim() == 16);
  CHECK(head.out_dim() == 4);
}

TEST_CASE("binding rejects unknown parameter names") {
  Prng rng(11);
  LinearHead head("cls", 4, 2, rng);
  Tape t;
  Binding b(t, head.params());
  CHECK_THROWS_AS(b["nonexistent"], ContractError);
}

TEST_CASE("sinusoidal position table") {
  Tensor pos = sinusoidal_positions(16, 128);
  REQUIRE(pos.dim(0) == 16);
  REQUIRE(pos.dim(1) == 128);
  // Row 0 alternates sin(0)=0, cos(0)=1.
  for (std::size_t j = 0; j < 128; j += 2) {
    CHECK(pos.at(0, j) == 0.0);
    CHECK(pos.at(0, j + 1) == 1.0);
  }
  // Spot value: pos(t, 2i) = sin(t / 10000^(2i/d)).
  const double expect = std::sin(3.0 / std::pow(10000.0, 10.0 / 128.0));
  CHECK(pos.at(3, 10) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("backbone name round trips and learning rates") {
  for (Backbone b : {Backbone::mlp, Backbone::fcnn, Backbone::transformer})
    CHECK(backbone_from_string(to_string(b)) == b);
  CHECK_THROWS_AS(backbone_from_string("rnn"), ConfigError);

  CHECK(backbone_lr(config_for(Backbone::mlp)) == 1e-4);
  CHECK(backbone_lr(config_for(Backbone::fcnn)) == 1e-4);
  CHECK(backbone_lr(config_for(Backbone::transformer)) == 6e-4);
}

TEST_CASE("ema_update interpolates parameter sets") {
  ParamSet a, b;
  a.add("w", Tensor::from_row({1.0, 2.0}));
  b.add("w", Tensor::from_row({3.0, 6.0}));
  ParamSet::ema_update(a, b, 0.75);
  CHECK(a.at("w").value[0] == doctest::Approx(0.75 * 1.0 + 0.25 * 3.0).epsilon(1e-15));
  CHECK(a.at("w").value[1] == doctest::Approx(0.75 * 2.0 + 0.25 * 6.0).epsilon(1e-15));
}

TEST_CASE("checkpoint round trip restores every value bitwise") {
  Prng rng(12);
  auto enc = make_encoder(config_for(Backbone::fcnn), rng);
  pssl::test::TempDir dir;
  const std::string path = dir.file("model.ckpt");
  save_checkpoint(path, enc->params());

  auto other = make_encoder(config_for(Backbone::fcnn), rng);  // different init
  load_checkpoint(path, other->params());
  const auto& a = enc->params().items();
  const auto& b = other->params().items();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(bitwise_equal(a[i].value, b[i].value));
  }

  ParamSet fresh = read_checkpoint(path);
  REQUIRE(fresh.items().size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(bitwise_equal(fresh.items()[i].value, a[i].value));
}

TEST_CASE("checkpoint file leads with magic and version") {
  ParamSet set;
  set.add("w", Tensor::from_row({1.5}));
  pssl::test::TempDir dir;
  const std::string path = dir.file("tiny.ckpt");
  save_checkpoint(path, set);
  std::string raw = pssl::test::read_file(path);
  REQUIRE(raw.size() >= 8);
  CHECK(raw.substr(0, 4) == "PSSL");
  std::uint32_t version = 0;
  std::memcpy(&version, raw.data() + 4, 4);
  CHECK(version == kCheckpointVersion);
}

TEST_CASE("checkpoint load rejects name and shape mismatches") {
  pssl::test::TempDir dir;
  ParamSet stored;
  stored.add("w", Tensor::from_row({1.0, 2.0}));
  const std::string path = dir.file("w.ckpt");
  save_checkpoint(path, stored);

  ParamSet wrong_name;
  wrong_name.add("v", Tensor::from_row({1.0, 2.0}));
  CHECK_THROWS_AS(load_checkpoint(path, wrong_name), DataError);

  ParamSet wrong_shape;
  wrong_shape.add("w", Tensor::from_row({1.0, 2.0, 3.0}));
  CHECK_THROWS_AS(load_checkpoint(path, wrong_shape), DataError);

  ParamSet extra;
  extra.add("w", Tensor::from_row({1.0, 2.0}));
  extra.add("u", Tensor::from_row({9.0}));
  CHECK_THROWS_AS(load_checkpoint(path, extra), DataError);

  CHECK_THROWS_AS(read_checkpoint(dir.file("missing.ckpt")), DataError);
}
