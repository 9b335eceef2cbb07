#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "pssl/errors.hpp"
#include "pssl/prng.hpp"
#include "pssl/tape.hpp"
#include "pssl/tensor.hpp"
#include "testutil.hpp"

using namespace pssl;
using pssl::test::grad_check;
using pssl::test::GradCheckReport;
using pssl::test::max_abs_diff;
using pssl::test::random_tensor;

namespace {

// Weighted sum with fixed pseudo-random weights. A plain sum_all would hide
// permutation bugs (shuffled outputs sum to the same value); distinct weights
// make every output position matter.
Var wsum(Tape& t, Var v, std::uint64_t wseed = 77) {
  Prng rng(wseed);
  Tensor w(t.value(v).shape());
  for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform_real(0.5, 1.5);
  return sum_all(t, mul(t, v, t.constant(std::move(w))));
}

// One-input op gradcheck.
template <typename Build>
GradCheckReport check1(const Tensor& a, Build build) {
  auto f = [&build](const std::vector<Tensor>& xs, std::vector<Tensor>* grads) {
    Tape t;
    Var va = t.leaf(xs[0]);
    Var loss = build(t, va);
    double lv = t.value(loss)[0];
    if (grads) {
      t.backward(loss);
      grads->push_back(t.grad(va));
    }
    return lv;
  };
  return grad_check({a}, f);
}

// Two-input op gradcheck.
template <typename Build>
GradCheckReport check2(const Tensor& a, const Tensor& b, Build build) {
  auto f = [&build](const std::vector<Tensor>& xs, std::vector<Tensor>* grads) {
    Tape t;
    Var va = t.leaf(xs[0]);
    Var vb = t.leaf(xs[1]);
    Var loss = build(t, va, vb);
    double lv = t.value(loss)[0];
    if (grads) {
      t.backward(loss);
      grads->push_back(t.grad(va));
      grads->push_back(t.grad(vb));
    }
    return lv;
  };
  return grad_check({a, b}, f);
}

Tensor signed_away_from_zero(std::vector<std::size_t> shape, std::uint64_t seed) {
  Prng rng(seed);
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) {
    double mag = rng.uniform_real(0.1, 1.0);
    t[i] = rng.bernoulli(0.5) ? mag : -mag;
  }
  return t;
}

}  // namespace

// ---------------------------------------------------------------- gradients

TEST_CASE("grad: elementwise ops") {
  Prng rng(1);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({3, 4}, rng);

  auto r_add = check2(a, b, [](Tape& t, Var x, Var y) { return wsum(t, add(t, x, y)); });
  CHECK_MESSAGE(r_add.ok(), r_add.first_failure);
  auto r_sub = check2(a, b, [](Tape& t, Var x, Var y) { return wsum(t, sub(t, x, y)); });
  CHECK_MESSAGE(r_sub.ok(), r_sub.first_failure);
  auto r_mul = check2(a, b, [](Tape& t, Var x, Var y) { return wsum(t, mul(t, x, y)); });
  CHECK_MESSAGE(r_mul.ok(), r_mul.first_failure);
  auto r_scale = check1(a, [](Tape& t, Var x) { return wsum(t, scale(t, x, -1.7)); });
  CHECK_MESSAGE(r_scale.ok(), r_scale.first_failure);
  auto r_shift = check1(a, [](Tape& t, Var x) { return wsum(t, shift(t, x, 0.4)); });
  CHECK_MESSAGE(r_shift.ok(), r_shift.first_failure);
}

TEST_CASE("grad: add with row broadcast") {
  Prng rng(2);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4}, rng);
  auto rep = check2(a, b, [](Tape& t, Var x, Var y) { return wsum(t, add(t, x, y)); });
  CHECK_MESSAGE(rep.ok(), rep.first_failure);
}

TEST_CASE("grad: nonlinearities") {
  Tensor a = signed_away_from_zero({3, 4}, 3);  // relu kink avoidance
  auto r_relu = check1(a, [](Tape& t, Var x) { return wsum(t, relu(t, x)); });
  CHECK_MESSAGE(r_relu.ok(), r_relu.first_failure);

  Prng rng(4);
  Tensor c = random_tensor({3, 4}, rng, -2.0, 2.0);
  auto r_gelu = check1(c, [](Tape& t, Var x) { return wsum(t, gelu(t, x)); });
  CHECK_MESSAGE(r_gelu.ok(), r_gelu.first_failure);
  auto r_tanh = check1(c, [](Tape& t, Var x) { return wsum(t, tanh_op(t, x)); });
  CHECK_MESSAGE(r_tanh.ok(), r_tanh.first_failure);
  auto r_sig = check1(c, [](Tape& t, Var x) { return wsum(t, sigmoid(t, x)); });
  CHECK_MESSAGE(r_sig.ok(), r_sig.first_failure);
  auto r_exp = check1(c, [](Tape& t, Var x) { return wsum(t, exp_op(t, x)); });
  CHECK_MESSAGE(r_exp.ok(), r_exp.first_failure);

  Tensor pos = random_tensor({3, 4}, rng, 0.5, 2.0);
  auto r_log = check1(pos, [](Tape& t, Var x) { return wsum(t, log_op(t, x)); });
  CHECK_MESSAGE(r_log.ok(), r_log.first_failure);
}

TEST_CASE("grad: matmul and transpose") {
  Prng rng(5);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  auto r_mm = check2(a, b, [](Tape& t, Var x, Var y) { return wsum(t, matmul(t, x, y)); });
  CHECK_MESSAGE(r_mm.ok(), r_mm.first_failure);
  auto r_tr = check1(a, [](Tape& t, Var x) { return wsum(t, transpose(t, x)); });
  CHECK_MESSAGE(r_tr.ok(), r_tr.first_failure);
}

TEST_CASE("grad: bmm in both layouts") {
  Prng rng(6);
  const std::size_t batch = 2, m = 3, k = 4, n = 2;
  Tensor a = random_tensor({batch * m, k}, rng);
  Tensor b = random_tensor({batch * k, n}, rng);
  auto r1 = check2(a, b, [=](Tape& t, Var x, Var y) {
    return wsum(t, bmm(t, x, y, batch, m, k, n, false));
  });
  CHECK_MESSAGE(r1.ok(), r1.first_failure);

  Tensor bt = random_tensor({batch * n, k}, rng);
  auto r2 = check2(a, bt, [=](Tape& t, Var x, Var y) {
    return wsum(t, bmm(t, x, y, batch, m, k, n, true));
  });
  CHECK_MESSAGE(r2.ok(), r2.first_failure);
}

TEST_CASE("grad: shape and structure ops") {
  Prng rng(7);
  Tensor a = random_tensor({2, 6}, rng);
  auto r_rs = check1(a, [](Tape& t, Var x) { return wsum(t, reshape(t, x, {3, 4})); });
  CHECK_MESSAGE(r_rs.ok(), r_rs.first_failure);

  Tensor b = random_tensor({3, 6}, rng);
  auto r_cat = check2(a, b, [](Tape& t, Var x, Var y) { return wsum(t, concat_rows(t, x, y)); });
  CHECK_MESSAGE(r_cat.ok(), r_cat.first_failure);

  Tensor c = random_tensor({5, 3}, rng);
  auto r_sl = check1(c, [](Tape& t, Var x) { return wsum(t, slice_rows(t, x, 1, 4)); });
  CHECK_MESSAGE(r_sl.ok(), r_sl.first_failure);

  Tensor h = random_tensor({6, 4}, rng);  // b=2, tokens=3, heads=2, dh=2
  auto r_split = check1(h, [](Tape& t, Var x) { return wsum(t, split_heads(t, x, 2, 3, 2)); });
  CHECK_MESSAGE(r_split.ok(), r_split.first_failure);
  Tensor hm = random_tensor({12, 2}, rng);
  auto r_merge = check1(hm, [](Tape& t, Var x) { return wsum(t, merge_heads(t, x, 2, 3, 2)); });
  CHECK_MESSAGE(r_merge.ok(), r_merge.first_failure);
}

TEST_CASE("grad: reductions") {
  Prng rng(8);
  Tensor a = random_tensor({3, 4}, rng);
  auto r_sum = check1(a, [](Tape& t, Var x) { return sum_all(t, x); });
  CHECK_MESSAGE(r_sum.ok(), r_sum.first_failure);
  auto r_mean = check1(a, [](Tape& t, Var x) { return mean_all(t, x); });
  CHECK_MESSAGE(r_mean.ok(), r_mean.first_failure);
  auto r_sr = check1(a, [](Tape& t, Var x) { return wsum(t, sum_rows(t, x)); });
  CHECK_MESSAGE(r_sr.ok(), r_sr.first_failure);

  Tensor p = random_tensor({6, 3}, rng);  // B=2, tokens=3
  auto r_mp = check1(p, [](Tape& t, Var x) { return wsum(t, mean_pool_rows(t, x, 3)); });
  CHECK_MESSAGE(r_mp.ok(), r_mp.first_failure);
}

TEST_CASE("grad: softmax family and l2 normalize") {
  Prng rng(9);
  Tensor a = random_tensor({3, 5}, rng, -2.0, 2.0);
  auto r_sm = check1(a, [](Tape& t, Var x) { return wsum(t, softmax_rows(t, x)); });
  CHECK_MESSAGE(r_sm.ok(), r_sm.first_failure);
  auto r_lsm = check1(a, [](Tape& t, Var x) { return wsum(t, log_softmax_rows(t, x)); });
  CHECK_MESSAGE(r_lsm.ok(), r_lsm.first_failure);

  Tensor b = signed_away_from_zero({3, 4}, 10);
  auto r_l2 = check1(b, [](Tape& t, Var x) { return wsum(t, l2_normalize_rows(t, x)); });
  CHECK_MESSAGE(r_l2.ok(), r_l2.first_failure);
}

TEST_CASE("grad: cosine similarity matrix") {
  Tensor a = signed_away_from_zero({3, 4}, 11);
  Tensor b = signed_away_from_zero({2, 4}, 12);
  auto rep = check2(a, b, [](Tape& t, Var x, Var y) {
    return wsum(t, cosine_similarity_matrix(t, x, y));
  });
  CHECK_MESSAGE(rep.ok(), rep.first_failure);
}

TEST_CASE("grad: layer norm over all three leaves") {
  Prng rng(13);
  Tensor a = random_tensor({3, 5}, rng);
  Tensor g = random_tensor({5}, rng, 0.5, 1.5);
  Tensor b = random_tensor({5}, rng);
  auto f = [](const std::vector<Tensor>& xs, std::vector<Tensor>* grads) {
    Tape t;
    Var va = t.leaf(xs[0]);
    Var vg = t.leaf(xs[1]);
    Var vb = t.leaf(xs[2]);
    Var loss = wsum(t, layer_norm(t, va, vg, vb));
    double lv = t.value(loss)[0];
    if (grads) {
      t.backward(loss);
      grads->push_back(t.grad(va));
      grads->push_back(t.grad(vg));
      grads->push_back(t.grad(vb));
    }
    return lv;
  };
  auto rep = grad_check({a, g, b}, f);
  CHECK_MESSAGE(rep.ok(), rep.first_failure);
}

TEST_CASE("grad: batch norm (training) over all three leaves") {
  Prng rng(14);
  Tensor a = random_tensor({2, 3, 4}, rng);
  Tensor g = random_tensor({3}, rng, 0.5, 1.5);
  Tensor b = random_tensor({3}, rng);
  auto f = [](const std::vector<Tensor>& xs, std::vector<Tensor>* grads) {
    Tape t;
    Var va = t.leaf(xs[0]);
    Var vg = t.leaf(xs[1]);
    Var vb = t.leaf(xs[2]);
    Tensor rm({3}, 0.0), rv({3}, 1.0);  // fresh stats: updates must not leak between evals
    Var loss = wsum(t, batch_norm_conv(t, va, vg, vb, rm, rv, true));
    double lv = t.value(loss)[0];
    if (grads) {
      t.backward(loss);
      grads->push_back(t.grad(va));
      grads->push_back(t.grad(vg));
      grads->push_back(t.grad(vb));
    }
    return lv;
  };
  auto rep = grad_check({a, g, b}, f);
  CHECK_MESSAGE(rep.ok(), rep.first_failure);
}

TEST_CASE("grad: dropout with replayed mask") {
  Prng rng(15);
  Tensor a = random_tensor({4, 8}, rng);
  auto rep = check1(a, [](Tape& t, Var x) {
    Prng mask_rng(42);  // fresh per evaluation: identical mask at every FD point
    return wsum(t, dropout(t, x, 0.3, mask_rng, true));
  });
  CHECK_MESSAGE(rep.ok(), rep.first_failure);
}

TEST_CASE("grad: conv stack") {
  Prng rng(16);
  Tensor a = random_tensor({2, 3, 8}, rng);
  Tensor w = random_tensor({4, 3, 3}, rng, -0.5, 0.5);
  Tensor b = random_tensor({4}, rng, -0.1, 0.1);
  auto f = [](const std::vector<Tensor>& xs, std::vector<Tensor>* grads) {
    Tape t;
    Var va = t.leaf(xs[0]);
    Var vw = t.leaf(xs[1]);
    Var vb = t.leaf(xs[2]);
    Var loss = wsum(t, conv1d(t, va, vw, vb));
    double lv = t.value(loss)[0];
    if (grads) {
      t.backward(loss);
      grads->push_back(t.grad(va));
      grads->push_back(t.grad(vw));
      grads->push_back(t.grad(vb));
    }
    return lv;
  };
  auto rep = grad_check({a, w, b}, f);
  CHECK_MESSAGE(rep.ok(), rep.first_failure);
}

TEST_CASE("grad: maxpool with well separated values") {
  // Distinct values with gaps far above the FD step so the argmax is stable.
  Tensor a({1, 2, 8});
  std::vector<double> perm = {3, 7, 1, 5, 0, 6, 2, 4, 11, 15, 9, 13, 8, 14, 10, 12};
  for (std::size_t i = 0; i < a.numel(); ++i) a[i] = perm[i] * 0.1;
  auto rep = check1(a, [](Tape& t, Var x) { return wsum(t, maxpool1d(t, x, 2)); });
  CHECK_MESSAGE(rep.ok(), rep.first_failure);
}

TEST_CASE("grad: global average pool") {
  Prng rng(17);
  Tensor a = random_tensor({2, 3, 5}, rng);
  auto rep = check1(a, [](Tape& t, Var x) { return wsum(t, global_avg_pool(t, x)); });
  CHECK_MESSAGE(rep.ok(), rep.first_failure);
}

TEST_CASE("grad: losses") {
  Prng rng(18);
  Tensor pred = random_tensor({3, 4}, rng);
  Tensor target = random_tensor({3, 4}, rng);
  auto f = [&target](const std::vector<Tensor>& xs, std::vector<Tensor>* grads) {
    Tape t;
    Var p = t.leaf(xs[0]);
    Var loss = mse_loss(t, p, t.constant(target));
    double lv = t.value(loss)[0];
    if (grads) {
      t.backward(loss);
      grads->push_back(t.grad(p));
    }
    return lv;
  };
  auto rep = grad_check({pred}, f);
  CHECK_MESSAGE(rep.ok(), rep.first_failure);

  Tensor logits = random_tensor({4, 3}, rng, -2.0, 2.0);
  std::vector<std::size_t> labels = {0, 2, 1, 2};
  auto rep_ce = check1(logits, [&labels](Tape& t, Var x) {
    return cross_entropy_loss(t, x, labels);
  });
  CHECK_MESSAGE(rep_ce.ok(), rep_ce.first_failure);
}

TEST_CASE("grad: composed network graph") {
  Prng rng(19);
  Tensor x = random_tensor({4, 6}, rng);
  Tensor w1 = random_tensor({6, 8}, rng, -0.5, 0.5);
  Tensor b1 = random_tensor({8}, rng, -0.1, 0.1);
  Tensor w2 = random_tensor({8, 3}, rng, -0.5, 0.5);
  std::vector<std::size_t> labels = {0, 2, 1, 0};
  auto f = [&labels](const std::vector<Tensor>& xs, std::vector<Tensor>* grads) {
    Tape t;
    Var vx = t.leaf(xs[0]);
    Var vw1 = t.leaf(xs[1]);
    Var vb1 = t.leaf(xs[2]);
    Var vw2 = t.leaf(xs[3]);
    Prng drop_rng(31);
    Var h = gelu(t, add(t, matmul(t, vx, vw1), vb1));
    h = dropout(t, h, 0.25, drop_rng, true);
    Var loss = cross_entropy_loss(t, matmul(t, h, vw2), labels);
    double lv = t.value(loss)[0];
    if (grads) {
      t.backward(loss);
      for (Var v : {vx, vw1, vb1, vw2}) grads->push_back(t.grad(v));
    }
    return lv;
  };
  auto rep = grad_check({x, w1, b1, w2}, f);
  CHECK_MESSAGE(rep.ok(), rep.first_failure);
}

// ------------------------------------------------------------------- values

TEST_CASE("matmul by identity returns the input bitwise") {
  Prng rng(20);
  Tensor x = random_tensor({3, 5}, rng);
  Tensor eye({5, 5});
  for (std::size_t i = 0; i < 5; ++i) eye.at(i, i) = 1.0;
  Tape t;
  Var out = matmul(t, t.leaf(x), t.constant(eye));
  CHECK(pssl::test::bitwise_equal(t.value(out), x));
}

TEST_CASE("softmax of zeros is uniform and rows always sum to one") {
  Tape t;
  Var out = softmax_rows(t, t.leaf(Tensor({2, 4}, 0.0)));
  for (std::size_t i = 0; i < 8; ++i) CHECK(t.value(out)[i] == doctest::Approx(0.25).epsilon(1e-14));

  Prng rng(21);
  Var r = softmax_rows(t, t.leaf(random_tensor({5, 7}, rng, -3.0, 3.0)));
  for (std::size_t i = 0; i < 5; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 7; ++j) s += t.value(r).at(i, j);
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("log_softmax agrees with log of softmax") {
  Prng rng(22);
  Tensor x = random_tensor({3, 5}, rng, -2.0, 2.0);
  Tape t;
  Var a = t.leaf(x);
  const Tensor& ls = t.value(log_softmax_rows(t, a));
  const Tensor& sm = t.value(softmax_rows(t, a));
  for (std::size_t i = 0; i < ls.numel(); ++i)
    CHECK(ls[i] == doctest::Approx(std::log(sm[i])).epsilon(1e-12));
}

TEST_CASE("l2_normalize_rows: unit norms, scale invariance, zero row rejected") {
  Prng rng(23);
  Tensor x = signed_away_from_zero({4, 6}, 24);
  Tape t;
  const Tensor& z = t.value(l2_normalize_rows(t, t.leaf(x)));
  for (std::size_t i = 0; i < 4; ++i) {
    double n2 = 0.0;
    for (std::size_t j = 0; j < 6; ++j) n2 += z.at(i, j) * z.at(i, j);
    CHECK(std::abs(std::sqrt(n2) - 1.0) <= 1e-12);
  }

  Tensor v = Tensor::from_rows({{1, 2, 2}});
  Tensor v2 = Tensor::from_rows({{2, 4, 4}});
  Tape t2;
  const Tensor& za = t2.value(l2_normalize_rows(t2, t2.leaf(v)));
  const Tensor& zb = t2.value(l2_normalize_rows(t2, t2.leaf(v2)));
  CHECK(max_abs_diff(za, zb) <= 1e-12);
  CHECK(za[0] == doctest::Approx(1.0 / 3).epsilon(1e-14));

  Tape t3;
  CHECK_THROWS_AS(l2_normalize_rows(t3, t3.leaf(Tensor::from_rows({{0, 0, 0}}))),
                  pssl::ContractError);
}

TEST_CASE("cosine similarity hand values") {
  Tensor a = Tensor::from_rows({{1, 0}});
  Tensor b = Tensor::from_rows({{1, 1}, {0, 2}});
  Tape t;
  const Tensor& s = t.value(cosine_similarity_matrix(t, t.leaf(a), t.leaf(b)));
  CHECK(s.at(0, 0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(std::abs(s.at(0, 1)) <= 1e-12);
}

TEST_CASE("layer norm matches the closed form") {
  Tensor x = Tensor::from_rows({{1, 2, 3}});
  Tensor gamma = Tensor::from_row({2, 2, 2});
  Tensor beta = Tensor::from_row({0.5, 0.5, 0.5});
  Tape t;
  const Tensor& out =
      t.value(layer_norm(t, t.leaf(x), t.leaf(gamma), t.leaf(beta)));
  const double inv = 1.0 / std::sqrt(2.0 / 3.0 + 1e-5);
  for (std::size_t j = 0; j < 3; ++j) {
    double expect = 2.0 * ((x[j] - 2.0) * inv) + 0.5;
    CHECK(out[j] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("batch norm: training stats, running update, eval path") {
  Tensor x({2, 1, 2});
  x[0] = 1; x[1] = 2; x[2] = 3; x[3] = 4;
  Tensor gamma({1}, 1.0), beta({1}, 0.0);
  Tensor rm({1}, 0.0), rv({1}, 1.0);

  Tape t;
  const Tensor& out =
      t.value(batch_norm_conv(t, t.leaf(x), t.leaf(gamma), t.leaf(beta), rm, rv, true));
  const double mean = 2.5, var = 1.25;
  const double inv = 1.0 / std::sqrt(var + 1e-5);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(out[i] == doctest::Approx((x[i] - mean) * inv).epsilon(1e-12));
  CHECK(rm[0] == doctest::Approx(0.99 * 0.0 + 0.01 * mean).epsilon(1e-12));
  CHECK(rv[0] == doctest::Approx(0.99 * 1.0 + 0.01 * var).epsilon(1e-12));

  // Eval normalizes with the running stats and leaves them untouched.
  const double rm0 = rm[0], rv0 = rv[0];
  Tape te;
  const Tensor& eo =
      te.value(batch_norm_conv(te, te.leaf(x), te.leaf(gamma), te.leaf(beta), rm, rv, false));
  const double einv = 1.0 / std::sqrt(rv0 + 1e-5);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(eo[i] == doctest::Approx((x[i] - rm0) * einv).epsilon(1e-12));
  CHECK(rm[0] == rm0);
  CHECK(rv[0] == rv0);
}

TEST_CASE("dropout: eval and rate zero are the identity node") {
  Prng rng(25);
  Tape t;
  Var a = t.leaf(random_tensor({3, 3}, rng));
  Var e = dropout(t, a, 0.5, rng, false);
  CHECK(e.idx == a.idx);
  Var z = dropout(t, a, 0.0, rng, true);
  CHECK(z.idx == a.idx);
}

TEST_CASE("dropout: training scales kept units and zeroes the rest") {
  Tensor x({10000}, 2.0);
  Prng rng(26);
  Tape t;
  const Tensor& out = t.value(dropout(t, t.leaf(x), 0.5, rng, true));
  std::size_t kept = 0;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    bool zero = out[i] == 0.0;
    bool scaled = out[i] == 4.0;  // 2.0 / (1 - 0.5)
    CHECK((zero || scaled));
    kept += scaled ? 1 : 0;
  }
  double frac = static_cast<double>(kept) / static_cast<double>(out.numel());
  CHECK(frac == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("dropout: consumes exactly one parent draw") {
  Prng a(27), b(27);
  Tape t;
  (void)dropout(t, t.leaf(Tensor({100}, 1.0)), 0.3, a, true);
  (void)b.next_u64();
  CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("conv1d with a centered identity kernel reproduces the input") {
  Prng rng(28);
  Tensor x = random_tensor({2, 1, 6}, rng);
  Tensor w({1, 1, 3}, 0.0);
  w[1] = 1.0;  // center tap
  Tensor bias({1}, 0.0);
  Tape t;
  const Tensor& out = t.value(conv1d(t, t.leaf(x), t.constant(w), t.constant(bias)));
  CHECK(max_abs_diff(out, x) == 0.0);
}

TEST_CASE("maxpool and global average pool hand values") {
  Tensor x({1, 1, 4});
  x[0] = 1; x[1] = 3; x[2] = 2; x[3] = 0;
  Tape t;
  const Tensor& p = t.value(maxpool1d(t, t.leaf(x), 2));
  REQUIRE(p.numel() == 2);
  CHECK(p[0] == 3);
  CHECK(p[1] == 2);

  Tensor y({1, 2, 4});
  for (std::size_t i = 0; i < 8; ++i) y[i] = static_cast<double>(i);
  const Tensor& g = t.value(global_avg_pool(t, t.leaf(y)));
  REQUIRE(g.numel() == 2);
  CHECK(g[0] == doctest::Approx(1.5));
  CHECK(g[1] == doctest::Approx(5.5));
}

TEST_CASE("split_heads and merge_heads invert each other bitwise") {
  Prng rng(29);
  Tensor x = random_tensor({6, 4}, rng);  // b=2, tokens=3, heads=2
  Tape t;
  Var s = split_heads(t, t.leaf(x), 2, 3, 2);
  CHECK(t.value(s).dim(0) == 12);
  CHECK(t.value(s).dim(1) == 2);
  Var m = merge_heads(t, s, 2, 3, 2);
  CHECK(pssl::test::bitwise_equal(t.value(m), x));
}

TEST_CASE("slice of a concat recovers the parts bitwise") {
  Prng rng(30);
  Tensor a = random_tensor({2, 3}, rng);
  Tensor b = random_tensor({4, 3}, rng);
  Tape t;
  Var cat = concat_rows(t, t.leaf(a), t.leaf(b));
  CHECK(t.value(cat).dim(0) == 6);
  CHECK(pssl::test::bitwise_equal(t.value(slice_rows(t, cat, 0, 2)), a));
  CHECK(pssl::test::bitwise_equal(t.value(slice_rows(t, cat, 2, 6)), b));
}

TEST_CASE("reduction and loss hand values") {
  Tensor x = Tensor::from_rows({{1, 2}, {3, 4}});
  Tape t;
  CHECK(t.value(sum_all(t, t.leaf(x)))[0] == 10.0);
  CHECK(t.value(mean_all(t, t.leaf(x)))[0] == 2.5);
  const Tensor& sr = t.value(sum_rows(t, t.leaf(x)));
  CHECK(sr[0] == 3.0);
  CHECK(sr[1] == 7.0);

  Tensor p4 = Tensor::from_rows({{1, 0}, {2, 2}, {3, 4}, {5, 6}});
  const Tensor& mp = t.value(mean_pool_rows(t, t.leaf(p4), 2));
  CHECK(mp.at(0, 0) == 1.5);
  CHECK(mp.at(0, 1) == 1.0);
  CHECK(mp.at(1, 0) == 4.0);
  CHECK(mp.at(1, 1) == 5.0);

  Var mse = mse_loss(t, t.leaf(Tensor::from_row({1, 2})), t.constant(Tensor::from_row({0, 0})));
  CHECK(t.value(mse)[0] == doctest::Approx(2.5).epsilon(1e-15));

  Var ce = cross_entropy_loss(t, t.leaf(Tensor::from_rows({{0, 0}})), {0});
  CHECK(t.value(ce)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  // Asymmetric logits, hand-computed.
  Var ce2 = cross_entropy_loss(t, t.leaf(Tensor::from_rows({{1, 2, 3}})), {2});
  double denom = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(t.value(ce2)[0] == doctest::Approx(-std::log(std::exp(3.0) / denom)).epsilon(1e-13));
}

TEST_CASE("nonlinearity point values") {
  Tape t;
  Var x = t.leaf(Tensor::from_row({0.0, 1.0, -1.0}));
  const Tensor& g = t.value(gelu(t, x));
  CHECK(g[0] == 0.0);
  CHECK(g[1] == doctest::Approx(0.8413447460685429).epsilon(1e-12));  // Phi(1)
  const Tensor& s = t.value(sigmoid(t, x));
  CHECK(s[0] == 0.5);
  const Tensor& th = t.value(tanh_op(t, x));
  CHECK(th[1] == doctest::Approx(std::tanh(1.0)).epsilon(1e-15));
}

TEST_CASE("shape mismatches raise ShapeError") {
  Tape t;
  Var a = t.leaf(Tensor({2, 3}));
  Var b = t.leaf(Tensor({3, 2}));
  CHECK_THROWS_AS(add(t, a, b), pssl::ShapeError);
  CHECK_THROWS_AS(sub(t, a, b), pssl::ShapeError);
  CHECK_THROWS_AS(mul(t, a, b), pssl::ShapeError);
  CHECK_THROWS_AS(matmul(t, a, t.leaf(Tensor({2, 2}))), pssl::ShapeError);
  CHECK_THROWS_AS(concat_rows(t, a, b), pssl::ShapeError);
}

TEST_CASE("overflow to infinity raises NumericsError") {
  Tape t;
  Var a = t.leaf(Tensor::from_row({1e4}));
  CHECK_THROWS_AS(exp_op(t, a), pssl::NumericsError);
}

TEST_CASE("backward demands a scalar loss") {
  Tape t;
  Var a = t.leaf(Tensor({2, 2}, 1.0));
  CHECK_THROWS_AS(t.backward(a), pssl::ContractError);
}

TEST_CASE("sum of parameters has all-ones gradient") {
  Prng rng(31);
  Tensor x = random_tensor({3, 4}, rng);
  Tape t;
  Var a = t.leaf(x);
  t.backward(sum_all(t, a));
  const Tensor& g = t.grad(a);
  REQUIRE(g.same_shape(x));
  for (std::size_t i = 0; i < g.numel(); ++i) CHECK(g[i] == 1.0);
}

TEST_CASE("a leaf unused by the loss gets a zero gradient") {
  Tape t;
  Var used = t.leaf(Tensor::from_row({1, 2}));
  Var unused = t.leaf(Tensor({3, 2}, 5.0));
  t.backward(sum_all(t, used));
  const Tensor& g = t.grad(unused);
  CHECK(g.same_shape(t.value(unused)));
  for (std::size_t i = 0; i < g.numel(); ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("identical graphs give bit-identical losses and gradients") {
  auto run = [](Tensor* grad_out) {
    Prng rng(33);
    Tensor x = random_tensor({4, 6}, rng);
    Tensor w = random_tensor({6, 2}, rng);
    Tape t;
    Var vx = t.leaf(x);
    Var vw = t.leaf(w);
    Prng drop_rng(8);
    Var h = dropout(t, gelu(t, matmul(t, vx, vw)), 0.4, drop_rng, true);
    Var loss = mean_all(t, h);
    t.backward(loss);
    if (grad_out) *grad_out = t.grad(vw);
    return t.value(loss)[0];
  };
  Tensor g1, g2;
  double l1 = run(&g1);
  double l2 = run(&g2);
  CHECK(l1 == l2);
  CHECK(pssl::test::bitwise_equal(g1, g2));
}
