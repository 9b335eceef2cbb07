#include "pssl/tape.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>

#include "pssl/errors.hpp"

namespace pssl {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<Mat>;
using CMapM = Eigen::Map<const Mat>;

CMapM cmap(const Tensor& t, std::size_t rows, std::size_t cols) {
  return CMapM(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
MapM map(Tensor& t, std::size_t rows, std::size_t cols) {
  return MapM(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

// Flat array views; elementwise op bodies go through Eigen so they vectorize.
using MapA = Eigen::Map<Eigen::ArrayXd>;
using CMapA = Eigen::Map<const Eigen::ArrayXd>;

CMapA carr(const Tensor& t) {
  return CMapA(t.data(), static_cast<Eigen::Index>(t.numel()));
}
MapA arr(Tensor& t) { return MapA(t.data(), static_cast<Eigen::Index>(t.numel())); }
CMapA carr(const double* p, std::size_t n) { return CMapA(p, static_cast<Eigen::Index>(n)); }
MapA arr(double* p, std::size_t n) { return MapA(p, static_cast<Eigen::Index>(n)); }

void require_rank2(const Tensor& t, const char* where) {
  if (t.rank() != 2)
    throw ShapeError(std::string(where) + ": expected rank-2, got " + t.shape_str());
}

}  // namespace

// ------------------------------------------------------------- Tape core

Var Tape::leaf(Tensor value) { return emplace(std::move(value), true, "leaf"); }

Var Tape::constant(Tensor value) { return emplace(std::move(value), false, "constant"); }

Var Tape::emplace(Tensor value, bool ng, const char* where) {
  require_finite(value, where);
  Node node;
  node.value = std::move(value);
  node.needs_grad = ng;
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::set_backfn(Var v, std::function<void(Tape&)> backfn) {
  nodes_[static_cast<std::size_t>(v.idx)].backfn = std::move(backfn);
}

const Tensor& Tape::value(Var v) const {
  if (!v.valid() || static_cast<std::size_t>(v.idx) >= nodes_.size())
    throw ContractError("tape: invalid Var handle");
  return nodes_[static_cast<std::size_t>(v.idx)].value;
}

const Tensor& Tape::grad(Var v) const {
  if (!v.valid() || static_cast<std::size_t>(v.idx) >= nodes_.size())
    throw ContractError("tape: invalid Var handle");
  const Node& n = nodes_[static_cast<std::size_t>(v.idx)];
  if (!n.grad_alloc) {
    // Unreached nodes carry an all-zero gradient of the value's shape.
    auto& mut = const_cast<Node&>(n);
    mut.grad = Tensor(n.value.shape(), 0.0);
    mut.grad_alloc = true;
  }
  return n.grad;
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = nodes_[static_cast<std::size_t>(v.idx)];
  if (!n.grad_alloc) {
    n.grad = Tensor(n.value.shape(), 0.0);
    n.grad_alloc = true;
  }
  return n.grad;
}

bool Tape::needs_grad(Var v) const {
  return nodes_[static_cast<std::size_t>(v.idx)].needs_grad;
}

void Tape::backward(Var loss) {
  if (!loss.valid() || static_cast<std::size_t>(loss.idx) >= nodes_.size())
    throw ContractError("backward: invalid loss handle");
  if (value(loss).numel() != 1) throw ContractError("backward: loss must be scalar");
  grad_buffer(loss)[0] = 1.0;
  for (int i = loss.idx; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad_alloc && n.backfn) n.backfn(*this);
  }
}

// ------------------------------------------------- elementwise arithmetic

Var add(Tape& t, Var a, Var b) {
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  const bool broadcast = va.rank() == 2 && vb.rank() == 1 && va.dim(1) == vb.dim(0);
  if (!broadcast) require_same_shape(va, vb, "add");

  Tensor out = va;
  if (broadcast) {
    const std::size_t m = va.dim(0), n = va.dim(1);
    map(out, m, n).rowwise() += cmap(vb, 1, n).row(0);
  } else {
    arr(out) += carr(vb);
  }

  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  Var o = t.emplace(std::move(out), ng, "add");
  if (!ng) return o;
  const int ai = a.idx, bi = b.idx, oi = o.idx;
  t.set_backfn(o, [ai, bi, oi, broadcast](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    if (tt.needs_grad(Var{ai})) {
      Tensor& ga = tt.grad_buffer(Var{ai});
      arr(ga) += carr(gy);
    }
    if (tt.needs_grad(Var{bi})) {
      Tensor& gb = tt.grad_buffer(Var{bi});
      if (broadcast) {
        const std::size_t n = gb.numel();
        const std::size_t m = gy.numel() / n;
        map(gb, 1, n).row(0) += cmap(gy, m, n).colwise().sum();
      } else {
        arr(gb) += carr(gy);
      }
    }
  });
  return o;
}

Var sub(Tape& t, Var a, Var b) {
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  require_same_shape(va, vb, "sub");
  Tensor out = va;
  arr(out) -= carr(vb);
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  Var o = t.emplace(std::move(out), ng, "sub");
  if (!ng) return o;
  const int ai = a.idx, bi = b.idx, oi = o.idx;
  t.set_backfn(o, [ai, bi, oi](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    if (tt.needs_grad(Var{ai})) {
      Tensor& ga = tt.grad_buffer(Var{ai});
      arr(ga) += carr(gy);
    }
    if (tt.needs_grad(Var{bi})) {
      Tensor& gb = tt.grad_buffer(Var{bi});
      arr(gb) -= carr(gy);
    }
  });
  return o;
}

Var mul(Tape& t, Var a, Var b) {
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  require_same_shape(va, vb, "mul");
  Tensor out = va;
  arr(out) *= carr(vb);
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  Var o = t.emplace(std::move(out), ng, "mul");
  if (!ng) return o;
  const int ai = a.idx, bi = b.idx, oi = o.idx;
  t.set_backfn(o, [ai, bi, oi](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    const Tensor& va2 = tt.value(Var{ai});
    const Tensor& vb2 = tt.value(Var{bi});
    if (tt.needs_grad(Var{ai})) {
      Tensor& ga = tt.grad_buffer(Var{ai});
      arr(ga) += carr(gy) * carr(vb2);
    }
    if (tt.needs_grad(Var{bi})) {
      Tensor& gb = tt.grad_buffer(Var{bi});
      arr(gb) += carr(gy) * carr(va2);
    }
  });
  return o;
}

Var scale(Tape& t, Var a, double c) {
  if (!std::isfinite(c)) throw NumericsError("scale: non-finite factor");
  Tensor out = t.value(a);
  arr(out) *= c;
  const bool ng = t.needs_grad(a);
  Var o = t.emplace(std::move(out), ng, "scale");
  if (!ng) return o;
  const int ai = a.idx, oi = o.idx;
  t.set_backfn(o, [ai, oi, c](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    Tensor& ga = tt.grad_buffer(Var{ai});
    arr(ga) += c * carr(gy);
  });
  return o;
}

Var shift(Tape& t, Var a, double c) {
  if (!std::isfinite(c)) throw NumericsError("shift: non-finite offset");
  Tensor out = t.value(a);
  arr(out) += c;
  const bool ng = t.needs_grad(a);
  Var o = t.emplace(std::move(out), ng, "shift");
  if (!ng) return o;
  const int ai = a.idx, oi = o.idx;
  t.set_backfn(o, [ai, oi](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    Tensor& ga = tt.grad_buffer(Var{ai});
    arr(ga) += carr(gy);
  });
  return o;
}

Var relu(Tape& t, Var a) {
  Tensor out = t.value(a);
  arr(out) = arr(out).max(0.0);
  const bool ng = t.needs_grad(a);
  Var o = t.emplace(std::move(out), ng, "relu");
  if (!ng) return o;
  const int ai = a.idx, oi = o.idx;
  t.set_backfn(o, [ai, oi](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    const Tensor& va = tt.value(Var{ai});
    Tensor& ga = tt.grad_buffer(Var{ai});
    arr(ga) += (carr(va) > 0.0).select(carr(gy), 0.0);
  });
  return o;
}

Var gelu(Tape& t, Var a) {
  const Tensor& va = t.value(a);
  Tensor out = va;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double x = out[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * 0.7071067811865476));
  }
  const bool ng = t.needs_grad(a);
  Var o = t.emplace(std::move(out), ng, "gelu");
  if (!ng) return o;
  const int ai = a.idx, oi = o.idx;
  t.set_backfn(o, [ai, oi](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    const Tensor& va2 = tt.value(Var{ai});
    Tensor& ga = tt.grad_buffer(Var{ai});
    for (std::size_t i = 0; i < ga.numel(); ++i) {
      const double x = va2[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865476));
      const double pdf = 0.3989422804014327 * std::exp(-0.5 * x * x);
      ga[i] += gy[i] * (cdf + x * pdf);
    }
  });
  return o;
}

Var tanh_op(Tape& t, Var a) {
  Tensor out = t.value(a);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
  const bool ng = t.needs_grad(a);
  Var o = t.emplace(std::move(out), ng, "tanh");
  if (!ng) return o;
  const int ai = a.idx, oi = o.idx;
  t.set_backfn(o, [ai, oi](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    const Tensor& vo = tt.value(Var{oi});
    Tensor& ga = tt.grad_buffer(Var{ai});
    arr(ga) += carr(gy) * (1.0 - carr(vo).square());
  });
  return o;
}

Var sigmoid(Tape& t, Var a) {
  Tensor out = t.value(a);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  const bool ng = t.needs_grad(a);
  Var o = t.emplace(std::move(out), ng, "sigmoid");
  if (!ng) return o;
  const int ai = a.idx, oi = o.idx;
  t.set_backfn(o, [ai, oi](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    const Tensor& vo = tt.value(Var{oi});
    Tensor& ga = tt.grad_buffer(Var{ai});
    arr(ga) += carr(gy) * carr(vo) * (1.0 - carr(vo));
  });
  return o;
}

Var exp_op(Tape& t, Var a) {
  Tensor out = t.value(a);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
  const bool ng = t.needs_grad(a);
  Var o = t.emplace(std::move(out), ng, "exp");
  if (!ng) return o;
  const int ai = a.idx, oi = o.idx;
  t.set_backfn(o, [ai, oi](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    const Tensor& vo = tt.value(Var{oi});
    Tensor& ga = tt.grad_buffer(Var{ai});
    arr(ga) += carr(gy) * carr(vo);
  });
  return o;
}

Var log_op(Tape& t, Var a) {
  Tensor out = t.value(a);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::log(out[i]);
  const bool ng = t.needs_grad(a);
  Var o = t.emplace(std::move(out), ng, "log");
  if (!ng) return o;
  const int ai = a.idx, oi = o.idx;
  t.set_backfn(o, [ai, oi](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    const Tensor& va = tt.value(Var{ai});
    Tensor& ga = tt.grad_buffer(Var{ai});
    arr(ga) += carr(gy) / carr(va);
  });
  return o;
}

// ---------------------------------------------------------- linear algebra

Var matmul(Tape& t, Var a, Var b) {
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  require_rank2(va, "matmul lhs");
  require_rank2(vb, "matmul rhs");
  if (va.dim(1) != vb.dim(0))
    throw ShapeError("matmul: inner dims differ, " + va.shape_str() + " x " + vb.shape_str());
  const std::size_t m = va.dim(0), k = va.dim(1), n = vb.dim(1);
  Tensor out({m, n});
  map(out, m, n).noalias() = cmap(va, m, k) * cmap(vb, k, n);
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  Var o = t.emplace(std::move(out), ng, "matmul");
  if (!ng) return o;
  const int ai = a.idx, bi = b.idx, oi = o.idx;
  t.set_backfn(o, [ai, bi, oi, m, k, n](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    const Tensor& va2 = tt.value(Var{ai});
    const Tensor& vb2 = tt.value(Var{bi});
    if (tt.needs_grad(Var{ai})) {
      Tensor& ga = tt.grad_buffer(Var{ai});
      map(ga, m, k).noalias() += cmap(gy, m, n) * cmap(vb2, k, n).transpose();
    }
    if (tt.needs_grad(Var{bi})) {
      Tensor& gb = tt.grad_buffer(Var{bi});
      map(gb, k, n).noalias() += cmap(va2, m, k).transpose() * cmap(gy, m, n);
    }
  });
  return o;
}

Var transpose(Tape& t, Var a) {
  const Tensor& va = t.value(a);
  require_rank2(va, "transpose");
  const std::size_t m = va.dim(0), n = va.dim(1);
  Tensor out({n, m});
  map(out, n, m) = cmap(va, m, n).transpose();
  const bool ng = t.needs_grad(a);
  Var o = t.emplace(std::move(out), ng, "transpose");
  if (!ng) return o;
  const int ai = a.idx, oi = o.idx;
  t.set_backfn(o, [ai, oi, m, n](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    Tensor& ga = tt.grad_buffer(Var{ai});
    map(ga, m, n) += cmap(gy, n, m).transpose();
  });
  return o;
}

Var bmm(Tape& t, Var a, Var b, std::size_t batch, std::size_t m, std::size_t k,
        std::size_t n, bool transpose_b) {
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  if (va.numel() != batch * m * k)
    throw ShapeError("bmm: lhs " + va.shape_str() + " does not hold batch*m*k elements");
  const std::size_t b_elems = transpose_b ? batch * n * k : batch * k * n;
  if (vb.numel() != b_elems)
    throw ShapeError("bmm: rhs " + vb.shape_str() + " does not hold the expected elements");

  Tensor out({batch * m, n});
  for (std::size_t i = 0; i < batch; ++i) {
    CMapM ma(va.data() + i * m * k, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
    MapM mo(out.data() + i * m * n, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    if (transpose_b) {
      CMapM mb(vb.data() + i * n * k, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
      mo.noalias() = ma * mb.transpose();
    } else {
      CMapM mb(vb.data() + i * k * n, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
      mo.noalias() = ma * mb;
    }
  }
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  Var o = t.emplace(std::move(out), ng, "bmm");
  if (!ng) return o;
  const int ai = a.idx, bi = b.idx, oi = o.idx;
  t.set_backfn(o, [ai, bi, oi, batch, m, k, n, transpose_b](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    const Tensor& va2 = tt.value(Var{ai});
    const Tensor& vb2 = tt.value(Var{bi});
    const bool need_a = tt.needs_grad(Var{ai});
    const bool need_b = tt.needs_grad(Var{bi});
    Tensor* ga = need_a ? &tt.grad_buffer(Var{ai}) : nullptr;
    Tensor* gb = need_b ? &tt.grad_buffer(Var{bi}) : nullptr;
    for (std::size_t i = 0; i < batch; ++i) {
      CMapM mg(gy.data() + i * m * n, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
      CMapM ma(va2.data() + i * m * k, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
      if (transpose_b) {
        CMapM mb(vb2.data() + i * n * k, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
        if (need_a) {
          MapM mga(ga->data() + i * m * k, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
          mga.noalias() += mg * mb;
        }
        if (need_b) {
          MapM mgb(gb->data() + i * n * k, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
          mgb.noalias() += mg.transpose() * ma;
        }
      } else {
        CMapM mb(vb2.data() + i * k * n, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
        if (need_a) {
          MapM mga(ga->data() + i * m * k, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
          mga.noalias() += mg * mb.transpose();
        }
        if (need_b) {
          MapM mgb(gb->data() + i * k * n, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
          mgb.noalias() += ma.transpose() * mg;
        }
      }
    }
  });
  return o;
}

// -------------------------------------------------------- shape/structure

Var reshape(Tape& t, Var a, std::vector<std::size_t> shape) {
  Tensor out = t.value(a).reshaped(std::move(shape));
  const bool ng = t.needs_grad(a);
  Var o = t.emplace(std::move(out), ng, "reshape");
  if (!ng) return o;
  const int ai = a.idx, oi = o.idx;
  t.set_backfn(o, [ai, oi](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    Tensor& ga = tt.grad_buffer(Var{ai});
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += gy[i];
  });
  return o;
}

Var concat_rows(Tape& t, Var a, Var b) {
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  require_rank2(va, "concat_rows lhs");
  require_rank2(vb, "concat_rows rhs");
  if (va.dim(1) != vb.dim(1))
    throw ShapeError("concat_rows: column mismatch " + va.shape_str() + " vs " + vb.shape_str());
  const std::size_t m1 = va.dim(0), m2 = vb.dim(0), n = va.dim(1);
  Tensor out({m1 + m2, n});
  std::copy(va.data(), va.data() + m1 * n, out.data());
  std::copy(vb.data(), vb.data() + m2 * n, out.data() + m1 * n);
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  Var o = t.emplace(std::move(out), ng, "concat_rows");
  if (!ng) return o;
  const int ai = a.idx, bi = b.idx, oi = o.idx;
  t.set_backfn(o, [ai, bi, oi, m1, m2, n](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    if (tt.needs_grad(Var{ai})) {
      Tensor& ga = tt.grad_buffer(Var{ai});
      for (std::size_t i = 0; i < m1 * n; ++i) ga[i] += gy[i];
    }
    if (tt.needs_grad(Var{bi})) {
      Tensor& gb = tt.grad_buffer(Var{bi});
      for (std::size_t i = 0; i < m2 * n; ++i) gb[i] += gy[m1 * n + i];
    }
  });
  return o;
}

Var slice_rows(Tape& t, Var a, std::size_t row0, std::size_t row1) {
  const Tensor& va = t.value(a);
  require_rank2(va, "slice_rows");
  const std::size_t m = va.dim(0), n = va.dim(1);
  if (row0 >= row1 || row1 > m)
    throw ShapeError("slice_rows: rows [" + std::to_string(row0) + ", " + std::to_string(row1) +
                     ") invalid for " + va.shape_str());
  const std::size_t k = row1 - row0;
  Tensor out({k, n});
  std::copy(va.data() + row0 * n, va.data() + row1 * n, out.data());
  const bool ng = t.needs_grad(a);
  Var o = t.emplace(std::move(out), ng, "slice_rows");
  if (!ng) return o;
  const int ai = a.idx, oi = o.idx;
  t.set_backfn(o, [ai, oi, row0, k, n](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    Tensor& ga = tt.grad_buffer(Var{ai});
    arr(ga.data() + row0 * n, k * n) += carr(gy);
  });
  return o;
}

namespace {

// Permutation for split_heads: out((b*H + h)*T + t, d) = in(b*T + t, h*D + d).
std::vector<std::size_t> head_permutation(std::size_t b, std::size_t tokens,
                                          std::size_t heads, std::size_t dh) {
  std::vector<std::size_t> perm(b * heads * tokens * dh);
  std::size_t o = 0;
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t ti = 0; ti < tokens; ++ti)
        for (std::size_t d = 0; d < dh; ++d)
          perm[o++] = (bi * tokens + ti) * heads * dh + h * dh + d;
  return perm;
}

}  // namespace

Var split_heads(Tape& t, Var a, std::size_t b, std::size_t tokens, std::size_t heads) {
  const Tensor& va = t.value(a);
  require_rank2(va, "split_heads");
  if (va.dim(0) != b * tokens || va.dim(1) % heads != 0)
    throw ShapeError("split_heads: input " + va.shape_str() + " incompatible with b*T rows");
  const std::size_t dh = va.dim(1) / heads;
  auto perm = std::make_shared<std::vector<std::size_t>>(head_permutation(b, tokens, heads, dh));
  Tensor out({b * heads * tokens, dh});
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = va[(*perm)[i]];
  const bool ng = t.needs_grad(a);
  Var o = t.emplace(std::move(out), ng, "split_heads");
  if (!ng) return o;
  const int ai = a.idx, oi = o.idx;
  t.set_backfn(o, [ai, oi, perm](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    Tensor& ga = tt.grad_buffer(Var{ai});
    for (std::size_t i = 0; i < gy.numel(); ++i) ga[(*perm)[i]] += gy[i];
  });
  return o;
}

Var merge_heads(Tape& t, Var a, std::size_t b, std::size_t tokens, std::size_t heads) {
  const Tensor& va = t.value(a);
  require_rank2(va, "merge_heads");
  if (va.dim(0) != b * heads * tokens)
    throw ShapeError("merge_heads: input " + va.shape_str() + " incompatible with b*H*T rows");
  const std::size_t dh = va.dim(1);
  auto perm = std::make_shared<std::vector<std::size_t>>(head_permutation(b, tokens, heads, dh));
  Tensor out({b * tokens, heads * dh});
  // split_heads maps out[i] = in[perm[i]]; merging is the inverse walk.
  for (std::size_t i = 0; i < va.numel(); ++i) out[(*perm)[i]] = va[i];
  const bool ng = t.needs_grad(a);
  Var o = t.emplace(std::move(out), ng, "merge_heads");
  if (!ng) return o;
  const int ai = a.idx, oi = o.idx;
  t.set_backfn(o, [ai, oi, perm](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    Tensor& ga = tt.grad_buffer(Var{ai});
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += gy[(*perm)[i]];
  });
  return o;
}

// --------------------------------------------------------------- reductions

Var sum_all(Tape& t, Var a) {
  const Tensor& va = t.value(a);
  double s = 0.0;
  for (std::size_t i = 0; i < va.numel(); ++i) s += va[i];
  const bool ng = t.needs_grad(a);
  Var o = t.emplace(Tensor::scalar(s), ng, "sum_all");
  if (!ng) return o;
  const int ai = a.idx, oi = o.idx;
  t.set_backfn(o, [ai, oi](Tape& tt) {
    const double g = tt.grad(Var{oi})[0];
    Tensor& ga = tt.grad_buffer(Var{ai});
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  });
  return o;
}

Var mean_all(Tape& t, Var a) {
  const Tensor& va = t.value(a);
  if (va.numel() == 0) throw ShapeError("mean_all: empty tensor");
  const double inv = 1.0 / static_cast<double>(va.numel());
  double s = 0.0;
  for (std::size_t i = 0; i < va.numel(); ++i) s += va[i];
  const bool ng = t.needs_grad(a);
  Var o = t.emplace(Tensor::scalar(s * inv), ng, "mean_all");
  if (!ng) return o;
  const int ai = a.idx, oi = o.idx;
  t.set_backfn(o, [ai, oi, inv](Tape& tt) {
    const double g = tt.grad(Var{oi})[0] * inv;
    Tensor& ga = tt.grad_buffer(Var{ai});
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  });
  return o;
}

Var sum_rows(Tape& t, Var a) {
  const Tensor& va = t.value(a);
  require_rank2(va, "sum_rows");
  const std::size_t m = va.dim(0), n = va.dim(1);
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += va[i * n + j];
    out[i] = s;
  }
  const bool ng = t.needs_grad(a);
  Var o = t.emplace(std::move(out), ng, "sum_rows");
  if (!ng) return o;
  const int ai = a.idx, oi = o.idx;
  t.set_backfn(o, [ai, oi, m, n](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    Tensor& ga = tt.grad_buffer(Var{ai});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += gy[i];
  });
  return o;
}

Var mean_pool_rows(Tape& t, Var a, std::size_t tokens) {
  const Tensor& va = t.value(a);
  require_rank2(va, "mean_pool_rows");
  if (tokens == 0 || va.dim(0) % tokens != 0)
    throw ShapeError("mean_pool_rows: row count not divisible by token count");
  const std::size_t b = va.dim(0) / tokens, d = va.dim(1);
  const double inv = 1.0 / static_cast<double>(tokens);
  Tensor out({b, d});
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t ti = 0; ti < tokens; ++ti)
      for (std::size_t j = 0; j < d; ++j)
        out[bi * d + j] += va[(bi * tokens + ti) * d + j] * inv;
  const bool ng = t.needs_grad(a);
  Var o = t.emplace(std::move(out), ng, "mean_pool_rows");
  if (!ng) return o;
  const int ai = a.idx, oi = o.idx;
  t.set_backfn(o, [ai, oi, b, tokens, d, inv](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    Tensor& ga = tt.grad_buffer(Var{ai});
    for (std::size_t bi = 0; bi < b; ++bi)
      for (std::size_t ti = 0; ti < tokens; ++ti)
        for (std::size_t j = 0; j < d; ++j)
          ga[(bi * tokens + ti) * d + j] += gy[bi * d + j] * inv;
  });
  return o;
}

// ------------------------------------------- normalization / regularization

Var softmax_rows(Tape& t, Var a) {
  const Tensor& va = t.value(a);
  require_rank2(va, "softmax_rows");
  const std::size_t m = va.dim(0), n = va.dim(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    CMapA xr = carr(va.data() + i * n, n);
    MapA outr = arr(out.data() + i * n, n);
    outr = (xr - xr.maxCoeff()).exp();
    outr /= outr.sum();
  }
  const bool ng = t.needs_grad(a);
  Var o = t.emplace(std::move(out), ng, "softmax_rows");
  if (!ng) return o;
  const int ai = a.idx, oi = o.idx;
  t.set_backfn(o, [ai, oi, m, n](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    const Tensor& s = tt.value(Var{oi});
    Tensor& ga = tt.grad_buffer(Var{ai});
    for (std::size_t i = 0; i < m; ++i) {
      CMapA gyr = carr(gy.data() + i * n, n);
      CMapA sr = carr(s.data() + i * n, n);
      const double dot = (gyr * sr).sum();
      arr(ga.data() + i * n, n) += sr * (gyr - dot);
    }
  });
  return o;
}

Var log_softmax_rows(Tape& t, Var a) {
  const Tensor& va = t.value(a);
  require_rank2(va, "log_softmax_rows");
  const std::size_t m = va.dim(0), n = va.dim(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    CMapA xr = carr(va.data() + i * n, n);
    const double mx = xr.maxCoeff();
    const double lse = mx + std::log((xr - mx).exp().sum());
    arr(out.data() + i * n, n) = xr - lse;
  }
  const bool ng = t.needs_grad(a);
  Var o = t.emplace(std::move(out), ng, "log_softmax_rows");
  if (!ng) return o;
  const int ai = a.idx, oi = o.idx;
  t.set_backfn(o, [ai, oi, m, n](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    const Tensor& ls = tt.value(Var{oi});
    Tensor& ga = tt.grad_buffer(Var{ai});
    for (std::size_t i = 0; i < m; ++i) {
      CMapA gyr = carr(gy.data() + i * n, n);
      CMapA lsr = carr(ls.data() + i * n, n);
      const double gsum = gyr.sum();
      arr(ga.data() + i * n, n) += gyr - lsr.exp() * gsum;
    }
  });
  return o;
}

Var l2_normalize_rows(Tape& t, Var a) {
  const Tensor& va = t.value(a);
  require_rank2(va, "l2_normalize_rows");
  const std::size_t m = va.dim(0), n = va.dim(1);
  Tensor out({m, n});
  auto norms = std::make_shared<std::vector<double>>(m);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += va[i * n + j] * va[i * n + j];
    const double r = std::sqrt(s);
    if (r < 1e-12) throw ContractError("l2_normalize_rows: zero row cannot be normalized");
    (*norms)[i] = r;
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = va[i * n + j] / r;
  }
  const bool ng = t.needs_grad(a);
  Var o = t.emplace(std::move(out), ng, "l2_normalize_rows");
  if (!ng) return o;
  const int ai = a.idx, oi = o.idx;
  t.set_backfn(o, [ai, oi, m, n, norms](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    const Tensor& y = tt.value(Var{oi});
    Tensor& ga = tt.grad_buffer(Var{ai});
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += gy[i * n + j] * y[i * n + j];
      const double inv = 1.0 / (*norms)[i];
      for (std::size_t j = 0; j < n; ++j)
        ga[i * n + j] += (gy[i * n + j] - y[i * n + j] * dot) * inv;
    }
  });
  return o;
}

Var cosine_similarity_matrix(Tape& t, Var a, Var b) {
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  require_rank2(va, "cosine_similarity_matrix lhs");
  require_rank2(vb, "cosine_similarity_matrix rhs");
  if (va.dim(1) != vb.dim(1))
    throw ShapeError("cosine_similarity_matrix: feature dims differ, " + va.shape_str() + " vs " +
                     vb.shape_str());
  return matmul(t, l2_normalize_rows(t, a), transpose(t, l2_normalize_rows(t, b)));
}

Var layer_norm(Tape& t, Var a, Var gamma, Var beta, double eps) {
  const Tensor& va = t.value(a);
  const Tensor& vg = t.value(gamma);
  const Tensor& vb = t.value(beta);
  require_rank2(va, "layer_norm");
  if (vg.rank() != 1 || vb.rank() != 1 || vg.dim(0) != va.dim(1) || vb.dim(0) != va.dim(1))
    throw ShapeError("layer_norm: gamma/beta must be rank-1 of the feature width");
  const std::size_t m = va.dim(0), n = va.dim(1);
  Tensor out({m, n});
  auto xhat = std::make_shared<Tensor>(Tensor({m, n}));
  auto inv_std = std::make_shared<std::vector<double>>(m);
  CMapA garr(vg.data(), static_cast<Eigen::Index>(n));
  CMapA barr(vb.data(), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < m; ++i) {
    CMapA xr = carr(va.data() + i * n, n);
    const double mean = xr.mean();
    const double var = (xr - mean).square().sum() / static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = inv;
    MapA xh = arr(xhat->data() + i * n, n);
    xh = (xr - mean) * inv;
    arr(out.data() + i * n, n) = garr * xh + barr;
  }
  const bool ng = t.needs_grad(a) || t.needs_grad(gamma) || t.needs_grad(beta);
  Var o = t.emplace(std::move(out), ng, "layer_norm");
  if (!ng) return o;
  const int ai = a.idx, gi = gamma.idx, bi = beta.idx, oi = o.idx;
  t.set_backfn(o, [ai, gi, bi, oi, m, n, xhat, inv_std](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    const Tensor& vg2 = tt.value(Var{gi});
    if (tt.needs_grad(Var{gi})) {
      Tensor& gg = tt.grad_buffer(Var{gi});
      map(gg, 1, n).row(0) +=
          (cmap(gy, m, n).array() * cmap(*xhat, m, n).array()).matrix().colwise().sum();
    }
    if (tt.needs_grad(Var{bi})) {
      Tensor& gb = tt.grad_buffer(Var{bi});
      map(gb, 1, n).row(0) += cmap(gy, m, n).colwise().sum();
    }
    if (tt.needs_grad(Var{ai})) {
      Tensor& ga = tt.grad_buffer(Var{ai});
      CMapA g2 = carr(vg2.data(), n);
      Eigen::ArrayXd dxh(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < m; ++i) {
        CMapA gyr = carr(gy.data() + i * n, n);
        CMapA xhr = carr(xhat->data() + i * n, n);
        dxh = gyr * g2;
        const double mean_dxhat = dxh.mean();
        const double mean_dxhat_xhat = (dxh * xhr).mean();
        arr(ga.data() + i * n, n) += (*inv_std)[i] * (dxh - mean_dxhat - xhr * mean_dxhat_xhat);
      }
    }
  });
  return o;
}

Var batch_norm_conv(Tape& t, Var a, Var gamma, Var beta, Tensor& running_mean,
                    Tensor& running_var, bool training, double momentum, double eps) {
  const Tensor& va = t.value(a);
  if (va.rank() != 3) throw ShapeError("batch_norm_conv: expected (B, C, L), got " + va.shape_str());
  const std::size_t b = va.dim(0), c = va.dim(1), l = va.dim(2);
  const Tensor& vg = t.value(gamma);
  const Tensor& vb = t.value(beta);
  if (vg.rank() != 1 || vg.dim(0) != c || vb.rank() != 1 || vb.dim(0) != c)
    throw ShapeError("batch_norm_conv: gamma/beta must be rank-1 of C");
  if (running_mean.rank() != 1 || running_mean.dim(0) != c || running_var.rank() != 1 ||
      running_var.dim(0) != c)
    throw ShapeError("batch_norm_conv: running stats must be rank-1 of C");

  const std::size_t per_c = b * l;
  Tensor out({b, c, l});
  auto xhat = std::make_shared<Tensor>(Tensor({b, c, l}));
  auto inv_std = std::make_shared<std::vector<double>>(c);

  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean, var;
    if (training) {
      mean = 0.0;
      for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t j = 0; j < l; ++j) mean += va[(bi * c + ch) * l + j];
      mean /= static_cast<double>(per_c);
      var = 0.0;
      for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t j = 0; j < l; ++j) {
          const double d = va[(bi * c + ch) * l + j] - mean;
          var += d * d;
        }
      var /= static_cast<double>(per_c);
      running_mean[ch] = momentum * running_mean[ch] + (1.0 - momentum) * mean;
      running_var[ch] = momentum * running_var[ch] + (1.0 - momentum) * var;
    } else {
      mean = running_mean[ch];
      var = running_var[ch];
    }
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[ch] = inv;
    for (std::size_t bi = 0; bi < b; ++bi)
      for (std::size_t j = 0; j < l; ++j) {
        const std::size_t idx = (bi * c + ch) * l + j;
        const double xh = (va[idx] - mean) * inv;
        (*xhat)[idx] = xh;
        out[idx] = vg[ch] * xh + vb[ch];
      }
  }
  const bool ng = t.needs_grad(a) || t.needs_grad(gamma) || t.needs_grad(beta);
  Var o = t.emplace(std::move(out), ng, "batch_norm_conv");
  if (!ng) return o;
  const int ai = a.idx, gi = gamma.idx, bi2 = beta.idx, oi = o.idx;
  t.set_backfn(o, [ai, gi, bi2, oi, b, c, l, xhat, inv_std, training](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    const Tensor& vg2 = tt.value(Var{gi});
    const std::size_t per_c = b * l;
    if (tt.needs_grad(Var{gi})) {
      Tensor& gg = tt.grad_buffer(Var{gi});
      for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t j = 0; j < l; ++j) {
            const std::size_t idx = (bi * c + ch) * l + j;
            gg[ch] += gy[idx] * (*xhat)[idx];
          }
    }
    if (tt.needs_grad(Var{bi2})) {
      Tensor& gb = tt.grad_buffer(Var{bi2});
      for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t j = 0; j < l; ++j) gb[ch] += gy[(bi * c + ch) * l + j];
    }
    if (tt.needs_grad(Var{ai})) {
      Tensor& ga = tt.grad_buffer(Var{ai});
      if (training) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t bi = 0; bi < b; ++bi)
            for (std::size_t j = 0; j < l; ++j) {
              const std::size_t idx = (bi * c + ch) * l + j;
              const double dxh = gy[idx] * vg2[ch];
              mean_d += dxh;
              mean_dx += dxh * (*xhat)[idx];
            }
          mean_d /= static_cast<double>(per_c);
          mean_dx /= static_cast<double>(per_c);
          for (std::size_t bi = 0; bi < b; ++bi)
            for (std::size_t j = 0; j < l; ++j) {
              const std::size_t idx = (bi * c + ch) * l + j;
              const double dxh = gy[idx] * vg2[ch];
              ga[idx] += (*inv_std)[ch] * (dxh - mean_d - (*xhat)[idx] * mean_dx);
            }
        }
      } else {
        for (std::size_t bi = 0; bi < b; ++bi)
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t j = 0; j < l; ++j) {
              const std::size_t idx = (bi * c + ch) * l + j;
              ga[idx] += gy[idx] * vg2[ch] * (*inv_std)[ch];
            }
      }
    }
  });
  return o;
}

Var dropout(Tape& t, Var a, double rate, Prng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must lie in [0, 1)");
  if (!training || rate == 0.0) return a;
  const Tensor& va = t.value(a);
  const double keep = 1.0 - rate;
  const double inv_keep = 1.0 / keep;
  // The mask is a splitmix64 stream seeded by a single parent draw: the
  // parent engine advances by exactly one u64 per call regardless of tensor
  // size, and the hash is an order of magnitude cheaper than an engine draw
  // per element. keep < 1, so the 53-bit threshold stays below 2^53.
  std::uint64_t s = rng.next_u64();
  const std::uint64_t thr = static_cast<std::uint64_t>(keep * 9007199254740992.0);  // keep * 2^53
  auto mask = std::make_shared<std::vector<double>>(va.numel());
  Tensor out = va;
  double* op = out.data();
  double* mp = mask->data();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    const double m = (z >> 11) < thr ? inv_keep : 0.0;
    mp[i] = m;
    op[i] *= m;
  }
  const bool ng = t.needs_grad(a);
  Var o = t.emplace(std::move(out), ng, "dropout");
  if (!ng) return o;
  const int ai = a.idx, oi = o.idx;
  t.set_backfn(o, [ai, oi, mask](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    Tensor& ga = tt.grad_buffer(Var{ai});
    arr(ga) += carr(gy) * carr(mask->data(), mask->size());
  });
  return o;
}

// ----------------------------------------------------------- conv stack

Var conv1d(Tape& t, Var a, Var w, Var bias) {
  const Tensor& va = t.value(a);
  const Tensor& vw = t.value(w);
  const Tensor& vb = t.value(bias);
  if (va.rank() != 3) throw ShapeError("conv1d: input must be (B, Cin, L), got " + va.shape_str());
  if (vw.rank() != 3) throw ShapeError("conv1d: weight must be (Cout, Cin, K), got " + vw.shape_str());
  const std::size_t b = va.dim(0), cin = va.dim(1), l = va.dim(2);
  const std::size_t cout = vw.dim(0), k = vw.dim(2);
  if (vw.dim(1) != cin) throw ShapeError("conv1d: channel mismatch");
  if (vb.rank() != 1 || vb.dim(0) != cout) throw ShapeError("conv1d: bias must be rank-1 of Cout");
  if (k % 2 == 0 || k > l) throw ShapeError("conv1d: kernel must be odd and fit the length");
  const std::size_t pad = (k - 1) / 2;

  // im2col: col(b*L + t, ci*K + j) = x(b, ci, t + j - pad), zero padded.
  auto col = std::make_shared<Tensor>(Tensor({b * l, cin * k}));
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t ti = 0; ti < l; ++ti) {
      const std::size_t row = bi * l + ti;
      for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t j = 0; j < k; ++j) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(ti + j) -
                                     static_cast<std::ptrdiff_t>(pad);
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(l)) continue;
          (*col)[row * cin * k + ci * k + j] =
              va[(bi * cin + ci) * l + static_cast<std::size_t>(src)];
        }
    }

  // out2d = col * W^T, W viewed as (Cout, Cin*K).
  Tensor out2d({b * l, cout});
  map(out2d, b * l, cout).noalias() =
      cmap(*col, b * l, cin * k) * cmap(vw, cout, cin * k).transpose();

  Tensor out({b, cout, l});
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t ti = 0; ti < l; ++ti)
        out[(bi * cout + co) * l + ti] = out2d[(bi * l + ti) * cout + co] + vb[co];

  const bool ng = t.needs_grad(a) || t.needs_grad(w) || t.needs_grad(bias);
  Var o = t.emplace(std::move(out), ng, "conv1d");
  if (!ng) return o;
  const int ai = a.idx, wi = w.idx, bi2 = bias.idx, oi = o.idx;
  t.set_backfn(o, [ai, wi, bi2, oi, b, cin, cout, l, k, pad, col](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    const Tensor& vw2 = tt.value(Var{wi});
    Tensor gy2d({b * l, cout});
    for (std::size_t bi = 0; bi < b; ++bi)
      for (std::size_t co = 0; co < cout; ++co)
        for (std::size_t ti = 0; ti < l; ++ti)
          gy2d[(bi * l + ti) * cout + co] = gy[(bi * cout + co) * l + ti];

    if (tt.needs_grad(Var{bi2})) {
      Tensor& gb = tt.grad_buffer(Var{bi2});
      for (std::size_t r = 0; r < b * l; ++r)
        for (std::size_t co = 0; co < cout; ++co) gb[co] += gy2d[r * cout + co];
    }
    if (tt.needs_grad(Var{wi})) {
      Tensor& gw = tt.grad_buffer(Var{wi});
      map(gw, cout, cin * k).noalias() +=
          cmap(gy2d, b * l, cout).transpose() * cmap(*col, b * l, cin * k);
    }
    if (tt.needs_grad(Var{ai})) {
      Tensor gcol({b * l, cin * k});
      map(gcol, b * l, cin * k).noalias() =
          cmap(gy2d, b * l, cout) * cmap(vw2, cout, cin * k);
      Tensor& ga = tt.grad_buffer(Var{ai});
      for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t ti = 0; ti < l; ++ti) {
          const std::size_t row = bi * l + ti;
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t j = 0; j < k; ++j) {
              const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(ti + j) -
                                         static_cast<std::ptrdiff_t>(pad);
              if (src < 0 || src >= static_cast<std::ptrdiff_t>(l)) continue;
              ga[(bi * cin + ci) * l + static_cast<std::size_t>(src)] +=
                  gcol[row * cin * k + ci * k + j];
            }
        }
    }
  });
  return o;
}

Var maxpool1d(Tape& t, Var a, std::size_t pool) {
  const Tensor& va = t.value(a);
  if (va.rank() != 3) throw ShapeError("maxpool1d: input must be (B, C, L), got " + va.shape_str());
  if (pool == 0) throw ContractError("maxpool1d: pool must be positive");
  const std::size_t b = va.dim(0), c = va.dim(1), l = va.dim(2);
  const std::size_t lo = l / pool;  // tail shorter than `pool` is dropped
  if (lo == 0) throw ShapeError("maxpool1d: length shorter than pool window");
  Tensor out({b, c, lo});
  auto arg = std::make_shared<std::vector<std::size_t>>(b * c * lo);
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t ti = 0; ti < lo; ++ti) {
        std::size_t best = (bi * c + ch) * l + ti * pool;
        for (std::size_t j = 1; j < pool; ++j) {
          const std::size_t idx = (bi * c + ch) * l + ti * pool + j;
          if (va[idx] > va[best]) best = idx;
        }
        (*arg)[(bi * c + ch) * lo + ti] = best;
        out[(bi * c + ch) * lo + ti] = va[best];
      }
  const bool ng = t.needs_grad(a);
  Var o = t.emplace(std::move(out), ng, "maxpool1d");
  if (!ng) return o;
  const int ai = a.idx, oi = o.idx;
  t.set_backfn(o, [ai, oi, arg](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    Tensor& ga = tt.grad_buffer(Var{ai});
    for (std::size_t i = 0; i < gy.numel(); ++i) ga[(*arg)[i]] += gy[i];
  });
  return o;
}

Var global_avg_pool(Tape& t, Var a) {
  const Tensor& va = t.value(a);
  if (va.rank() != 3) throw ShapeError("global_avg_pool: input must be (B, C, L)");
  const std::size_t b = va.dim(0), c = va.dim(1), l = va.dim(2);
  const double inv = 1.0 / static_cast<double>(l);
  Tensor out({b, c});
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t j = 0; j < l; ++j) s += va[(bi * c + ch) * l + j];
      out[bi * c + ch] = s * inv;
    }
  const bool ng = t.needs_grad(a);
  Var o = t.emplace(std::move(out), ng, "global_avg_pool");
  if (!ng) return o;
  const int ai = a.idx, oi = o.idx;
  t.set_backfn(o, [ai, oi, b, c, l, inv](Tape& tt) {
    const Tensor& gy = tt.grad(Var{oi});
    Tensor& ga = tt.grad_buffer(Var{ai});
    for (std::size_t bi = 0; bi < b; ++bi)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t j = 0; j < l; ++j)
          ga[(bi * c + ch) * l + j] += gy[bi * c + ch] * inv;
  });
  return o;
}

// ----------------------------------------------------------------- losses

Var mse_loss(Tape& t, Var pred, Var target) {
  const Tensor& vp = t.value(pred);
  const Tensor& vt = t.value(target);
  require_same_shape(vp, vt, "mse_loss");
  if (vp.numel() == 0) throw ShapeError("mse_loss: empty tensors");
  const double inv = 1.0 / static_cast<double>(vp.numel());
  double s = 0.0;
  for (std::size_t i = 0; i < vp.numel(); ++i) {
    const double d = vp[i] - vt[i];
    s += d * d;
  }
  const bool ng = t.needs_grad(pred) || t.needs_grad(target);
  Var o = t.emplace(Tensor::scalar(s * inv), ng, "mse_loss");
  if (!ng) return o;
  const int pi = pred.idx, ti = target.idx, oi = o.idx;
  t.set_backfn(o, [pi, ti, oi, inv](Tape& tt) {
    const double g = tt.grad(Var{oi})[0];
    const Tensor& vp2 = tt.value(Var{pi});
    const Tensor& vt2 = tt.value(Var{ti});
    if (tt.needs_grad(Var{pi})) {
      Tensor& gp = tt.grad_buffer(Var{pi});
      for (std::size_t i = 0; i < gp.numel(); ++i)
        gp[i] += 2.0 * (vp2[i] - vt2[i]) * inv * g;
    }
    if (tt.needs_grad(Var{ti})) {
      Tensor& gt = tt.grad_buffer(Var{ti});
      for (std::size_t i = 0; i < gt.numel(); ++i)
        gt[i] -= 2.0 * (vp2[i] - vt2[i]) * inv * g;
    }
  });
  return o;
}

Var cross_entropy_loss(Tape& t, Var logits, const std::vector<std::size_t>& labels) {
  const Tensor& vl = t.value(logits);
  require_rank2(vl, "cross_entropy_loss");
  const std::size_t b = vl.dim(0), k = vl.dim(1);
  if (labels.size() != b)
    throw ShapeError("cross_entropy_loss: label count does not match batch size");
  for (std::size_t lab : labels)
    if (lab >= k) throw ShapeError("cross_entropy_loss: label out of range");

  auto probs = std::make_shared<Tensor>(Tensor({b, k}));
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double mx = vl[i * k];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, vl[i * k + j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double e = std::exp(vl[i * k + j] - mx);
      (*probs)[i * k + j] = e;
      denom += e;
    }
    for (std::size_t j = 0; j < k; ++j) (*probs)[i * k + j] /= denom;
    total += (mx + std::log(denom)) - vl[i * k + labels[i]];
  }
  const double inv = 1.0 / static_cast<double>(b);
  const bool ng = t.needs_grad(logits);
  Var o = t.emplace(Tensor::scalar(total * inv), ng, "cross_entropy_loss");
  if (!ng) return o;
  const int li = logits.idx, oi = o.idx;
  auto labs = std::make_shared<std::vector<std::size_t>>(labels);
  t.set_backfn(o, [li, oi, b, k, inv, probs, labs](Tape& tt) {
    const double g = tt.grad(Var{oi})[0] * inv;
    Tensor& gl = tt.grad_buffer(Var{li});
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        double p = (*probs)[i * k + j];
        if (j == (*labs)[i]) p -= 1.0;
        gl[i * k + j] += p * g;
      }
  });
  return o;
}

}  // namespace pssl
