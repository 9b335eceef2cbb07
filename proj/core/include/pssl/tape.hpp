#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "pssl/prng.hpp"
#include "pssl/tensor.hpp"

namespace pssl {

// Handle into a Tape. Only valid for the tape that produced it.
struct Var {
  int idx = -1;
  bool valid() const noexcept { return idx >= 0; }
};

// Reverse-mode autodiff tape. Nodes are appended in construction order,
// which is a topological order by construction, so backward() is a single
// reverse sweep that visits each reachable node exactly once. Every op
// verifies its output is finite (NaN/Inf raise NumericsError). With equal
// seeds and inputs, forward values and gradients are bit-identical from
// run to run; everything is single threaded.
class Tape {
 public:
  // Differentiable leaf (model parameter binding or network input).
  Var leaf(Tensor value);
  // Non-differentiable leaf (targets, masks, positional tables).
  Var constant(Tensor value);

  const Tensor& value(Var v) const;
  // Gradient accumulated for v by the last backward(); zeros if v was not
  // reached.
  const Tensor& grad(Var v) const;

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. `loss` must
  // be scalar (rank 0 or a single element).
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

  // --- internal plumbing used by the op implementations ---
  struct Node {
    Tensor value;
    Tensor grad;
    bool grad_alloc = false;
    bool needs_grad = false;
    std::function<void(Tape&)> backfn;  // empty for leaves/constants
  };
  Var emplace(Tensor value, bool needs_grad, const char* where);
  // Registers the reverse closure for v; the closure may capture v's index.
  void set_backfn(Var v, std::function<void(Tape&)> backfn);
  Tensor& grad_buffer(Var v);  // allocates zeros on first touch
  bool needs_grad(Var v) const;
  bool grad_allocated(Var v) const { return nodes_[static_cast<std::size_t>(v.idx)].grad_alloc; }

 private:
  std::vector<Node> nodes_;
  Tensor zero_scalar_ = Tensor::scalar(0.0);
};

// ---- elementwise and arithmetic ----
Var add(Tape& t, Var a, Var b);        // same shape, or (m,n) + (n) row broadcast
Var sub(Tape& t, Var a, Var b);        // same shape
Var mul(Tape& t, Var a, Var b);        // Hadamard, same shape
Var scale(Tape& t, Var a, double c);
Var shift(Tape& t, Var a, double c);
Var relu(Tape& t, Var a);
Var gelu(Tape& t, Var a);              // exact form, x * Phi(x)
Var tanh_op(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
Var exp_op(Tape& t, Var a);
Var log_op(Tape& t, Var a);

// ---- linear algebra ----
Var matmul(Tape& t, Var a, Var b);     // (m,k) x (k,n)
Var transpose(Tape& t, Var a);         // 2-D
// Batched matmul over `batch` stacked blocks: a is (batch*m, k); b is
// (batch*k, n), or (batch*n, k) when transpose_b. Result (batch*m, n).
Var bmm(Tape& t, Var a, Var b, std::size_t batch, std::size_t m, std::size_t k,
        std::size_t n, bool transpose_b);

// ---- shape and structure ----
Var reshape(Tape& t, Var a, std::vector<std::size_t> shape);
Var concat_rows(Tape& t, Var a, Var b);
Var slice_rows(Tape& t, Var a, std::size_t row0, std::size_t row1);  // rows [row0, row1)
// (B*T, H*D) -> (B*H*T, D) and its exact inverse.
Var split_heads(Tape& t, Var a, std::size_t b, std::size_t tokens, std::size_t heads);
Var merge_heads(Tape& t, Var a, std::size_t b, std::size_t tokens, std::size_t heads);

// ---- reductions ----
Var sum_all(Tape& t, Var a);
Var mean_all(Tape& t, Var a);
Var sum_rows(Tape& t, Var a);          // (m,n) -> (m)
// (B*T, d) -> (B, d), mean over each block of T consecutive rows.
Var mean_pool_rows(Tape& t, Var a, std::size_t tokens);

// ---- normalization and regularization ----
Var softmax_rows(Tape& t, Var a);
Var log_softmax_rows(Tape& t, Var a);
Var l2_normalize_rows(Tape& t, Var a);
// Pairwise cosine similarities: (m,d) x (p,d) -> (m,p). Composition of
// l2_normalize_rows and matmul, so gradients come for free.
Var cosine_similarity_matrix(Tape& t, Var a, Var b);
// Per-row layer norm with learnable gamma/beta of shape (n).
Var layer_norm(Tape& t, Var a, Var gamma, Var beta, double eps = 1e-5);
// Per-channel batch norm over (B, C, L); updates running stats in
// training mode with the given momentum. Eval mode normalizes with the
// running stats.
Var batch_norm_conv(Tape& t, Var a, Var gamma, Var beta, Tensor& running_mean,
                    Tensor& running_var, bool training, double momentum = 0.99,
                    double eps = 1e-5);
// Inverted dropout: kept units are scaled by 1/(1-rate) during training;
// identity in eval mode.
Var dropout(Tape& t, Var a, double rate, Prng& rng, bool training);

// ---- convolution stack (tensors laid out (B, C, L)) ----
// Same-padded 1-D convolution, stride 1, odd kernel. w is (Cout, Cin, K),
// bias (Cout).
Var conv1d(Tape& t, Var a, Var w, Var bias);
Var maxpool1d(Tape& t, Var a, std::size_t pool = 2);
Var global_avg_pool(Tape& t, Var a);  // (B, C, L) -> (B, C)

// ---- losses ----
Var mse_loss(Tape& t, Var pred, Var target);  // mean over all elements
// Mean of -log softmax(logits)[label]; logits (B, K).
Var cross_entropy_loss(Tape& t, Var logits, const std::vector<std::size_t>& labels);

}  // namespace pssl
