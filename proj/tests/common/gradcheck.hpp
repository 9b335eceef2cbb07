#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "pssl/tensor.hpp"

namespace pssl::test {

// Scalar-loss builder over a fixed set of leaf tensors. The builder must
// reconstruct the whole graph (tape, RNG streams, running statistics) from
// scratch on every call so that repeated evaluations at perturbed leaves
// see identical stochastic choices. When `grads` is non-null the builder
// runs backward and appends d(loss)/d(leaf) for every leaf, in order.
using GradBuilder = std::function<double(const std::vector<Tensor>&, std::vector<Tensor>*)>;

struct GradCheckReport {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double worst_rel = 0.0;  // elements judged by relative error
  double worst_abs = 0.0;  // elements judged by absolute error
  std::string first_failure;
  bool ok() const noexcept { return failed == 0; }
};

// Central finite differences against reverse-mode gradients. Elements with
// |analytic| >= `small` must agree to rel_tol relative error; smaller ones
// to abs_tol absolute error (a relative test is meaningless near zero).
inline GradCheckReport grad_check(std::vector<Tensor> leaves, const GradBuilder& f,
                                  double h = 1e-5, double rel_tol = 1e-4,
                                  double abs_tol = 1e-7, double small = 1e-4) {
  GradCheckReport rep;
  std::vector<Tensor> grads;
  f(leaves, &grads);
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    for (std::size_t e = 0; e < leaves[li].numel(); ++e) {
      const double saved = leaves[li][e];
      leaves[li][e] = saved + h;
      const double fp = f(leaves, nullptr);
      leaves[li][e] = saved - h;
      const double fm = f(leaves, nullptr);
      leaves[li][e] = saved;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = grads[li][e];
      ++rep.checked;
      bool pass = false;
      if (std::abs(an) < small) {
        const double err = std::abs(fd - an);
        rep.worst_abs = std::max(rep.worst_abs, err);
        pass = err <= abs_tol;
      } else {
        const double err = std::abs(fd - an) / std::abs(an);
        rep.worst_rel = std::max(rep.worst_rel, err);
        pass = err <= rel_tol;
      }
      if (!pass && rep.failed++ == 0) {
        rep.first_failure = "leaf " + std::to_string(li) + " elem " + std::to_string(e) +
                            ": analytic " + std::to_string(an) + " vs central diff " +
                            std::to_string(fd);
      }
    }
  }
  return rep;
}

}  // namespace pssl::test
