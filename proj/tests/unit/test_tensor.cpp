#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "pssl/errors.hpp"
#include "pssl/tensor.hpp"

using pssl::Tensor;

TEST_CASE("construction, shape queries and flat access") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.rank() == 2);
  CHECK(t.dim(0) == 2);
  CHECK(t.dim(1) == 3);
  CHECK(t.numel() == 6);
  for (std::size_t i = 0; i < t.numel(); ++i) CHECK(t[i] == 1.5);
  t[4] = -2.0;
  CHECK(t.at(1, 1) == -2.0);

  Tensor s = Tensor::scalar(3.25);
  CHECK(s.rank() == 0);
  CHECK(s.numel() == 1);
  CHECK(s[0] == 3.25);
}

TEST_CASE("from_row and from_rows lay data out row-major") {
  Tensor r = Tensor::from_row({1, 2, 3});
  CHECK(r.rank() == 1);
  CHECK(r.dim(0) == 3);
  CHECK(r[2] == 3);

  Tensor m = Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}});
  CHECK(m.rank() == 2);
  CHECK(m.dim(0) == 3);
  CHECK(m.dim(1) == 2);
  CHECK(m.at(0, 1) == 2);
  CHECK(m.at(2, 0) == 5);
  CHECK(m[3] == 4);  // flat index walks rows
}

TEST_CASE("ragged from_rows is rejected") {
  CHECK_THROWS_AS(Tensor::from_rows({{1, 2}, {3}}), pssl::ShapeError);
}

TEST_CASE("reshaped preserves data and checks element count") {
  Tensor m = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
  Tensor r = m.reshaped({3, 2});
  CHECK(r.dim(0) == 3);
  CHECK(r.at(1, 0) == 3);
  CHECK(r.at(2, 1) == 6);
  CHECK_THROWS_AS(m.reshaped({4, 2}), pssl::ShapeError);
}

TEST_CASE("three-index at addresses rank-3 tensors") {
  Tensor t({2, 3, 4}, 0.0);
  t.at(1, 2, 3) = 7.0;
  CHECK(t[1 * 12 + 2 * 4 + 3] == 7.0);
  CHECK(t.at(1, 2, 3) == 7.0);
}

TEST_CASE("all_finite catches NaN and infinities anywhere in the buffer") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  Tensor t({2, 5}, 0.0);
  CHECK(t.all_finite());
  for (std::size_t pos : {std::size_t{0}, std::size_t{4}, std::size_t{9}}) {
    Tensor u = t;
    u[pos] = nan;
    CHECK_FALSE(u.all_finite());
    u[pos] = inf;
    CHECK_FALSE(u.all_finite());
    u[pos] = -inf;
    CHECK_FALSE(u.all_finite());
  }
}

TEST_CASE("require helpers throw typed errors") {
  Tensor a({2, 2});
  Tensor b({2, 3});
  CHECK_THROWS_AS(pssl::require_same_shape(a, b, "test"), pssl::ShapeError);
  CHECK_NOTHROW(pssl::require_same_shape(a, a, "test"));

  Tensor c({3});
  c[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(pssl::require_finite(c, "test"), pssl::NumericsError);
  c[1] = 0.0;
  CHECK_NOTHROW(pssl::require_finite(c, "test"));
}

TEST_CASE("fill and same_shape") {
  Tensor a({4}, 1.0);
  a.fill(9.0);
  for (std::size_t i = 0; i < 4; ++i) CHECK(a[i] == 9.0);
  CHECK(a.same_shape(Tensor({4})));
  CHECK_FALSE(a.same_shape(Tensor({4, 1})));
}

TEST_CASE("shape_str is human readable") {
  CHECK(Tensor({2, 3}).shape_str() == "(2, 3)");
  CHECK(Tensor::scalar(0.0).shape_str() == "()");
}
