#include "pssl/tensor.hpp"

#include <Eigen/Core>
#include <cmath>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "pssl/errors.hpp"

namespace pssl {

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
  std::size_t n = 1;
  for (std::size_t d : shape_) n *= d;
  data_.assign(n, fill);
}

Tensor Tensor::scalar(double v) {
  Tensor t(std::vector<std::size_t>{});
  t.data_.assign(1, v);
  return t;
}

Tensor Tensor::from_row(const std::vector<double>& values) {
  Tensor t({values.size()});
  t.data_ = values;
  return t;
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t m = rows.size();
  const std::size_t n = m == 0 ? 0 : rows.front().size();
  Tensor t({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    if (rows[i].size() != n)
      throw ShapeError("from_rows: ragged input at row " + std::to_string(i));
    for (std::size_t j = 0; j < n; ++j) t.data_[i * n + j] = rows[i][j];
  }
  return t;
}

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= shape_.size())
    throw ShapeError("dim index " + std::to_string(i) + " out of range for rank " +
                     std::to_string(shape_.size()));
  return shape_[i];
}

double& Tensor::at(std::size_t i, std::size_t j) {
  return data_[i * shape_[1] + j];
}
double Tensor::at(std::size_t i, std::size_t j) const {
  return data_[i * shape_[1] + j];
}
double& Tensor::at(std::size_t i, std::size_t j, std::size_t k) {
  return data_[(i * shape_[1] + j) * shape_[2] + k];
}
double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
  return data_[(i * shape_[1] + j) * shape_[2] + k];
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) const {
  std::size_t n = 1;
  for (std::size_t d : new_shape) n *= d;
  if (n != numel())
    throw ShapeError("reshape: cannot view " + shape_str() + " as requested shape");
  Tensor t = *this;
  t.shape_ = std::move(new_shape);
  return t;
}

bool Tensor::all_finite() const noexcept {
  // x - x is 0 for finite x and NaN for NaN/±Inf; vectorizes, unlike a
  // branchy std::isfinite loop. Requires IEEE semantics (no -ffast-math).
  Eigen::Map<const Eigen::ArrayXd> a(data_.data(), static_cast<Eigen::Index>(data_.size()));
  return ((a - a) == 0.0).all();
}

void Tensor::fill(double v) { data_.assign(data_.size(), v); }

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ", ";
    os << shape_[i];
  }
  os << ')';
  return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(where) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
}

void require_finite(const Tensor& t, const char* where) {
  if (!t.all_finite())
    throw NumericsError(std::string(where) + ": non-finite value produced");
}

void tune_allocator() noexcept {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace pssl
